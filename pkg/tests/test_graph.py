# -*- coding: utf-8 -*-

"""Tests for skeleton topologies and the graph propagation layers"""

import json
import os
import shutil
import tempfile
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from dynstg_mamba.exceptions import ConfigError, ContractError, ShapeError
from dynstg_mamba.graph import (DFSTGNNParams, DynamicFilterParams,
                                LightDFSTGNNParams, SkeletonTopology,
                                build_block_adjacency,
                                build_dynamic_adjacency,
                                dense_block_adjacency, df_stgnn_forward,
                                light_df_stgnn_forward)
from dynstg_mamba.tensor import parameter

from . import oracles


class TestSkeletonTopology(unittest.TestCase):
    """Tests for SkeletonTopology"""

    def setUp(self):
        self.tmp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp_dir)

    def test_000_static_adjacency(self):
        """The gait skeleton is symmetric with self loops"""
        matrix = SkeletonTopology.gait().static_adjacency()
        assert_array_equal(matrix, matrix.T)
        assert_array_equal(np.diag(matrix), np.ones(5))
        self.assertEqual(matrix[0, 1], 1.0)
        self.assertEqual(matrix[1, 3], 0.0)

    def test_001_normalized_adjacency(self):
        """D^-1/2 A D^-1/2 of the gait skeleton"""
        topology = SkeletonTopology.gait()
        assert_allclose(topology.normalized_adjacency(),
                        oracles.symmetric_normalized(
                            topology.static_adjacency()), rtol=1e-15)

    def test_002_invalid_edges(self):
        """Edges must connect existing joints"""
        with self.assertRaises(ConfigError):
            SkeletonTopology(3, [(0, 3)])
        with self.assertRaises(ConfigError):
            SkeletonTopology(0, [])
        with self.assertRaises(ConfigError):
            SkeletonTopology.from_dict({"edges": [[0, 1]]})

    def test_003_document_round_trip(self):
        """A topology written to JSON reads back equal"""
        topology = SkeletonTopology(4, [(2, 1), (0, 1), (3, 2)])
        path = os.path.join(self.tmp_dir, "skeleton.json")
        with open(path, "w") as handle:
            json.dump(topology.to_dict(), handle)
        self.assertEqual(SkeletonTopology.from_json(path), topology)
        self.assertEqual(topology.to_dict()["edges"],
                         [[0, 1], [1, 2], [2, 3]])

    def test_004_permuted(self):
        """New joint k of a permuted skeleton is old joint order[k]"""
        topology = SkeletonTopology.gait()
        order = [2, 0, 4, 1, 3]
        old = topology.static_adjacency()
        new = topology.permuted(order).static_adjacency()
        assert_array_equal(new, old[np.ix_(order, order)])


class TestAdjacency(unittest.TestCase):
    """Tests for the dynamic and block adjacency builders"""

    def test_000_uniform_filter_on_complete_pair(self):
        """A zero filter on an all-ones 2x2 adjacency gives 0.5 everywhere"""
        filter = DynamicFilterParams.init(2)
        a_dyn = build_dynamic_adjacency(filter, SkeletonTopology.chain(2))
        assert_array_equal(a_dyn.data, np.full((2, 2), 0.5))

    def test_001_structural_zeros_preserved(self):
        """Missing bones stay at zero for any filter"""
        rng = np.random.default_rng(1)
        filter = DynamicFilterParams(f_base=parameter(rng.normal(size=(3, 3))))
        a_dyn = build_dynamic_adjacency(filter, SkeletonTopology.chain(3))
        self.assertEqual(a_dyn.data[0, 2], 0.0)
        self.assertEqual(a_dyn.data[2, 0], 0.0)
        assert_allclose(a_dyn.data.sum(axis=1), np.ones(3), rtol=1e-15)

    def test_002_dynamic_adjacency_matches_oracle(self):
        """Random filter on a 4-joint chain equals the scalar formula"""
        rng = np.random.default_rng(2)
        topology = SkeletonTopology.chain(4)
        f_base = rng.normal(size=(4, 4))
        a_dyn = build_dynamic_adjacency(
            DynamicFilterParams(f_base=parameter(f_base)), topology)
        assert_allclose(a_dyn.data,
                        oracles.dynamic_adjacency(
                            f_base, topology.static_adjacency()),
                        rtol=1e-13)

    def test_003_single_frame(self):
        """With one frame the block adjacency is the spatial adjacency"""
        a_tilde = np.random.default_rng(3).uniform(size=(3, 3))
        block = build_block_adjacency(a_tilde, np.eye(3), 1)
        assert_array_equal(block.matrix.data, a_tilde)

    def test_004_identity_blocks(self):
        """T=3, J=2 with identity blocks is block tridiagonal"""
        matrix = dense_block_adjacency(np.eye(2), np.eye(2), 3)
        expected = np.kron(np.eye(3) + np.eye(3, k=1) + np.eye(3, k=-1),
                           np.eye(2))
        assert_array_equal(matrix, expected)

    def test_005_block_adjacency_matches_oracle(self):
        """Bitwise equality with the element constructor for small T, J"""
        rng = np.random.default_rng(4)
        for frames in range(1, 7):
            for joints in range(1, 6):
                a_tilde = rng.uniform(size=(joints, joints))
                a_t = rng.uniform(size=(joints, joints))
                block = build_block_adjacency(a_tilde, a_t, frames)
                assert_array_equal(
                    block.matrix.data,
                    oracles.block_adjacency(a_tilde, a_t, frames))
                if frames > 1:
                    assert_array_equal(block.block(1, 0), a_t.T)

    def test_006_nonzero_pattern(self):
        """Only the diagonal and first off-diagonal blocks are populated"""
        rng = np.random.default_rng(5)
        frames, joints = 4, 3
        matrix = dense_block_adjacency(
            rng.uniform(0.1, 1.0, (joints, joints)),
            rng.uniform(0.1, 1.0, (joints, joints)), frames)
        self.assertEqual(np.count_nonzero(matrix),
                         frames * joints ** 2
                         + 2 * (frames - 1) * joints ** 2)

    def test_007_without_temporal_links(self):
        """Disabling temporal links leaves a block-diagonal matrix"""
        a_tilde = np.random.default_rng(6).uniform(size=(2, 2))
        matrix = dense_block_adjacency(a_tilde, np.eye(2), 3,
                                       temporal_links=False)
        assert_array_equal(matrix, np.kron(np.eye(3), a_tilde))

    def test_008_invalid_blocks(self):
        """T < 1 and non-square blocks are rejected"""
        with self.assertRaises(ContractError):
            build_block_adjacency(np.eye(2), np.eye(2), 0)
        with self.assertRaises(ShapeError):
            build_block_adjacency(np.ones((2, 3)), np.eye(2), 2)
        with self.assertRaises(ShapeError):
            build_block_adjacency(np.eye(2), np.eye(3), 2)


class TestGraphLayers(unittest.TestCase):
    """Tests for df_stgnn_forward and light_df_stgnn_forward"""

    def setUp(self):
        self.rng = np.random.default_rng(0)
        self.topology = SkeletonTopology.gait()

    def test_000_zero_input(self):
        """Zero input with zero biases maps to zero"""
        for layer, forward in ((DFSTGNNParams, df_stgnn_forward),
                               (LightDFSTGNNParams, light_df_stgnn_forward)):
            params = layer.init(5, 3, 4, self.rng)
            params.bias.data = np.zeros(4)
            out = forward(np.zeros((2, 8, 5, 3)), params, self.topology)
            assert_array_equal(out.data, np.zeros((2, 8, 5, 4)))

    def test_001_hand_set_weights(self):
        """T=2, J=2, F=O=1 with hand-set weights equals the scalar loop"""
        topology = SkeletonTopology.chain(2)
        params = LightDFSTGNNParams(
            temporal=parameter([[0.5, 0.25], [0.0, 1.0]]),
            tc_weight=parameter([[[0.2]], [[1.0]], [[-0.3]]]),
            tc_bias=parameter([0.1]),
            weight=parameter([[2.0]]),
            bias=parameter([-0.5]))
        X = np.array([[[[1.0], [-2.0]], [[0.5], [3.0]]]])
        expected = oracles.graph_layer(
            X, oracles.symmetric_normalized(topology.static_adjacency()),
            params.temporal.data, params.tc_weight.data, params.tc_bias.data,
            params.weight.data, params.bias.data)
        out = light_df_stgnn_forward(X, params, topology)
        assert_allclose(out.data, expected, rtol=1e-13, atol=1e-14)

    def test_002_dynamic_layer_matches_oracle(self):
        """Random dynamic layer on a 4-joint chain equals the scalar loop"""
        topology = SkeletonTopology.chain(4)
        params = DFSTGNNParams.init(4, 3, 2, self.rng)
        params.filter.f_base.data = self.rng.normal(size=(4, 4))
        params.temporal.data = self.rng.normal(size=(4, 4))
        params.tc_bias.data = self.rng.normal(size=3)
        X = self.rng.normal(size=(2, 3, 4, 3))
        a_dyn = oracles.dynamic_adjacency(params.filter.f_base.data,
                                          topology.static_adjacency())
        expected = oracles.graph_layer(
            X, a_dyn, params.temporal.data, params.tc_weight.data,
            params.tc_bias.data, params.weight.data, params.bias.data)
        out = df_stgnn_forward(X, params, topology)
        assert_allclose(out.data, expected, rtol=1e-12, atol=1e-13)

    def test_003_output_shape(self):
        """B=2, T=8, J=5, F=3, O=4 gives a 2 x 8 x 5 x 4 output"""
        params = DFSTGNNParams.init(5, 3, 4, self.rng)
        out = df_stgnn_forward(self.rng.normal(size=(2, 8, 5, 3)), params,
                               self.topology)
        self.assertEqual(out.shape, (2, 8, 5, 4))

    def test_004_light_layer_is_smaller(self):
        """The static layer drops exactly the J x J filter"""
        dynamic = DFSTGNNParams.init(5, 3, 4, self.rng)
        light = LightDFSTGNNParams.init(5, 3, 4, self.rng)
        sizes = [sum(p.size for p in layer.parameters())
                 for layer in (dynamic, light)]
        self.assertEqual(sizes[0] - sizes[1], 25)

    def test_005_layers_agree_on_complete_pair(self):
        """On a 2-joint complete graph both normalisations coincide"""
        topology = SkeletonTopology.chain(2)
        dynamic = DFSTGNNParams.init(2, 3, 4, self.rng)
        light = LightDFSTGNNParams(temporal=dynamic.temporal,
                                   tc_weight=dynamic.tc_weight,
                                   tc_bias=dynamic.tc_bias,
                                   weight=dynamic.weight, bias=dynamic.bias)
        X = self.rng.normal(size=(2, 4, 2, 3))
        assert_allclose(df_stgnn_forward(X, dynamic, topology).data,
                        light_df_stgnn_forward(X, light, topology).data,
                        rtol=1e-12, atol=1e-14)

    def test_006_joint_permutation(self):
        """Relabelling joints relabels the outputs of the static layer"""
        params = LightDFSTGNNParams.init(5, 3, 4, self.rng)
        X = self.rng.normal(size=(1, 4, 5, 3))
        order = [3, 1, 4, 0, 2]
        out = light_df_stgnn_forward(X, params, self.topology).data
        permuted = light_df_stgnn_forward(X[:, :, order], params,
                                          self.topology.permuted(order)).data
        assert_allclose(permuted, out[:, :, order], rtol=1e-12, atol=1e-14)

    def test_007_invalid_input(self):
        """Mismatched or non-finite input is rejected"""
        params = DFSTGNNParams.init(5, 3, 4, self.rng)
        with self.assertRaises(ShapeError):
            df_stgnn_forward(np.zeros((1, 4, 4, 3)), params, self.topology)
        with self.assertRaises(ShapeError):
            df_stgnn_forward(np.zeros((4, 5, 3)), params, self.topology)
        X = np.zeros((1, 4, 5, 3))
        X[0, 2, 1, 0] = np.nan
        with self.assertRaises(ContractError):
            df_stgnn_forward(X, params, self.topology)

    def test_008_even_kernel(self):
        """The temporal kernel must have odd size"""
        with self.assertRaises(ConfigError):
            LightDFSTGNNParams.init(5, 3, 4, self.rng, kernel=2)

    def test_009_temporal_adjacency_starts_at_identity(self):
        """A_t and the filter are initialised to identity and zeros"""
        params = DFSTGNNParams.init(5, 3, 4, self.rng)
        assert_array_equal(params.temporal.data, np.eye(5))
        assert_array_equal(params.filter.f_base.data, np.zeros((5, 5)))
        self.assertEqual([name for name, _ in params.named_parameters()],
                         ["temporal", "tc_weight", "tc_bias", "weight",
                          "bias", "filter.f_base"])

    def test_010_dynamic_layer_joint_permutation(self):
        """Relabelling joints, with the filter and A_t permuted alike,
        relabels the outputs of the dynamic layer"""
        for seed in range(5):
            rng = np.random.default_rng(seed)
            params = DFSTGNNParams.init(5, 3, 4, rng)
            params.filter.f_base.data = rng.normal(size=(5, 5))
            params.temporal.data = np.eye(5) + 0.5 * rng.normal(size=(5, 5))
            params.tc_bias.data = rng.normal(size=3)
            order = rng.permutation(5)
            grid = np.ix_(order, order)
            permuted = DFSTGNNParams(
                temporal=parameter(params.temporal.data[grid]),
                tc_weight=params.tc_weight, tc_bias=params.tc_bias,
                weight=params.weight, bias=params.bias,
                filter=DynamicFilterParams(
                    f_base=parameter(params.filter.f_base.data[grid])))
            X = rng.normal(size=(2, 4, 5, 3))
            out = df_stgnn_forward(X, params, self.topology).data
            relabelled = df_stgnn_forward(X[:, :, order], permuted,
                                          self.topology.permuted(order)).data
            assert_allclose(relabelled, out[:, :, order], rtol=1e-11,
                            atol=1e-13)
