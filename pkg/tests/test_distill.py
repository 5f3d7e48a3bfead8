# -*- coding: utf-8 -*-

"""Tests for the distillation losses and the memory bank"""

import math
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from dynstg_mamba.distill import (DistillConfig, LossComponents, MemoryBank,
                                  compute_components, loss_align, loss_intra,
                                  loss_memory, loss_region, loss_task,
                                  memory_update, relation_matrices,
                                  sequence_cross_entropy, total_cgrkd)
from dynstg_mamba.exceptions import ConfigError, ContractError, ShapeError
from dynstg_mamba.graph import SkeletonTopology
from dynstg_mamba.models import ModelConfig, model_forward, model_init
from dynstg_mamba.tensor import Tape, as_tensor, backward, parameter

from . import oracles


def _bank(rows, capacity=256):
    return memory_update(MemoryBank(capacity), np.asarray(rows)[None])


class TestTaskLoss(unittest.TestCase):
    """Tests for loss_task"""

    def test_000_confident_logits(self):
        """A margin of 50 on the true class gives a vanishing loss"""
        logits = np.zeros((2, 3, 4, 2))
        logits[0, ..., 1] = 50.0
        logits[1, ..., 0] = 50.0
        self.assertLess(loss_task(logits, [1, 0]).item(), 1e-10)

    def test_001_uniform_logits(self):
        """Uniform two-class logits cost ln 2"""
        self.assertAlmostEqual(loss_task(np.zeros((2, 3, 4, 2)),
                                         [0, 1]).item(),
                               math.log(2.0), places=14)

    def test_002_matches_oracle(self):
        """Random B=2, T=3, N=2, K=3 equals the averaged scalar
        cross-entropy"""
        logits = np.random.default_rng(0).normal(size=(2, 3, 2, 3))
        labels = [2, 0]
        expected = np.mean([oracles.cross_entropy(list(logits[b, t, j]),
                                                  labels[b])
                            for b in range(2) for t in range(3)
                            for j in range(2)])
        self.assertAlmostEqual(loss_task(logits, labels).item(), expected,
                               places=12)

    def test_003_labels_in_range(self):
        """Labels outside [0, K) are rejected"""
        with self.assertRaises(ContractError):
            loss_task(np.zeros((1, 2, 2, 2)), [2])
        with self.assertRaises(ContractError):
            sequence_cross_entropy(np.zeros((1, 2)), [-1])


class TestRelationalLosses(unittest.TestCase):
    """Tests for the alignment and relational losses"""

    def setUp(self):
        self.rng = np.random.default_rng(1)

    def test_000_align_identity_and_sign(self):
        """Alignment is zero for equal logits and never negative"""
        Z = self.rng.normal(size=(2, 4, 5, 3))
        self.assertEqual(loss_align(Z, Z.copy(), 4.0).item(), 0.0)
        for _ in range(10):
            self.assertGreaterEqual(
                loss_align(self.rng.normal(size=Z.shape),
                           self.rng.normal(size=Z.shape), 4.0).item(), 0.0)

    def test_001_align_hand_case(self):
        """p = (0.9, 0.1) against q = (0.5, 0.5) at temperature 1"""
        Z_s = np.log([0.9, 0.1]).reshape(1, 1, 1, 2)
        expected = 0.9 * math.log(0.9 / 0.5) + 0.1 * math.log(0.1 / 0.5)
        self.assertAlmostEqual(loss_align(Z_s, np.zeros((1, 1, 1, 2)),
                                          1.0).item(), expected, places=12)
        self.assertAlmostEqual(expected, 0.3681, places=4)

    def test_002_intra(self):
        """Joint relations: identity, high-temperature limit, oracle"""
        F = self.rng.normal(size=(2, 5, 4))
        self.assertLess(abs(loss_intra(F, F.copy(), 0.1).item()), 1e-10)
        self.assertLess(loss_intra(F, self.rng.normal(size=F.shape),
                                   1e6).item(), 1e-8)
        F_s = np.array([[[1.0, 0.0], [0.6, 0.8], [-1.0, 0.5]]])
        F_t = np.array([[[0.2, 1.0], [1.0, 1.0], [0.0, -2.0]]])
        expected = oracles.relational_kl(F_s[0], F_s[0], F_t[0], F_t[0], 0.5)
        self.assertAlmostEqual(loss_intra(F_s, F_t, 0.5).item(), expected,
                               places=12)

    def test_003_memory(self):
        """Memory relations: identity, single entry, oracle"""
        F = self.rng.normal(size=(2, 5, 4))
        bank = _bank(self.rng.normal(size=(6, 4)))
        self.assertLess(abs(loss_memory(F, bank, F.copy(), 0.1).item()),
                        1e-10)
        single = _bank(self.rng.normal(size=(1, 4)))
        self.assertLess(abs(loss_memory(F, single,
                                        self.rng.normal(size=F.shape),
                                        0.1).item()), 1e-12)
        F_s = np.array([[[1.0, 2.0], [-0.5, 0.3]]])
        F_t = np.array([[[0.4, -1.0], [2.0, 0.1]]])
        memory = np.array([[1.0, 0.0], [0.3, 0.7], [-0.2, -0.9]])
        expected = oracles.relational_kl(F_s[0], memory, F_t[0], memory, 0.3)
        self.assertAlmostEqual(loss_memory(F_s, _bank(memory), F_t,
                                           0.3).item(), expected, places=12)

    def test_004_memory_empty_bank(self):
        """An empty bank contributes zero and logs a warning"""
        F = self.rng.normal(size=(1, 2, 3))
        with self.assertLogs("dynstg_mamba.distill", level="WARNING"):
            loss = loss_memory(F, MemoryBank(4), F, 0.1)
        self.assertEqual(loss.item(), 0.0)

    def test_005_region(self):
        """Region relations: identity, single region, oracle"""
        F = self.rng.normal(size=(2, 5, 4))
        R = self.rng.normal(size=(2, 3, 4))
        self.assertLess(abs(loss_region(F, R.copy(), R, 0.1,
                                        F_t=F.copy()).item()), 1e-10)
        self.assertLess(abs(loss_region(
            F, self.rng.normal(size=(2, 1, 4)), self.rng.normal(
                size=(2, 1, 4)), 0.1, F_t=self.rng.normal(
                    size=F.shape)).item()), 1e-12)
        F_s = np.array([[[1.0, 0.5], [-0.3, 0.9]]])
        F_t = np.array([[[0.1, 1.0], [1.2, -0.4]]])
        R_s = np.array([[[0.7, 0.7], [1.0, -0.2]]])
        R_t = np.array([[[-0.5, 1.0], [0.3, 0.3]]])
        expected = oracles.relational_kl(F_s[0], R_s[0], F_t[0], R_t[0], 0.2)
        self.assertAlmostEqual(loss_region(F_s, R_t, R_s, 0.2,
                                           F_t=F_t).item(), expected,
                               places=12)

    def test_006_teacher_side_is_detached(self):
        """No gradient reaches the teacher tensors"""
        F_s = parameter(self.rng.normal(size=(1, 3, 4)))
        F_t = parameter(self.rng.normal(size=(1, 3, 4)))
        R_t = parameter(self.rng.normal(size=(1, 2, 4)))
        R_s = parameter(self.rng.normal(size=(1, 2, 4)))
        with Tape():
            loss = loss_intra(F_s, F_t) + loss_region(F_s, R_t, R_s,
                                                      F_t=F_t)
            backward(loss)
        self.assertIsNone(F_t.grad)
        self.assertIsNone(R_t.grad)
        self.assertTrue(np.any(F_s.grad != 0.0))

    def test_007_kl_never_negative(self):
        """Alignment and relational losses are non-negative over random
        shapes and temperatures"""
        for seed in range(100):
            rng = np.random.default_rng(seed)
            batch, joints, width = (int(v) for v in
                                    rng.integers(1, 6, size=3))
            tau = 10.0 ** rng.uniform(-1.5, 0.7)
            logits = rng.integers(1, 5, size=4)
            losses = [
                loss_align(rng.normal(size=logits) * 3.0,
                           rng.normal(size=logits) * 3.0, tau),
                loss_intra(rng.normal(size=(batch, joints, width)),
                           rng.normal(size=(batch, joints, width)), tau),
                loss_memory(rng.normal(size=(batch, joints, width)),
                            _bank(rng.normal(size=(3, width))),
                            rng.normal(size=(batch, joints, width)), tau),
                loss_region(rng.normal(size=(batch, joints, width)),
                            rng.normal(size=(batch, 2, width)),
                            rng.normal(size=(batch, 2, width)), tau,
                            F_t=rng.normal(size=(batch, joints, width)))]
            for loss in losses:
                self.assertGreaterEqual(loss.item(), 0.0, seed)

    def test_008_relation_matrices(self):
        """Cosines lie in [-1, 1], nonzero joints relate to themselves with
        1 and zero joints with 0"""
        F = self.rng.normal(size=(2, 4, 3))
        F[1, 2] = 0.0
        R = self.rng.normal(size=(2, 5, 3))
        relations = relation_matrices(F, R, _bank(self.rng.normal(
            size=(6, 3))))
        self.assertEqual((relations.S.shape, relations.P.shape,
                          relations.R.shape),
                         ((2, 4, 4), (2, 4, 6), (2, 4, 5)))
        for matrix in (relations.S, relations.P, relations.R):
            self.assertLessEqual(np.max(np.abs(matrix.data)), 1.0 + 1e-12)
        diagonal = np.diagonal(relations.S.data, axis1=1, axis2=2)
        assert_allclose(diagonal[0], np.ones(4), rtol=1e-12)
        self.assertEqual(diagonal[1, 2], 0.0)
        self.assertIsNone(relation_matrices(F, R, MemoryBank(4)).P)
        with self.assertRaises(ShapeError):
            relation_matrices(F, R, _bank(np.ones((2, 5))))
        with self.assertRaises(ShapeError):
            relation_matrices(F, R[:, :, :2])

    def test_009_components_match_single_losses(self):
        """compute_components agrees with the individual loss functions"""
        topology = SkeletonTopology.gait()
        teacher = model_init(ModelConfig(topology=topology, graph_out=4,
                                         state_dim=4, variant="teacher"))
        student = model_init(ModelConfig(topology=topology, graph_out=4,
                                         state_dim=4, variant="student"))
        X = self.rng.normal(size=(2, 8, 5, 3))
        ours, theirs = model_forward(student, X), model_forward(teacher, X)
        bank = _bank(self.rng.normal(size=(7, 4)))
        config = DistillConfig(relation_temperature=0.3)
        components = compute_components(ours, theirs, [1, 0], bank, config)
        expected = {
            "intra": loss_intra(ours.joint_embeddings,
                                theirs.joint_embeddings, 0.3),
            "memory": loss_memory(ours.joint_embeddings, bank,
                                  theirs.joint_embeddings, 0.3),
            "region": loss_region(ours.joint_embeddings,
                                  theirs.region_embeddings,
                                  ours.region_embeddings, 0.3,
                                  F_t=theirs.joint_embeddings),
            "align": loss_align(ours.joint_logits, theirs.joint_logits,
                                config.kd_temperature),
            "task": loss_task(ours.joint_logits, [1, 0]),
        }
        for name, value in expected.items():
            self.assertAlmostEqual(getattr(components, name).item(),
                                   value.item(), places=12)


class TestTotal(unittest.TestCase):
    """Tests for total_cgrkd and DistillConfig"""

    @staticmethod
    def _components(task, align, intra, memory, region):
        return LossComponents(*(as_tensor(v) for v in (task, align, intra,
                                                       memory, region)))

    def test_000_unit_components(self):
        """Unit terms with alpha 1, beta 0.1, gamma 0.1 sum to 3.2"""
        total = total_cgrkd(self._components(1.0, 1.0, 1.0, 1.0, 1.0),
                            DistillConfig())
        self.assertEqual(total.item(), 3.2)

    def test_001_zero_components(self):
        """All-zero terms give zero"""
        total = total_cgrkd(self._components(0.0, 0.0, 0.0, 0.0, 0.0),
                            DistillConfig())
        self.assertEqual(total.item(), 0.0)

    def test_002_zero_weights(self):
        """With alpha = beta = gamma = 0 only task and alignment count"""
        config = DistillConfig(alpha=0.0, beta=0.0, gamma=0.0)
        total = total_cgrkd(self._components(0.25, 0.5, 3.0, 7.0, 9.0),
                            config)
        self.assertEqual(total.item(), 0.75)
        config = DistillConfig(use_align=False)
        total = total_cgrkd(self._components(0.25, 0.5, 1.0, 0.0, 0.0),
                            config)
        self.assertEqual(total.item(), 1.25)

    def test_003_invalid_config(self):
        """Temperatures and capacity must be positive"""
        for values in ({"kd_temperature": 0.0},
                       {"relation_temperature": -1.0},
                       {"memory_capacity": 0}):
            with self.assertRaises(ConfigError):
                DistillConfig(**values)
        with self.assertRaises(ConfigError):
            DistillConfig.from_dict({"delta": 1.0})

    def test_004_components_document(self):
        """to_dict reports every term as a float"""
        document = self._components(1.0, 2.0, 3.0, 4.0, 5.0).to_dict()
        self.assertEqual(document, {"task": 1.0, "align": 2.0, "intra": 3.0,
                                    "memory": 4.0, "region": 5.0})

    def test_005_linear_in_weights(self):
        """The weighted part of the total is linear in (alpha, beta,
        gamma)"""
        rng = np.random.default_rng(5)
        for _ in range(100):
            components = self._components(*rng.uniform(0.0, 5.0, 5))

            def weighted(weights):
                alpha, beta, gamma = (float(w) for w in weights)
                config = DistillConfig(alpha=alpha, beta=beta, gamma=gamma)
                return total_cgrkd(components, config).item() \
                    - total_cgrkd(components, DistillConfig(
                        alpha=0.0, beta=0.0, gamma=0.0)).item()

            first, second = rng.uniform(0.0, 2.0, 3), rng.uniform(0.0, 2.0, 3)
            a, b = rng.uniform(0.0, 3.0, 2)
            self.assertAlmostEqual(weighted(a * first + b * second),
                                   a * weighted(first) + b * weighted(second),
                                   places=10)


class TestMemoryBank(unittest.TestCase):
    """Tests for MemoryBank and memory_update"""

    def test_000_fifo(self):
        """Capacity 4 after 6 insertions holds the last 4 in order"""
        bank = MemoryBank(4)
        memory_update(bank, np.arange(6.0).reshape(1, 6, 1))
        assert_array_equal(bank.entries(), [[2.0], [3.0], [4.0], [5.0]])

    def test_001_empty_update(self):
        """Inserting no embeddings leaves the bank unchanged"""
        bank = _bank([[1.0, 2.0]])
        memory_update(bank, np.zeros((0, 3, 2)))
        self.assertEqual(len(bank), 1)
        bank.clear()
        self.assertEqual(bank.entries().shape, (0, 0))

    def test_002_losses_see_the_pre_update_bank(self):
        """compute_components reads the bank before the batch is pushed"""
        topology = SkeletonTopology.gait()
        teacher = model_init(ModelConfig(topology=topology, graph_out=4,
                                         state_dim=4, variant="teacher"))
        student = model_init(ModelConfig(topology=topology, graph_out=4,
                                         state_dim=4, variant="student"))
        X = np.random.default_rng(2).normal(size=(2, 8, 5, 3))
        teacher_output = model_forward(teacher, X)
        student_output = model_forward(student, X)
        bank = MemoryBank(16)
        config = DistillConfig()
        with self.assertLogs("dynstg_mamba.distill", level="WARNING"):
            first = compute_components(student_output, teacher_output,
                                       [0, 1], bank, config)
        self.assertEqual(first.memory.item(), 0.0)
        memory_update(bank, teacher_output.joint_embeddings)
        self.assertEqual(len(bank), 10)
        second = compute_components(student_output, teacher_output, [0, 1],
                                    bank, config)
        self.assertGreater(second.memory.item(), 0.0)
        self.assertEqual(len(bank), 10)
