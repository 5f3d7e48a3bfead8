# -*- coding: utf-8 -*-

"""Tests for the graph-selective state-space block"""

import math
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from dynstg_mamba import settings
from dynstg_mamba.exceptions import ContractError, ShapeError
from dynstg_mamba.ssm import (SSMParams, discretize, inverse_softplus,
                              ssm_scan, ssm_scan_chunked, stg_mamba_forward)
from dynstg_mamba.tensor import as_tensor

from . import oracles


class TestDiscretize(unittest.TestCase):
    """Tests for discretize"""

    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_000_vanishing_step_freezes_state(self):
        """A very negative raw step gives deltaA = 1 and deltaBu = 0"""
        delta_raw = np.full((1, 2, 3), -50.0)
        delta_a, delta_bu = discretize(delta_raw, -np.ones((3, 2)),
                                       self.rng.normal(size=(1, 2, 2)),
                                       self.rng.normal(size=(1, 2, 3)))
        assert_allclose(delta_a.data, np.ones((1, 2, 3, 2)), atol=1e-15)
        assert_allclose(delta_bu.data, np.zeros((1, 2, 3, 2)), atol=1e-20)

    def test_001_half_decay(self):
        """A = -1 and step ln 2 halve the state"""
        delta_a, _ = discretize(np.zeros((2, 3, 4)), -np.ones((4, 5)),
                                np.ones((2, 3, 5)), np.ones((2, 3, 4)))
        assert_allclose(delta_a.data, np.full((2, 3, 4, 5), 0.5),
                        rtol=1e-15)

    def test_002_matches_oracle(self):
        """Random B=2, T=4, D=3, N=2 equals the four-loop formula"""
        delta_raw = self.rng.normal(size=(2, 4, 3))
        A = -self.rng.uniform(0.5, 3.0, (3, 2))
        B = self.rng.normal(size=(2, 4, 2))
        u = self.rng.normal(size=(2, 4, 3))
        bias = self.rng.normal(size=3)
        delta_a, delta_bu = discretize(delta_raw, A, B, u, as_tensor(bias))
        expected_a, expected_bu = oracles.discretize(delta_raw, A, B, u, bias)
        assert_allclose(delta_a.data, expected_a, rtol=1e-13)
        assert_allclose(delta_bu.data, expected_bu, rtol=1e-13, atol=1e-15)

    def test_003_nonconformant_shapes(self):
        """Shapes must agree on B, T, D and N"""
        with self.assertRaises(ShapeError):
            discretize(np.zeros((1, 2, 3)), np.zeros((4, 2)),
                       np.zeros((1, 2, 2)), np.zeros((1, 2, 3)))
        with self.assertRaises(ShapeError):
            discretize(np.zeros((1, 2, 3)), np.zeros((3, 2)),
                       np.zeros((1, 2, 5)), np.zeros((1, 2, 3)))


class TestScan(unittest.TestCase):
    """Tests for ssm_scan and ssm_scan_chunked"""

    def setUp(self):
        self.rng = np.random.default_rng(1)

    def test_000_no_recurrence(self):
        """deltaA = 0 normalises each input independently"""
        delta_bu = self.rng.normal(size=(2, 3, 4, 2))
        out = ssm_scan(np.zeros_like(delta_bu), delta_bu, 1e-6).data
        for b in range(2):
            for t in range(3):
                step = delta_bu[b, t]
                assert_allclose(out[b, t],
                                step / (np.sqrt(np.sum(step ** 2)) + 1e-6),
                                rtol=1e-14)

    def test_001_zero_input(self):
        """deltaBu = 0 keeps the state at zero"""
        delta_a = self.rng.uniform(size=(1, 5, 2, 3))
        out = ssm_scan(delta_a, np.zeros_like(delta_a)).data
        assert_array_equal(out, np.zeros_like(delta_a))

    def test_002_matches_oracle(self):
        """The scan equals the scalar recurrence"""
        delta_a = self.rng.uniform(size=(2, 6, 3, 2))
        delta_bu = self.rng.normal(size=(2, 6, 3, 2))
        assert_allclose(ssm_scan(delta_a, delta_bu, 1e-6).data,
                        oracles.scan(delta_a, delta_bu, 1e-6), rtol=1e-12,
                        atol=1e-14)

    def test_003_chunked_equals_stepwise(self):
        """Chunked and per-step scans agree over random instances, with a
        negligible and a dominant epsilon"""
        for trial in range(50):
            batch, frames = self.rng.integers(1, 4), self.rng.integers(1, 13)
            channels, states = self.rng.integers(1, 5), self.rng.integers(1, 5)
            shape = (batch, frames, channels, states)
            delta_a = self.rng.uniform(size=shape)
            delta_bu = self.rng.normal(size=shape)
            chunk = int(self.rng.integers(1, frames + 2))
            epsilon = 1e-6 if trial % 2 else 0.5
            difference = np.abs(
                ssm_scan_chunked(delta_a, delta_bu, epsilon, chunk).data
                - ssm_scan(delta_a, delta_bu, epsilon).data)
            self.assertLess(difference.max(), 1e-10)

    def test_004_invalid_arguments(self):
        """Non-positive epsilon, empty time and bad chunks are rejected"""
        ones = np.ones((1, 2, 2, 2))
        with self.assertRaises(ContractError):
            ssm_scan(ones, ones, 0.0)
        with self.assertRaises(ShapeError):
            ssm_scan(np.ones((1, 0, 2, 2)), np.ones((1, 0, 2, 2)))
        for chunk in (0, settings.MAX_SCAN_CHUNK + 1):
            with self.assertRaises(ContractError):
                ssm_scan_chunked(ones, ones, 1e-6, chunk)

    def test_005_chunked_zero_input(self):
        """A longest-window chunk of zero inputs stays exactly zero"""
        delta_a = self.rng.uniform(size=(2, 40, 3, 2))
        out = ssm_scan_chunked(delta_a, np.zeros_like(delta_a), 1e-6,
                               settings.MAX_SCAN_CHUNK).data
        assert_array_equal(out, np.zeros_like(delta_a))

    def test_006_state_norm_below_one(self):
        """Every normalised state has norm below one"""
        for seed in range(20):
            rng = np.random.default_rng(seed)
            scale = 10.0 ** rng.uniform(-3, 3)
            delta_a = rng.uniform(size=(3, 7, 4, 3))
            delta_bu = scale * rng.normal(size=(3, 7, 4, 3))
            for out in (ssm_scan(delta_a, delta_bu).data,
                        ssm_scan_chunked(delta_a, delta_bu, chunk_size=3)
                        .data):
                norms = np.sqrt(np.sum(out ** 2, axis=(2, 3)))
                self.assertTrue(np.all(norms < 1.0), (seed, norms.max()))


class TestSTGMamba(unittest.TestCase):
    """Tests for stg_mamba_forward"""

    def setUp(self):
        self.rng = np.random.default_rng(2)

    def test_000_zero_input(self):
        """X = 0 with zero output bias maps to zero"""
        params = SSMParams.init(6, 6, 3, 6, self.rng)
        out = stg_mamba_forward(np.zeros((2, 5, 6)), params)
        assert_array_equal(out.data, np.zeros((2, 5, 6)))

    def test_001_causality(self):
        """Perturbing step t leaves every earlier output unchanged"""
        params = SSMParams.init(4, 4, 2, 4, self.rng)
        for _ in range(20):
            X = self.rng.normal(size=(1, 8, 4))
            t = int(self.rng.integers(0, 8))
            perturbed = X.copy()
            perturbed[0, t] += self.rng.normal(size=4)
            before = stg_mamba_forward(X, params).data
            after = stg_mamba_forward(perturbed, params).data
            assert_array_equal(after[:, :t], before[:, :t])
            self.assertFalse(np.array_equal(after[:, t:], before[:, t:]))

    def test_002_matches_oracle(self):
        """A tiny block equals the scalar composition of every step"""
        params = SSMParams.init(2, 2, 2, 2, self.rng)
        params.out_bias.data = self.rng.normal(size=2)
        params.d_skip.data = self.rng.normal(size=2)
        X = self.rng.normal(size=(1, 3, 2))
        assert_allclose(stg_mamba_forward(X, params).data,
                        oracles.ssm_block(X, params), rtol=1e-11,
                        atol=1e-13)

    def test_003_chunked_forward(self):
        """The chunked scan gives the same block output"""
        params = SSMParams.init(4, 4, 3, 4, self.rng)
        X = self.rng.normal(size=(2, 9, 4))
        assert_allclose(stg_mamba_forward(X, params, scan_chunk=4).data,
                        stg_mamba_forward(X, params).data, rtol=1e-10,
                        atol=1e-12)

    def test_004_transition_initialisation(self):
        """A starts at -(n + 1) and is never positive"""
        params = SSMParams.init(3, 3, 4, 3, self.rng)
        expected = -np.tile(np.arange(1.0, 5.0), (3, 1))
        assert_allclose(params.transition().data, expected, rtol=1e-12)
        params.a_raw.data = self.rng.normal(scale=10.0, size=(3, 4))
        self.assertTrue(np.all(params.transition().data <= 0.0))

    def test_005_inverse_softplus(self):
        """inverse_softplus undoes softplus"""
        values = np.array([1e-3, 0.1, 1.0, 5.0])
        recovered = [oracles.softplus(v) for v in inverse_softplus(values)]
        assert_allclose(recovered, values, rtol=1e-12)
        self.assertAlmostEqual(inverse_softplus(math.log(2.0)), 0.0,
                               places=14)

    def test_006_input_width_checked(self):
        """The input width must match the split projection"""
        params = SSMParams.init(4, 4, 2, 4, self.rng)
        with self.assertRaises(ShapeError):
            stg_mamba_forward(np.zeros((1, 3, 5)), params)
