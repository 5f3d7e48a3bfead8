# -*- coding: utf-8 -*-

"""Test for the utils module"""

import os
import shutil
import tempfile
import unittest
try:
    from unittest import mock
except ImportError:
    import mock

import numpy as np

from dynstg_mamba.utils import (Stopwatch, fold_rng, read_json,
                                uniform_parameter, write_json)


class TestUtils(unittest.TestCase):
    """Test cases for the dynstg_mamba utils module"""

    def setUp(self):
        self.tmp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp_dir)

    @mock.patch("dynstg_mamba.utils.monotonic")
    def test_000_stopwatch(self, mock_monotonic):
        """Stopwatch reports the time spent inside the block"""
        mock_monotonic.side_effect = [10.0, 12.5]
        with Stopwatch() as watch:
            pass
        self.assertEqual(watch.elapsed, 2.5)

    def test_001_fold_streams(self):
        """Fold streams are reproducible and differ between folds"""
        first = fold_rng(7, 0).uniform(size=4)
        self.assertTrue(np.array_equal(first, fold_rng(7, 0).uniform(size=4)))
        self.assertFalse(np.array_equal(first,
                                        fold_rng(7, 1).uniform(size=4)))

    def test_002_uniform_parameter(self):
        """Initial values lie within 1/sqrt(fan_in)"""
        p = uniform_parameter(np.random.default_rng(0), (50, 4), 16,
                              name="w")
        self.assertTrue(np.all(np.abs(p.data) <= 0.25))
        self.assertTrue(p.requires_grad)
        self.assertEqual(p.name, "w")

    def test_003_json_documents(self):
        """Documents are written with sorted keys and a final newline"""
        path = os.path.join(self.tmp_dir, "nested", "doc.json")
        write_json(path, {"b": 1, "a": [1.5, 2]})
        with open(path) as handle:
            text = handle.read()
        self.assertTrue(text.endswith("\n"))
        self.assertLess(text.index('"a"'), text.index('"b"'))
        self.assertEqual(read_json(path), {"a": [1.5, 2], "b": 1})
