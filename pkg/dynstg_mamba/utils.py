# -*- coding: utf-8 -*-

"""Utilities module for dynstg_mamba"""

import json
import os
from time import monotonic

import numpy as np

from .tensor import parameter


class Stopwatch(object):
    """Helper class to measure the wall-clock duration of a block.

    Attributes
    ----------
    elapsed: float
        Seconds spent inside the block, available after it exits.

    Examples
    --------
    The main way to use this class is with the Python *with* syntax:

    >>> with Stopwatch() as watch:
    ...     train()
    >>> watch.elapsed
    12.3
    """

    def __init__(self):
        self.started_at = None
        self.elapsed = 0.0

    def __enter__(self):
        self.started_at = monotonic()
        return self

    def __exit__(self, type, value, traceback):
        self.elapsed = monotonic() - self.started_at


def fold_seed(seed, fold):
    """Return the SeedSequence for one cross-validation fold.

    Streams for different folds are statistically independent, so folds
    may run in any order or in parallel.
    """
    return np.random.SeedSequence([seed, fold])


def fold_rng(seed, fold):
    return np.random.default_rng(fold_seed(seed, fold))


def uniform_parameter(rng, shape, fan_in, name=None):
    """Learnable tensor drawn uniformly from +-1/sqrt(fan_in)"""
    bound = 1.0 / np.sqrt(fan_in)
    return parameter(rng.uniform(-bound, bound, size=shape), name=name)


def write_json(path, document):
    """Write ``document`` with sorted keys so equal content is byte-equal"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w") as handle:
        json.dump(document, handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_json(path):
    with open(path) as handle:
        return json.load(handle)
