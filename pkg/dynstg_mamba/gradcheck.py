# -*- coding: utf-8 -*-

"""Finite-difference verification of tape gradients."""

import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from . import settings
from .exceptions import ContractError
from .tensor import Tape, backward, no_tape


LOGGER = logging.getLogger(__name__)

EPSILON_RANGE = (1e-8, 1e-4)


@dataclass
class ParamCheck(object):
    """Comparison result for one parameter tensor.

    ``violations`` counts coordinates whose relative error reaches the
    tolerance while their absolute error also reaches ``abs_tolerance``.
    """
    name: str
    shape: Tuple[int, ...]
    checked: int
    max_rel_error: float
    worst_index: Tuple[int, ...] = ()
    max_abs_error: float = 0.0
    violations: int = 0

    def to_dict(self):
        return {"name": self.name, "shape": list(self.shape),
                "checked": self.checked,
                "max_rel_error": self.max_rel_error,
                "max_abs_error": self.max_abs_error,
                "violations": self.violations,
                "worst_index": list(self.worst_index)}


@dataclass
class GradCheckReport(object):
    """Outcome of :func:`grad_check`.

    ``passed`` holds exactly when no perturbed loss was non-finite and every
    checked coordinate has a relative error below ``tolerance`` or an
    absolute error below ``abs_tolerance``. With ``abs_tolerance`` 0 this is
    the plain relative criterion.
    """
    epsilon: float
    tolerance: float
    entries: List[ParamCheck] = field(default_factory=list)
    failures: List[str] = field(default_factory=list)
    label: str = ""
    abs_tolerance: float = 0.0

    @property
    def max_rel_error(self):
        return max((entry.max_rel_error for entry in self.entries),
                   default=0.0)

    @property
    def max_abs_error(self):
        return max((entry.max_abs_error for entry in self.entries),
                   default=0.0)

    @property
    def violations(self):
        return sum(entry.violations for entry in self.entries)

    @property
    def passed(self):
        return not self.failures and self.violations == 0

    def to_dict(self):
        return {"label": self.label, "epsilon": self.epsilon,
                "tolerance": self.tolerance,
                "abs_tolerance": self.abs_tolerance,
                "max_rel_error": self.max_rel_error,
                "max_abs_error": self.max_abs_error,
                "violations": self.violations,
                "passed": self.passed, "failures": list(self.failures),
                "params": [entry.to_dict() for entry in self.entries]}


def _coordinates(params, sample_size, max_full, rng):
    total = sum(p.size for p in params)
    if total <= max_full:
        return [np.arange(p.size) for p in params]

    chosen = []
    for p in params:
        count = min(p.size, max(1, int(round(sample_size * p.size / total))))
        chosen.append(np.sort(rng.choice(p.size, size=count, replace=False)))
    return chosen


def _perturbed_loss(loss_fn, tensor, flat_index, value):
    original = tensor.data.flat[flat_index]
    tensor.data.flat[flat_index] = value
    try:
        with no_tape():
            return float(np.sum(loss_fn().data))
    finally:
        tensor.data.flat[flat_index] = original


def grad_check(loss_fn, params, epsilon=settings.GRADCHECK_EPSILON,
               tolerance=settings.GRADCHECK_TOLERANCE,
               sample_size=settings.GRADCHECK_SAMPLE_SIZE,
               max_full=settings.GRADCHECK_MAX_FULL, seed=0,
               floor=settings.GRADCHECK_FLOOR, grad_hook=None, names=None,
               label="", abs_tolerance=0.0):
    """Compare tape gradients of ``loss_fn`` with central differences.

    Every coordinate is checked when the parameters hold at most
    ``max_full`` scalars in total; otherwise ``sample_size`` coordinates
    are drawn under ``seed``, spread over the parameters in proportion to
    their size with at least one coordinate each.

    Parameters
    ----------
    loss_fn : callable
        Deterministic zero-argument function returning a scalar Tensor.
    params : list of Tensor
        Leaves to differentiate, all with ``requires_grad``.
    epsilon : float
        Half-width of the central difference, in [1e-8, 1e-4].
    tolerance : float
        Largest accepted relative error.
    floor : float
        Lower bound of the relative-error denominator.
    abs_tolerance : float
        A coordinate whose absolute error is below this value passes even
        when its relative error does not; 0 disables the companion test.
    grad_hook : callable, optional
        ``grad_hook(name, grad)`` returns the analytic gradient to compare;
        used to inject faults in tests.
    names : list of str, optional
        Report names, defaulting to each tensor's ``name``.

    Returns
    -------
    GradCheckReport

    Raises
    ------
    ContractError
        If ``epsilon`` is outside its range.
    """
    if not EPSILON_RANGE[0] <= epsilon <= EPSILON_RANGE[1]:
        raise ContractError("grad_check epsilon must lie in [%g, %g], got %r"
                            % (EPSILON_RANGE + (epsilon,)))
    params = list(params)
    if names is None:
        names = [p.name or "param%d" % i for i, p in enumerate(params)]

    for p in params:
        p.zero_grad()
    with Tape():
        loss = loss_fn()
        backward(loss)
    analytic = []
    for name, p in zip(names, params):
        grad = p.grad if p.grad is not None else np.zeros_like(p.data)
        if grad_hook is not None:
            grad = grad_hook(name, grad)
        analytic.append(np.asarray(grad, dtype=np.float64))
        p.zero_grad()

    report = GradCheckReport(epsilon=epsilon, tolerance=tolerance,
                             label=label, abs_tolerance=abs_tolerance)
    rng = np.random.default_rng(seed)
    coordinates = _coordinates(params, sample_size, max_full, rng)
    for name, p, grad, indices in zip(names, params, analytic, coordinates):
        worst, worst_index = 0.0, ()
        worst_abs, violations = 0.0, 0
        for flat_index in indices:
            location = np.unravel_index(flat_index, p.shape)
            original = p.data.flat[flat_index]
            plus = _perturbed_loss(loss_fn, p, flat_index, original + epsilon)
            minus = _perturbed_loss(loss_fn, p, flat_index,
                                    original - epsilon)
            if not (np.isfinite(plus) and np.isfinite(minus)):
                report.failures.append(
                    "%s%s: non-finite loss at perturbed point"
                    % (name, list(map(int, location))))
                continue
            numeric = (plus - minus) / (2.0 * epsilon)
            exact = grad.flat[flat_index]
            difference = abs(exact - numeric)
            error = difference / max(abs(exact), abs(numeric), floor)
            if error >= tolerance and difference >= abs_tolerance:
                violations += 1
            worst_abs = max(worst_abs, difference)
            if error > worst:
                worst, worst_index = error, tuple(map(int, location))
        report.entries.append(ParamCheck(name=name, shape=tuple(p.shape),
                                         checked=len(indices),
                                         max_rel_error=float(worst),
                                         worst_index=worst_index,
                                         max_abs_error=float(worst_abs),
                                         violations=violations))
        LOGGER.debug("grad_check %s%s: %d coordinates, max rel err %.3e",
                     label and label + " ", name, len(indices), worst)

    if not report.passed:
        LOGGER.warning("grad_check %s failed: %d coordinate(s) out of "
                       "tolerance, max rel err %.3e, %d failures", label,
                       report.violations, report.max_rel_error,
                       len(report.failures))
    return report
