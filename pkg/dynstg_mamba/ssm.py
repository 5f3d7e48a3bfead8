# -*- coding: utf-8 -*-

"""Graph-selective state-space block.

One block maps B x T x D_in features to B x T x D_out:

1. an input projection split into a scan branch and a gate branch,
2. a causal depth-wise convolution followed by SiLU on the scan branch,
3. a per-timestep projection into step size, input and readout
   coefficients,
4. softplus/exponential discretisation and a normalised selective scan,
5. readout with a skip term, SiLU gating and an output projection.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import settings
from .exceptions import ContractError, ShapeError
from .tensor import (ParameterGroup, Tensor, as_tensor, concat, conv1d,
                     einsum, exp, matmul, neg, norm, parameter, reshape,
                     silu, softplus)
from .utils import uniform_parameter


LOGGER = logging.getLogger(__name__)

# Step sizes at initialisation are drawn log-uniformly from this range
DT_RANGE = (1e-3, 1e-1)


def inverse_softplus(values):
    """x such that softplus(x) == values, for positive values"""
    values = np.asarray(values, dtype=np.float64)
    return values + np.log(-np.expm1(-values))


@dataclass
class SSMParams(ParameterGroup):
    """Parameters of one state-space block.

    Attributes
    ----------
    split_weight: Tensor
        D_in x 2D input projection, scan branch first.
    conv_weight: Tensor
        K x D depth-wise causal kernel.
    proj_weight: Tensor
        D x (D + 2N) projection into (step, input, readout) coefficients.
    a_raw: Tensor
        D x N; the transition matrix is ``-softplus(a_raw)``, never positive.
    d_skip: Tensor
        Per-channel skip weight.
    out_weight: Tensor
        D x D_out output projection.
    out_bias: Tensor
        Output bias.
    delta_bias: Tensor
        Per-channel step bias added inside the softplus.
    epsilon: float
        Offset of the state normalisation, > 0.
    """
    split_weight: Tensor
    conv_weight: Tensor
    proj_weight: Tensor
    a_raw: Tensor
    d_skip: Tensor
    out_weight: Tensor
    out_bias: Tensor
    delta_bias: Tensor
    epsilon: float = settings.STATE_EPSILON

    @classmethod
    def init(cls, d_in, d, n, d_out, rng, kernel=settings.CONV_KERNEL,
             epsilon=settings.STATE_EPSILON):
        """Initialise a block with A[d, n] = -(n + 1) and unit skip weights"""
        ladder = np.tile(np.arange(1, n + 1, dtype=np.float64), (d, 1))
        steps = np.exp(rng.uniform(np.log(DT_RANGE[0]), np.log(DT_RANGE[1]),
                                   size=d))
        return cls(
            split_weight=uniform_parameter(rng, (d_in, 2 * d), d_in,
                                           name="split_weight"),
            conv_weight=uniform_parameter(rng, (kernel, d), kernel,
                                          name="conv_weight"),
            proj_weight=uniform_parameter(rng, (d, d + 2 * n), d,
                                          name="proj_weight"),
            a_raw=parameter(inverse_softplus(ladder), name="a_raw"),
            d_skip=parameter(np.ones(d), name="d_skip"),
            out_weight=uniform_parameter(rng, (d, d_out), d,
                                         name="out_weight"),
            out_bias=parameter(np.zeros(d_out), name="out_bias"),
            delta_bias=parameter(inverse_softplus(steps), name="delta_bias"),
            epsilon=epsilon)

    @property
    def channels(self):
        return self.d_skip.shape[0]

    @property
    def state_dim(self):
        return self.a_raw.shape[1]

    def transition(self):
        """The D x N transition matrix A = -softplus(a_raw)"""
        return neg(softplus(self.a_raw))


def discretize(delta_raw, A, B, u, delta_bias=None):
    """Turn continuous coefficients into per-step multipliers.

    Parameters
    ----------
    delta_raw : Tensor
        B x T x D raw step sizes.
    A : Tensor
        D x N transition matrix.
    B : Tensor
        B x T x N input coefficients.
    u : Tensor
        B x T x D inputs.
    delta_bias : Tensor, optional
        Per-channel bias added before the softplus.

    Returns
    -------
    tuple of Tensor
        ``(deltaA, deltaBu)``, both B x T x D x N, with
        ``deltaA = exp(delta * A)`` and ``deltaBu = delta * B * u`` where
        ``delta = softplus(delta_raw + delta_bias)``.
    """
    delta_raw, A, B, u = (as_tensor(v) for v in (delta_raw, A, B, u))
    if delta_raw.ndim != 3 or A.ndim != 2 or B.ndim != 3 or \
            u.shape != delta_raw.shape or \
            delta_raw.shape[2] != A.shape[0] or \
            B.shape != delta_raw.shape[:2] + (A.shape[1],):
        raise ShapeError("discretize: shapes delta %s, A %s, B %s, u %s do "
                         "not conform" % (delta_raw.shape, A.shape, B.shape,
                                          u.shape))
    if delta_bias is not None:
        delta_raw = delta_raw + delta_bias
    delta = softplus(delta_raw)
    delta_a = exp(einsum("btd,dn->btdn", delta, A))
    delta_bu = einsum("btd,btn->btdn", delta * u, B)
    return delta_a, delta_bu


def _check_scan(delta_a, delta_bu, epsilon):
    if epsilon <= 0:
        raise ContractError("scan epsilon must be positive, got %r"
                            % (epsilon,))
    if delta_a.ndim != 4 or delta_a.shape != delta_bu.shape or \
            delta_a.shape[1] < 1:
        raise ShapeError("scan: deltaA %s and deltaBu %s must share a "
                         "B x T x D x N shape with T >= 1"
                         % (delta_a.shape, delta_bu.shape))


def _scan_step(h, delta_a, delta_bu, epsilon):
    # h_0 = 0, so the first update is deltaBu alone
    state = delta_bu if h is None else delta_a * h + delta_bu
    return state / (norm(state, axis=(1, 2), keepdims=True) + epsilon)


def _scan_range(h, delta_a, delta_bu, epsilon, outputs):
    batch, frames, channels, states = delta_a.shape
    for t in range(frames):
        h = _scan_step(h, delta_a[:, t], delta_bu[:, t], epsilon)
        outputs.append(reshape(h, (batch, 1, channels, states)))
    return h


def ssm_scan(delta_a, delta_bu, epsilon=settings.STATE_EPSILON):
    """Normalised selective scan, one step at a time.

    ``h_t = deltaA_t * h_{t-1} + deltaBu_t`` followed by
    ``h_t / (||h_t|| + epsilon)``, the norm taken over each batch element's
    D x N slice.

    Returns
    -------
    Tensor
        B x T x D x N stack of normalised states.

    Raises
    ------
    ContractError
        If ``epsilon`` <= 0.
    """
    delta_a, delta_bu = as_tensor(delta_a), as_tensor(delta_bu)
    _check_scan(delta_a, delta_bu, epsilon)
    outputs = []
    _scan_range(None, delta_a, delta_bu, epsilon, outputs)
    return concat(outputs, axis=1)


def ssm_scan_chunked(delta_a, delta_bu, epsilon=settings.STATE_EPSILON,
                     chunk_size=8):
    """Normalised selective scan that renormalises only at chunk boundaries.

    Inside a chunk the state is carried unnormalised as ``w_t`` together
    with a per-batch scale ``s_t``, with ``h_t = w_t / s_t``::

        w_t = deltaA_t * w_{t-1} + s_{t-1} * deltaBu_t
        s_t = ||w_t|| + epsilon * s_{t-1}

    At a boundary ``w`` is divided by ``s`` and ``s`` restarts at 1. The
    outputs equal those of :func:`ssm_scan` up to round-off. The scale may
    shrink by a factor ``epsilon`` per step, which bounds ``chunk_size`` by
    ``settings.MAX_SCAN_CHUNK``.

    Raises
    ------
    ContractError
        If ``epsilon`` <= 0 or ``chunk_size`` is outside
        [1, ``settings.MAX_SCAN_CHUNK``].
    """
    delta_a, delta_bu = as_tensor(delta_a), as_tensor(delta_bu)
    _check_scan(delta_a, delta_bu, epsilon)
    if not 1 <= chunk_size <= settings.MAX_SCAN_CHUNK:
        raise ContractError("chunk_size must lie in [1, %d], got %r"
                            % (settings.MAX_SCAN_CHUNK, chunk_size))
    batch, frames, channels, states = delta_a.shape
    outputs, h = [], None
    for start in range(0, frames, chunk_size):
        # the carried h is normalised, so the chunk starts at s = 1
        w, scale = h, None
        for t in range(start, min(start + chunk_size, frames)):
            if w is None:
                w = delta_bu[:, t]
            elif scale is None:
                w = delta_a[:, t] * w + delta_bu[:, t]
            else:
                w = delta_a[:, t] * w + scale * delta_bu[:, t]
            magnitude = norm(w, axis=(1, 2), keepdims=True)
            scale = magnitude + epsilon if scale is None \
                else magnitude + epsilon * scale
            outputs.append(reshape(w / scale, (batch, 1, channels, states)))
        h = w / scale
    return concat(outputs, axis=1)


def stg_mamba_forward(X, params, scan_chunk=None):
    """Run one state-space block over B x T x D_in features.

    Every output timestep depends only on inputs at the same or earlier
    timesteps.

    Parameters
    ----------
    X : Tensor
        Input of shape B x T x D_in.
    params : SSMParams
    scan_chunk : int, optional
        Use :func:`ssm_scan_chunked` with this window.

    Returns
    -------
    Tensor
        Output of shape B x T x D_out.
    """
    X = as_tensor(X)
    if X.ndim != 3 or X.shape[2] != params.split_weight.shape[0]:
        raise ShapeError("stg_mamba_forward: input %s does not match split "
                         "weight %s" % (X.shape, params.split_weight.shape))
    channels, states = params.channels, params.state_dim
    kernel = params.conv_weight.shape[0]

    branches = matmul(X, params.split_weight)
    x_conv = silu(conv1d(branches[..., :channels], params.conv_weight,
                         padding=(kernel - 1, 0)))
    gate = silu(branches[..., channels:])

    coefficients = matmul(x_conv, params.proj_weight)
    delta_raw = coefficients[..., :channels]
    B = coefficients[..., channels:channels + states]
    C = coefficients[..., channels + states:]

    delta_a, delta_bu = discretize(delta_raw, params.transition(), B, x_conv,
                                   params.delta_bias)
    if scan_chunk:
        H = ssm_scan_chunked(delta_a, delta_bu, params.epsilon, scan_chunk)
    else:
        H = ssm_scan(delta_a, delta_bu, params.epsilon)

    readout = einsum("btn,btdn->btd", C, H) + x_conv * params.d_skip
    return matmul(readout * gate, params.out_weight) + params.out_bias
