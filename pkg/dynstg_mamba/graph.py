# -*- coding: utf-8 -*-

"""Skeleton graphs and the spatio-temporal graph propagation layers.

The teacher network uses :func:`df_stgnn_forward`, whose spatial adjacency
is the skeleton re-weighted by a learnable base filter; the student uses
:func:`light_df_stgnn_forward` with the fixed symmetric-normalised skeleton.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np

from . import settings
from .exceptions import ConfigError, ContractError, ShapeError
from .tensor import (ParameterGroup, Tensor, as_tensor, concat, conv1d,
                     einsum, matmul, no_tape, parameter, reduce_sum, reshape,
                     softplus, transpose)
from .utils import uniform_parameter


LOGGER = logging.getLogger(__name__)


class SkeletonTopology(object):
    """Joints and undirected bones of a skeleton.

    Attributes
    ----------
    joint_count: int
        Number of joints J.
    edges: frozenset of tuple
        Unordered joint pairs stored as ``(low, high)``.
    self_loops: bool
        Whether every joint connects to itself in the static adjacency.
    """

    def __init__(self, joint_count, edges, self_loops=True):
        if int(joint_count) < 1:
            raise ConfigError("a skeleton needs at least one joint, got %r"
                              % (joint_count,))
        self.joint_count = int(joint_count)
        normalized = set()
        for edge in edges:
            i, j = (int(v) for v in edge)
            if not (0 <= i < self.joint_count and 0 <= j < self.joint_count):
                raise ConfigError("edge (%d, %d) outside joint range [0, %d)"
                                  % (i, j, self.joint_count))
            normalized.add((min(i, j), max(i, j)))
        self.edges = frozenset(normalized)
        self.self_loops = bool(self_loops)

    def __eq__(self, other):
        return isinstance(other, SkeletonTopology) and \
            self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash((self.joint_count, self.edges, self.self_loops))

    def __repr__(self):
        return "SkeletonTopology(joints=%d, edges=%d)" % (self.joint_count,
                                                          len(self.edges))

    def static_adjacency(self):
        """Symmetric 0/1 adjacency, with ones on the diagonal for self loops"""
        matrix = np.zeros((self.joint_count, self.joint_count))
        for i, j in self.edges:
            matrix[i, j] = matrix[j, i] = 1.0
        if self.self_loops:
            np.fill_diagonal(matrix, 1.0)
        return matrix

    def normalized_adjacency(self):
        """D^-1/2 A D^-1/2 of the static adjacency.

        An isolated joint without a self loop keeps a unit self loop.
        """
        matrix = self.static_adjacency()
        isolated = np.flatnonzero(matrix.sum(axis=1) == 0)
        matrix[isolated, isolated] = 1.0
        scale = 1.0 / np.sqrt(matrix.sum(axis=1))
        return matrix * scale[:, None] * scale[None, :]

    def permuted(self, order):
        """Relabel joints so that new joint ``k`` is old joint ``order[k]``"""
        position = {old: new for new, old in enumerate(order)}
        return SkeletonTopology(
            self.joint_count,
            [(position[i], position[j]) for i, j in self.edges],
            self.self_loops)

    def to_dict(self):
        return {"joints": self.joint_count,
                "edges": [list(edge) for edge in sorted(self.edges)],
                "self_loops": self.self_loops}

    @classmethod
    def from_dict(cls, document):
        try:
            return cls(document["joints"], document.get("edges", []),
                       document.get("self_loops", True))
        except (KeyError, TypeError, ValueError) as error:
            raise ConfigError("invalid topology document: %s" % error)

    @classmethod
    def from_json(cls, path):
        """Load ``{"joints": J, "edges": [[i, j], ...]}`` from ``path``"""
        with open(path) as handle:
            return cls.from_dict(json.load(handle))

    @classmethod
    def chain(cls, joint_count):
        return cls(joint_count, [(i, i + 1) for i in range(joint_count - 1)])

    @classmethod
    def gait(cls):
        """Five-joint lower body: pelvis (0), left hip/knee (1, 2),
        right hip/knee (3, 4)."""
        return cls(5, [(0, 1), (1, 2), (0, 3), (3, 4)])


@dataclass
class DynamicFilterParams(ParameterGroup):
    """Learnable base filter re-weighting the skeleton edges"""
    f_base: Tensor

    @classmethod
    def init(cls, joint_count):
        return cls(f_base=parameter(np.zeros((joint_count, joint_count)),
                                    name="f_base"))


@dataclass
class LightDFSTGNNParams(ParameterGroup):
    """Parameters of the static-graph propagation layer.

    Attributes
    ----------
    temporal: Tensor
        J x J frame-to-next-frame adjacency A_t.
    tc_weight: Tensor
        Temporal convolution kernel, shape (K, F, F) with K odd.
    tc_bias: Tensor
        Temporal convolution bias, shape (F,).
    weight: Tensor
        F x O output map W.
    bias: Tensor
        Output bias b, shape (O,).
    """
    temporal: Tensor
    tc_weight: Tensor
    tc_bias: Tensor
    weight: Tensor
    bias: Tensor

    @staticmethod
    def _layer_tensors(joint_count, in_features, out_features, rng, kernel):
        if kernel < 1 or kernel % 2 == 0:
            raise ConfigError("temporal kernel size must be odd, got %r"
                              % (kernel,))
        return dict(
            temporal=parameter(np.eye(joint_count), name="temporal"),
            tc_weight=uniform_parameter(
                rng, (kernel, in_features, in_features),
                kernel * in_features, name="tc_weight"),
            tc_bias=parameter(np.zeros(in_features), name="tc_bias"),
            weight=uniform_parameter(rng, (in_features, out_features),
                                     in_features, name="weight"),
            bias=uniform_parameter(rng, (out_features,), in_features,
                                   name="bias"))

    @classmethod
    def init(cls, joint_count, in_features, out_features, rng,
             kernel=settings.CONV_KERNEL):
        return cls(**cls._layer_tensors(joint_count, in_features,
                                        out_features, rng, kernel))

    @property
    def out_features(self):
        return self.weight.shape[1]


@dataclass
class DFSTGNNParams(LightDFSTGNNParams):
    """Static-graph parameters plus the dynamic filter"""
    filter: DynamicFilterParams

    @classmethod
    def init(cls, joint_count, in_features, out_features, rng,
             kernel=settings.CONV_KERNEL):
        return cls(filter=DynamicFilterParams.init(joint_count),
                   **cls._layer_tensors(joint_count, in_features,
                                        out_features, rng, kernel))


@dataclass
class BlockAdjacency(object):
    """The (T*J) x (T*J) spatio-temporal adjacency.

    Block (t, t) is the spatial adjacency, blocks (t, t+1) and (t+1, t) are
    A_t and its transpose, every other block is zero.
    """
    matrix: Tensor
    frame_count: int
    joint_count: int

    def block(self, t, s):
        """Return block (t, s) as an array"""
        j = self.joint_count
        return self.matrix.data[t * j:(t + 1) * j, s * j:(s + 1) * j]


def _check_square(name, tensor, joint_count=None):
    shape = tensor.shape
    if len(shape) != 2 or shape[0] != shape[1] or \
            (joint_count is not None and shape[0] != joint_count):
        expected = "%dx%d" % (joint_count, joint_count) if joint_count \
            else "square"
        raise ShapeError("%s must be %s, got shape %s" % (name, expected,
                                                          shape))


def build_dynamic_adjacency(filter, topology):
    """Re-weight the skeleton by ``softplus(f_base)`` and row-normalise.

    Zero entries of the static adjacency stay zero. A joint without any
    static connection falls back to a self-loop-only row.

    Parameters
    ----------
    filter : DynamicFilterParams
    topology : SkeletonTopology

    Returns
    -------
    Tensor
        J x J row-stochastic adjacency.
    """
    f_base = as_tensor(filter.f_base)
    _check_square("f_base", f_base, topology.joint_count)
    mask = topology.static_adjacency()
    isolated = np.flatnonzero(mask.sum(axis=1) == 0)
    mask[isolated, isolated] = 1.0
    weighted = softplus(f_base) * mask
    return weighted / reduce_sum(weighted, axis=1, keepdims=True)


def build_block_adjacency(a_tilde, a_t, frame_count, temporal_links=True):
    """Assemble the spatio-temporal adjacency from its J x J blocks.

    Parameters
    ----------
    a_tilde : Tensor
        Spatial adjacency, placed on the block diagonal.
    a_t : Tensor
        Temporal adjacency, placed above the diagonal (its transpose below).
    frame_count : int
        Number of frames T >= 1.
    temporal_links : bool
        When False only the diagonal blocks are populated.

    Returns
    -------
    BlockAdjacency

    Raises
    ------
    ContractError
        If ``frame_count`` < 1.
    """
    if frame_count < 1:
        raise ContractError("block adjacency needs T >= 1, got %r"
                            % (frame_count,))
    a_tilde, a_t = as_tensor(a_tilde), as_tensor(a_t)
    _check_square("A_tilde", a_tilde)
    joints = a_tilde.shape[0]
    _check_square("A_t", a_t, joints)

    zero = as_tensor(np.zeros((joints, joints)))
    a_t_transposed = transpose(a_t) if temporal_links else None
    rows = []
    for t in range(frame_count):
        blocks = [zero] * frame_count
        blocks[t] = a_tilde
        if temporal_links and t + 1 < frame_count:
            blocks[t + 1] = a_t
        if temporal_links and t > 0:
            blocks[t - 1] = a_t_transposed
        rows.append(concat(blocks, axis=1) if frame_count > 1 else a_tilde)
    matrix = concat(rows, axis=0) if frame_count > 1 else rows[0]
    return BlockAdjacency(matrix=matrix, frame_count=frame_count,
                          joint_count=joints)


def dense_block_adjacency(a_tilde, a_t, frame_count, temporal_links=True):
    """Array form of :func:`build_block_adjacency`, for inspection"""
    with no_tape():
        return build_block_adjacency(a_tilde, a_t, frame_count,
                                     temporal_links).matrix.data.copy()


def _propagate(X, a_tilde, params, temporal_links):
    X = as_tensor(X)
    if X.ndim != 4:
        raise ShapeError("graph input must be B x T x J x F, got shape %s"
                         % (X.shape,))
    batch, frames, joints, features = X.shape
    if joints != a_tilde.shape[0] or features != params.tc_weight.shape[1]:
        raise ShapeError("graph input %s does not match %d joints and %d "
                         "features" % (X.shape, a_tilde.shape[0],
                                       params.tc_weight.shape[1]))
    if not X.is_finite():
        raise ContractError("graph input contains non-finite values")

    block = build_block_adjacency(a_tilde, params.temporal, frames,
                                  temporal_links)
    H = einsum("ij,bjf->bif", block.matrix,
               reshape(X, (batch, frames * joints, features)))

    # temporal convolution runs along T separately for every joint
    pad = params.tc_weight.shape[0] // 2
    H = transpose(reshape(H, (batch, frames, joints, features)), (0, 2, 1, 3))
    H = reshape(H, (batch * joints, frames, features))
    H = conv1d(H, params.tc_weight, padding=(pad, pad)) + params.tc_bias
    H = transpose(reshape(H, (batch, joints, frames, features)), (0, 2, 1, 3))
    return matmul(H, params.weight) + params.bias


def df_stgnn_forward(X, params, topology, temporal_links=True):
    """Dynamic-filter spatio-temporal graph layer.

    Parameters
    ----------
    X : Tensor
        Input of shape B x T x J x F.
    params : DFSTGNNParams
    topology : SkeletonTopology
    temporal_links : bool
        Populate the off-diagonal A_t blocks of the block adjacency.

    Returns
    -------
    Tensor
        Output of shape B x T x J x O.

    Raises
    ------
    ShapeError
        If ``X`` does not conform to the parameters.
    ContractError
        If ``X`` holds non-finite values.
    """
    a_dyn = build_dynamic_adjacency(params.filter, topology)
    return _propagate(X, a_dyn, params, temporal_links)


def light_df_stgnn_forward(X, params, topology, temporal_links=True):
    """Static-graph counterpart of :func:`df_stgnn_forward`, propagating
    over the symmetric-normalised skeleton."""
    a_sym = as_tensor(topology.normalized_adjacency())
    return _propagate(X, a_sym, params, temporal_links)
