# -*- coding: utf-8 -*-

"""Teacher and student networks, parameter accounting and checkpoints.

The teacher stacks the dynamic-filter graph layer and two state-space
blocks, the student the static graph layer and a single block. Both end in
one affine head producing per-joint, per-frame logits; sequence logits are
their mean over frames and joints.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import settings
from .exceptions import CheckpointError, ConfigError, ShapeError
from .graph import (DFSTGNNParams, LightDFSTGNNParams, SkeletonTopology,
                    df_stgnn_forward, light_df_stgnn_forward)
from .ssm import SSMParams, stg_mamba_forward
from .tensor import (ParameterGroup, Tensor, as_tensor, count_ops, matmul,
                     no_tape, reduce_mean, reshape)
from .utils import read_json, uniform_parameter, write_json


LOGGER = logging.getLogger(__name__)

VARIANTS = {
    # variant: (adjacency, blocks)
    "teacher": ("dynamic", 2),
    "student": ("static", 1),
}


@dataclass
class ModelConfig(object):
    """Architecture of one network.

    ``ssm_channels`` defaults to ``joints * graph_out``; ``blocks`` and
    ``adjacency`` default from ``variant``.
    """
    topology: SkeletonTopology
    in_features: int = settings.IN_FEATURES
    graph_out: int = settings.GRAPH_OUT
    ssm_channels: Optional[int] = None
    state_dim: int = settings.STATE_DIM
    num_classes: int = 2
    variant: str = "teacher"
    blocks: Optional[int] = None
    adjacency: Optional[str] = None
    temporal_links: bool = True
    regions: int = settings.TEMPORAL_REGIONS
    epsilon: float = settings.STATE_EPSILON
    conv_kernel: int = settings.CONV_KERNEL
    scan_chunk: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError("unknown model variant %r" % (self.variant,))
        adjacency, blocks = VARIANTS[self.variant]
        if self.adjacency is None:
            self.adjacency = adjacency
        if self.blocks is None:
            self.blocks = blocks
        flat = self.topology.joint_count * self.graph_out
        if self.ssm_channels is None:
            self.ssm_channels = flat

        if self.adjacency not in ("dynamic", "static"):
            raise ConfigError("adjacency must be 'dynamic' or 'static', got "
                              "%r" % (self.adjacency,))
        if self.ssm_channels != flat:
            raise ConfigError("ssm_channels (%d) must equal joints x "
                              "graph_out (%d)" % (self.ssm_channels, flat))
        if self.num_classes < 2:
            raise ConfigError("num_classes must be at least 2, got %d"
                              % self.num_classes)
        if self.blocks < 0 or self.regions < 1 or self.state_dim < 1:
            raise ConfigError("blocks, regions and state_dim must be "
                              "non-negative/positive, got %d, %d, %d"
                              % (self.blocks, self.regions, self.state_dim))
        if self.scan_chunk is not None and \
                not 1 <= self.scan_chunk <= settings.MAX_SCAN_CHUNK:
            raise ConfigError("scan_chunk must lie in [1, %d], got %r"
                              % (settings.MAX_SCAN_CHUNK, self.scan_chunk))

    @property
    def joints(self):
        return self.topology.joint_count

    def to_dict(self):
        document = {name: getattr(self, name)
                    for name in self.__dataclass_fields__}
        document["topology"] = self.topology.to_dict()
        return document

    @classmethod
    def from_dict(cls, document):
        document = dict(document)
        unknown = set(document) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError("unknown model config keys: %s"
                              % ", ".join(sorted(unknown)))
        topology = document.pop("topology", None)
        if topology is None:
            raise ConfigError("model config needs a topology")
        if not isinstance(topology, SkeletonTopology):
            topology = SkeletonTopology.from_dict(topology)
        return cls(topology=topology, **document)


@dataclass
class Model(ParameterGroup):
    """An initialised network: its config plus every learnable tensor"""
    config: ModelConfig
    graph: LightDFSTGNNParams
    blocks: List[SSMParams] = field(default_factory=list)
    head_weight: Tensor = None
    head_bias: Tensor = None


@dataclass
class ModelOutput(object):
    """Forward results.

    Attributes
    ----------
    joint_logits: Tensor
        B x T x J x K.
    seq_logits: Tensor
        B x K, the mean of ``joint_logits`` over frames and joints.
    joint_embeddings: Tensor
        B x J x O graph features averaged over frames.
    region_embeddings: Tensor
        B x G x O graph features averaged over joints within G equal
        temporal windows.
    """
    joint_logits: Tensor
    seq_logits: Tensor
    joint_embeddings: Tensor
    region_embeddings: Tensor


def model_init(config):
    """Initialise every parameter of ``config`` from ``config.seed``.

    Affine maps are drawn uniformly from +-1/sqrt(fan_in); the temporal
    adjacency starts as the identity and transition matrices at
    A[d, n] = -(n + 1).
    """
    rng = np.random.default_rng(config.seed)
    joints, channels = config.joints, config.ssm_channels
    layer = DFSTGNNParams if config.adjacency == "dynamic" \
        else LightDFSTGNNParams
    graph = layer.init(joints, config.in_features, config.graph_out, rng,
                       kernel=config.conv_kernel)
    blocks = [SSMParams.init(channels, channels, config.state_dim, channels,
                             rng, kernel=config.conv_kernel,
                             epsilon=config.epsilon)
              for _ in range(config.blocks)]
    width = joints * config.num_classes
    model = Model(config=config, graph=graph, blocks=blocks,
                  head_weight=uniform_parameter(rng, (channels, width),
                                                channels,
                                                name="head_weight"),
                  head_bias=uniform_parameter(rng, (width,), channels,
                                              name="head_bias"))
    LOGGER.debug("initialised %s model with %d parameters", config.variant,
                 param_count(model))
    return model


def model_forward(model, X):
    """Run ``model`` on a B x T x J x C batch.

    Raises
    ------
    ShapeError
        If the batch does not match the topology or T is not a multiple of
        the region count.
    """
    config = model.config
    X = as_tensor(X)
    if X.ndim != 4 or X.shape[2] != config.joints or \
            X.shape[3] != config.in_features:
        raise ShapeError("model input must be B x T x %d x %d, got shape %s"
                         % (config.joints, config.in_features, X.shape))
    batch, frames, joints, _ = X.shape
    if frames % config.regions:
        raise ShapeError("T=%d is not divisible into %d temporal regions"
                         % (frames, config.regions))

    propagate = df_stgnn_forward if config.adjacency == "dynamic" \
        else light_df_stgnn_forward
    H = propagate(X, model.graph, config.topology, config.temporal_links)
    out = config.graph_out

    joint_embeddings = reduce_mean(H, axis=1)
    windows = reshape(H, (batch, config.regions, frames // config.regions,
                          joints, out))
    region_embeddings = reduce_mean(windows, axis=(2, 3))

    S = reshape(H, (batch, frames, joints * out))
    for block in model.blocks:
        S = S + stg_mamba_forward(S, block, config.scan_chunk)

    logits = matmul(S, model.head_weight) + model.head_bias
    joint_logits = reshape(logits, (batch, frames, joints,
                                    config.num_classes))
    return ModelOutput(joint_logits=joint_logits,
                       seq_logits=reduce_mean(joint_logits, axis=(1, 2)),
                       joint_embeddings=joint_embeddings,
                       region_embeddings=region_embeddings)


def param_count(model):
    """Exact number of learnable scalars"""
    return int(sum(p.size for p in model.parameters()))


def forward_cost(model, X):
    """Number of primitive evaluations in one forward pass"""
    with no_tape(), count_ops() as counter:
        model_forward(model, X)
    return counter.count


def state_dict(model):
    return OrderedDict((name, p.data.copy())
                       for name, p in model.named_parameters())


def load_state_dict(model, state):
    """Copy arrays from ``state`` into the parameters of ``model``.

    Raises
    ------
    CheckpointError
        If names or shapes differ.
    """
    params = OrderedDict(model.named_parameters())
    if set(params) != set(state):
        missing = sorted(set(params) - set(state))
        extra = sorted(set(state) - set(params))
        raise CheckpointError("parameter names differ (missing %s, "
                              "unexpected %s)" % (missing, extra))
    for name, p in params.items():
        value = np.asarray(state[name], dtype=np.float64)
        if value.shape != p.shape:
            raise CheckpointError("parameter %s has shape %s, expected %s"
                                  % (name, value.shape, p.shape))
        p.data = value.copy()
        p.zero_grad()
    return model


def model_save(model, path):
    """Write the JSON checkpoint of ``model`` to ``path``"""
    document = {
        "format_version": settings.FORMAT_VERSION,
        "config": model.config.to_dict(),
        "params": {name: {"shape": list(p.shape),
                          "data": p.data.reshape(-1).tolist()}
                   for name, p in model.named_parameters()},
    }
    write_json(path, document)
    LOGGER.debug("saved %s checkpoint to %s", model.config.variant, path)


def model_load(path, topology=None):
    """Rebuild a model from a JSON checkpoint.

    Parameters
    ----------
    path : str
        Checkpoint written by :func:`model_save`.
    topology : SkeletonTopology, optional
        Expected skeleton; a different stored topology is rejected.

    Raises
    ------
    CheckpointError
        If the file is unreadable, has another format version, or does not
        match ``topology``.
    """
    try:
        document = read_json(path)
    except (OSError, ValueError) as error:
        raise CheckpointError("cannot read checkpoint %s: %s" % (path, error))
    if document.get("format_version") != settings.FORMAT_VERSION:
        raise CheckpointError("checkpoint %s has format version %r, expected "
                              "%d" % (path, document.get("format_version"),
                                      settings.FORMAT_VERSION))
    try:
        config = ModelConfig.from_dict(document["config"])
        state = {name: np.reshape(entry["data"], entry["shape"])
                 for name, entry in document["params"].items()}
    except (KeyError, TypeError, ValueError, ConfigError) as error:
        raise CheckpointError("malformed checkpoint %s: %s" % (path, error))
    if topology is not None and config.topology != topology:
        raise CheckpointError("checkpoint %s was trained on %r, expected %r"
                              % (path, config.topology, topology))
    return load_state_dict(model_init(config), state)
