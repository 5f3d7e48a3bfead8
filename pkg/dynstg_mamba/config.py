# -*- coding: utf-8 -*-

"""Run configuration.

A run is configured from a JSON document whose sections mirror the
dataclasses below; every omitted value falls back to :mod:`settings`::

    {"seed": 0, "folds": 5, "epochs_teacher": 200,
     "optim": {"learning_rate": 0.001},
     "data": {"path": "walks.jsonl", "frames": 32},
     "model": {"graph_out": 8},
     "distill": {"alpha": 1.0}}
"""

import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Tuple

from . import settings
from .distill import DistillConfig
from .exceptions import ConfigError
from .graph import SkeletonTopology
from .models import ModelConfig
from .utils import read_json


LOGGER = logging.getLogger(__name__)

PROFILES = {
    "paper": {},
    "ci": settings.CI_PROFILE,
}


def _from_section(cls, document, section):
    if document is None:
        return cls()
    if not isinstance(document, dict):
        raise ConfigError("config section %r must be an object" % section)
    names = {f.name for f in fields(cls)}
    unknown = set(document) - names
    if unknown:
        raise ConfigError("unknown keys in %r: %s"
                          % (section, ", ".join(sorted(unknown))))
    return cls(**document)


@dataclass
class OptimConfig(object):
    learning_rate: float = settings.LEARNING_RATE
    weight_decay: float = settings.WEIGHT_DECAY
    batch_size: int = settings.BATCH_SIZE
    betas: Tuple[float, float] = settings.ADAM_BETAS
    eps: float = settings.ADAM_EPSILON

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if not self.learning_rate > 0 or self.batch_size < 1 or \
                self.weight_decay < 0:
            raise ConfigError("optimiser needs learning_rate > 0, "
                              "batch_size >= 1 and weight_decay >= 0")


@dataclass
class DataConfig(object):
    """Where sequences come from.

    ``path`` selects a JSON-lines file; without it a synthetic set is
    generated from the ``synth_*`` values.
    """
    path: Optional[str] = None
    topology: Optional[str] = None
    frames: Optional[int] = None
    synth_classes: int = settings.SYNTH_CLASSES
    synth_per_class: int = settings.SYNTH_PER_CLASS
    synth_frames: int = settings.SYNTH_FRAMES
    synth_joints: int = settings.SYNTH_JOINTS
    augment: bool = True
    augment_scale: float = settings.AUGMENT_SCALE

    def load_topology(self, joints):
        """Skeleton for ``joints`` joints: the configured file, else the
        five-joint gait graph or a chain."""
        if self.topology:
            topology = SkeletonTopology.from_json(self.topology)
            if topology.joint_count != joints:
                raise ConfigError("topology %s has %d joints, data has %d"
                                  % (self.topology, topology.joint_count,
                                     joints))
            return topology
        if joints == 5:
            return SkeletonTopology.gait()
        return SkeletonTopology.chain(joints)


@dataclass
class ModelHyperParams(object):
    """Architecture values shared by teacher and student"""
    graph_out: int = settings.GRAPH_OUT
    state_dim: int = settings.STATE_DIM
    regions: int = settings.TEMPORAL_REGIONS
    epsilon: float = settings.STATE_EPSILON
    conv_kernel: int = settings.CONV_KERNEL
    scan_chunk: Optional[int] = None
    temporal_links: bool = True


@dataclass
class RunConfig(object):
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelHyperParams = field(default_factory=ModelHyperParams)
    distill: DistillConfig = field(default_factory=DistillConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    epochs_teacher: int = settings.EPOCHS_TEACHER
    epochs_student: int = settings.EPOCHS_STUDENT
    folds: int = settings.FOLDS
    seed: int = 0
    out: str = "runs"
    profile: str = "paper"

    def __post_init__(self):
        if self.folds < 2:
            raise ConfigError("folds must be at least 2, got %r"
                              % (self.folds,))
        if self.epochs_teacher < 0 or self.epochs_student < 0:
            raise ConfigError("epoch counts must be non-negative")

    def model_config(self, variant, topology, num_classes, **overrides):
        """ModelConfig for ``variant`` built from the shared hyper-params"""
        values = asdict(self.model)
        values.update(overrides)
        return ModelConfig(topology=topology, in_features=settings.IN_FEATURES,
                           num_classes=num_classes, variant=variant,
                           seed=self.seed, **values)

    def apply_profile(self, name):
        """Overlay the named profile on the epoch and optimiser values"""
        if name not in PROFILES:
            raise ConfigError("unknown profile %r (expected one of %s)"
                              % (name, ", ".join(sorted(PROFILES))))
        overrides = PROFILES[name]
        self.profile = name
        for key in ("epochs_teacher", "epochs_student"):
            if key in overrides:
                setattr(self, key, overrides[key])
        for key in ("batch_size", "learning_rate"):
            if key in overrides:
                setattr(self.optim, key, overrides[key])
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, document):
        document = dict(document or {})
        sections = {"data": DataConfig, "model": ModelHyperParams,
                    "distill": DistillConfig, "optim": OptimConfig}
        names = {f.name for f in fields(cls)}
        unknown = set(document) - names
        if unknown:
            raise ConfigError("unknown config keys: %s"
                              % ", ".join(sorted(unknown)))
        values = {}
        for key, value in document.items():
            if key in sections:
                values[key] = _from_section(sections[key], value, key)
            else:
                values[key] = value
        try:
            return cls(**values)
        except TypeError as error:
            raise ConfigError("invalid config: %s" % error)


def load_config(path=None, profile=None, seed=None, out=None):
    """Build a RunConfig from an optional JSON file and CLI overrides.

    Parameters
    ----------
    path : str, optional
        JSON config document.
    profile : str, optional
        ``paper`` or ``ci``; overrides the document's ``profile``.
    seed : int, optional
    out : str, optional
        Output directory.

    Raises
    ------
    ConfigError
        If the file cannot be read or holds unknown keys.
    """
    document = {}
    if path:
        try:
            document = read_json(path)
        except (OSError, ValueError) as error:
            raise ConfigError("cannot read config %s: %s" % (path, error))
    config = RunConfig.from_dict(document)
    config.apply_profile(profile or config.profile)
    if seed is not None:
        config.seed = seed
    if out is not None:
        config.out = out
    LOGGER.debug("run config: %s", config.to_dict())
    return config
