# -*- coding: utf-8 -*-

"""Skeleton sequence ingestion, augmentation, standardisation and folds.

Sequence files are JSON lines, one object per sequence::

    {"id": "s01", "label": 1, "subject": "p07",
     "frames": [[[x, y, z], ...joints...], ...frames...]}
"""

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from sklearn.model_selection import StratifiedGroupKFold
from sklearn.preprocessing import StandardScaler

from . import settings
from .exceptions import ContractError, DataError, SchemaError


LOGGER = logging.getLogger(__name__)

SOURCES = ("ingested", "synthetic", "augmented")

REQUIRED_FIELDS = ("id", "label", "subject", "frames")


@dataclass
class SkeletonSequence(object):
    """One gait sample.

    Attributes
    ----------
    frames: numpy.ndarray
        T x N x 3 joint coordinates (x, y, z).
    label: int
        Class index.
    subject_id: str
    source: str
        One of ``ingested``, ``synthetic`` or ``augmented``.
    seq_id: str
        Unique sequence identifier.
    parent_id: str, optional
        For augmented copies, the id of the sequence they derive from.
    """
    frames: np.ndarray
    label: int
    subject_id: str
    source: str
    seq_id: str
    parent_id: Optional[str] = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[0] < 1 or \
                self.frames.shape[2] != 3:
            raise DataError("sequence %s: frames must be T x N x 3 with "
                            "T >= 1, got shape %s"
                            % (self.seq_id, self.frames.shape),
                            field="frames")
        if not np.all(np.isfinite(self.frames)):
            raise DataError("sequence %s holds non-finite coordinates"
                            % self.seq_id, field="frames")
        if self.source not in SOURCES:
            raise DataError("sequence %s: unknown source %r"
                            % (self.seq_id, self.source), field="source")

    @property
    def shape(self):
        return self.frames.shape


def fit_length(frames, length):
    """Centre-crop or edge-pad ``frames`` along time to ``length`` frames"""
    current = frames.shape[0]
    if current > length:
        start = (current - length) // 2
        return frames[start:start + length].copy()
    if current < length:
        before = (length - current) // 2
        after = length - current - before
        return np.pad(frames, ((before, after), (0, 0), (0, 0)), mode="edge")
    return frames.copy()


def _parse_record(line_number, line):
    try:
        record = json.loads(line)
    except ValueError as error:
        raise DataError("line %d: invalid JSON (%s)" % (line_number, error),
                        line=line_number)
    if not isinstance(record, dict):
        raise DataError("line %d: expected an object" % line_number,
                        line=line_number)
    for name in REQUIRED_FIELDS:
        if name not in record:
            raise DataError("line %d: missing field %r" % (line_number, name),
                            line=line_number, field=name)

    label = record["label"]
    if isinstance(label, bool) or not isinstance(label, int) or label < 0:
        raise DataError("line %d: label must be a non-negative integer, got "
                        "%r" % (line_number, label), line=line_number,
                        field="label")
    try:
        frames = np.asarray(record["frames"], dtype=np.float64)
    except (TypeError, ValueError):
        raise DataError("line %d: frames must be a T x N x 3 nested list"
                        % line_number, line=line_number, field="frames")
    if frames.ndim != 3 or frames.shape[0] < 1 or frames.shape[2] != 3:
        raise DataError("line %d: frames must be T x N x 3 with T >= 1, got "
                        "shape %s" % (line_number, frames.shape),
                        line=line_number, field="frames")
    bad = np.argwhere(~np.isfinite(frames))
    if len(bad):
        frame, joint, _ = bad[0]
        raise DataError("line %d: non-finite coordinate at frame %d, joint "
                        "%d" % (line_number, frame, joint), line=line_number,
                        field="frames")
    return record, frames


def load_sequences(path, frames=None):
    """Read a JSON-lines sequence file.

    Parameters
    ----------
    path : str
        File to read; blank lines are skipped.
    frames : int, optional
        Centre-crop or edge-pad every sequence to this many frames.

    Returns
    -------
    list of SkeletonSequence

    Raises
    ------
    DataError
        For a malformed record, naming its line and field.
    SchemaError
        If records disagree on the joint count.
    """
    dataset = []
    joints = None
    with open(path) as handle:
        for line_number, line in enumerate(handle, 1):
            if not line.strip():
                continue
            record, coordinates = _parse_record(line_number, line)
            if joints is None:
                joints = coordinates.shape[1]
            elif coordinates.shape[1] != joints:
                raise SchemaError("line %d: %d joints, earlier records have "
                                  "%d" % (line_number, coordinates.shape[1],
                                          joints),
                                  line=line_number, field="frames")
            if frames is not None:
                coordinates = fit_length(coordinates, frames)
            dataset.append(SkeletonSequence(
                frames=coordinates, label=record["label"],
                subject_id=str(record["subject"]), source="ingested",
                seq_id=str(record["id"])))
    LOGGER.debug("loaded %d sequences from %s", len(dataset), path)
    return dataset


def write_sequences(path, dataset):
    """Write ``dataset`` in the JSON-lines sequence format"""
    with open(path, "w") as handle:
        for seq in dataset:
            handle.write(json.dumps({"id": seq.seq_id, "label": int(seq.label),
                                     "subject": seq.subject_id,
                                     "frames": seq.frames.tolist()}))
            handle.write("\n")
    LOGGER.debug("wrote %d sequences to %s", len(dataset), path)


def stack_sequences(dataset):
    """Return (B x T x N x 3 array, label vector) for equal-length sequences"""
    if not dataset:
        raise ContractError("cannot stack an empty dataset")
    shapes = {seq.shape for seq in dataset}
    if len(shapes) != 1:
        raise SchemaError("sequences have differing shapes %s"
                          % sorted(shapes))
    return (np.stack([seq.frames for seq in dataset]),
            np.array([seq.label for seq in dataset], dtype=int))


def augment_vertical_scale(seq, scale):
    """Multiply the z coordinate of every joint by ``scale``.

    Raises
    ------
    ContractError
        If ``scale`` <= 0.
    """
    if not scale > 0:
        raise ContractError("vertical scale must be positive, got %r"
                            % (scale,))
    frames = seq.frames.copy()
    frames[..., 2] = frames[..., 2] * scale
    return SkeletonSequence(frames=frames, label=seq.label,
                            subject_id=seq.subject_id, source="augmented",
                            seq_id="%s@z%g" % (seq.seq_id, scale),
                            parent_id=seq.seq_id)


def augment_dataset(dataset, scale=settings.AUGMENT_SCALE):
    """Return the originals followed by one scaled copy of each.

    Raises
    ------
    ContractError
        If ``scale`` is 1 or not positive, or the dataset already holds
        augmented sequences.
    """
    if scale == 1:
        raise ContractError("augmentation scale 1 would duplicate the data")
    compounded = [seq.seq_id for seq in dataset if seq.source == "augmented"]
    if compounded:
        raise ContractError("dataset is already augmented (%s)"
                            % ", ".join(compounded[:3]))
    return list(dataset) + [augment_vertical_scale(seq, scale)
                            for seq in dataset]


@dataclass
class NormStats(object):
    """Per (joint, coordinate) mean and floored standard deviation"""
    mean: np.ndarray
    std: np.ndarray

    def apply(self, frames):
        return (np.asarray(frames) - self.mean) / self.std

    def invert(self, frames):
        return np.asarray(frames) * self.std + self.mean

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, document):
        return cls(mean=np.asarray(document["mean"], dtype=np.float64),
                   std=np.asarray(document["std"], dtype=np.float64))


def fit_norm_stats(dataset, floor=settings.STD_FLOOR):
    """Fit per-feature statistics over every frame of ``dataset``.

    Constant features keep their exact value as mean and get ``floor`` as
    standard deviation.
    """
    if not dataset:
        raise ContractError("cannot fit normalisation statistics on an "
                            "empty dataset")
    feature_shape = dataset[0].shape[1:]
    rows = np.concatenate([seq.frames.reshape(seq.shape[0], -1)
                           for seq in dataset])
    scaler = StandardScaler().fit(rows)
    mean = scaler.mean_.copy()
    std = np.sqrt(scaler.var_)

    constant = np.ptp(rows, axis=0) == 0
    if constant.any():
        LOGGER.warning("%d constant feature(s); standard deviation floored "
                       "at %g", int(constant.sum()), floor)
        mean[constant] = rows[0, constant]
    std = np.where(constant, floor, np.maximum(std, floor))
    return NormStats(mean=mean.reshape(feature_shape),
                     std=std.reshape(feature_shape))


def standardize(dataset, stats=None):
    """z-score ``dataset`` feature-wise.

    Parameters
    ----------
    dataset : list of SkeletonSequence
    stats : NormStats, optional
        Statistics to apply; fitted on ``dataset`` when omitted. Fit on the
        training split and pass the result for every other split.

    Returns
    -------
    tuple
        ``(standardized_dataset, stats)``
    """
    if stats is None:
        stats = fit_norm_stats(dataset)
    scaled = [SkeletonSequence(frames=stats.apply(seq.frames),
                               label=seq.label, subject_id=seq.subject_id,
                               source=seq.source, seq_id=seq.seq_id,
                               parent_id=seq.parent_id)
              for seq in dataset]
    return scaled, stats


@dataclass
class FoldPlan(object):
    """Assignment of every sequence id to one test fold"""
    k: int
    assignments: Dict[str, int] = field(default_factory=dict)
    seed: int = 0

    def test_ids(self, fold):
        return {seq_id for seq_id, f in self.assignments.items()
                if f == fold}

    def train_test(self, dataset, fold):
        """Split ``dataset`` into (train, test) lists for ``fold``"""
        if not 0 <= fold < self.k:
            raise ContractError("fold %r outside [0, %d)" % (fold, self.k))
        missing = [seq.seq_id for seq in dataset
                   if seq.seq_id not in self.assignments]
        if missing:
            raise DataError("sequences without a fold: %s"
                            % ", ".join(missing[:3]))
        test_ids = self.test_ids(fold)
        train = [seq for seq in dataset if seq.seq_id not in test_ids]
        test = [seq for seq in dataset if seq.seq_id in test_ids]
        return train, test

    def to_dict(self):
        return {"k": self.k, "seed": self.seed,
                "assignments": dict(sorted(self.assignments.items()))}

    @classmethod
    def from_dict(cls, document):
        return cls(k=int(document["k"]), seed=int(document.get("seed", 0)),
                   assignments={str(key): int(value) for key, value
                                in document["assignments"].items()})


def make_folds(dataset, k=settings.FOLDS, seed=0):
    """Label-stratified k-fold plan over base sequences, grouped by subject.

    All walks of one subject share a test fold, and augmented copies join
    the fold of the sequence they derive from, so neither a person nor a
    sample appears on both sides of a split.

    Raises
    ------
    ContractError
        If ``k`` < 2 or there are fewer than ``k`` subjects.
    """
    base = [seq for seq in dataset if seq.source != "augmented"]
    if k < 2:
        raise ContractError("k must be at least 2, got %r" % (k,))
    subjects = [seq.subject_id for seq in base]
    if len(set(subjects)) < k:
        raise ContractError("%d subjects cannot fill %d folds"
                            % (len(set(subjects)), k))
    labels = np.array([seq.label for seq in base])
    splitter = StratifiedGroupKFold(n_splits=k, shuffle=True,
                                    random_state=seed)
    plan = FoldPlan(k=k, seed=seed)
    try:
        splits = list(splitter.split(np.zeros((len(base), 1)), labels,
                                     groups=subjects))
    except ValueError as error:
        raise ContractError("cannot stratify %d sequences into %d folds: %s"
                            % (len(base), k, error))
    for fold, (_, test_index) in enumerate(splits):
        for index in test_index:
            plan.assignments[base[index].seq_id] = fold

    for seq in dataset:
        if seq.source != "augmented":
            continue
        if seq.parent_id not in plan.assignments:
            raise DataError("augmented sequence %s has no parent %r in the "
                            "dataset" % (seq.seq_id, seq.parent_id))
        plan.assignments[seq.seq_id] = plan.assignments[seq.parent_id]
    LOGGER.debug("fold plan: %d sequences over %d folds",
                 len(plan.assignments), k)
    return plan


def _rest_pose(joints):
    # pelvis first, then a left and a right chain hanging from it
    positions = np.zeros((joints, 3))
    sides = np.zeros(joints)
    levels = np.zeros(joints)
    positions[0] = (0.0, 0.0, 1.0)
    left = int(math.ceil((joints - 1) / 2.0))
    for j in range(1, joints):
        side, level = (-1.0, j) if j <= left else (1.0, j - left)
        sides[j], levels[j] = side, level
        positions[j] = (0.1 * side, 0.0, 1.0 - 0.3 * level)
    return positions, sides, levels


def synth_gait(num_classes=settings.SYNTH_CLASSES,
               per_class=settings.SYNTH_PER_CLASS,
               frames=settings.SYNTH_FRAMES, joints=settings.SYNTH_JOINTS,
               seed=0, regions=settings.TEMPORAL_REGIONS):
    """Generate sinusoidal walking sequences.

    Class ``c`` walks ``2 + 2c`` gait cycles per sequence, swings the left
    leg ``1 + 0.15c`` times wider than the right one and carries Gaussian
    noise of standard deviation ``0.02 (1 + c)``. Every sample draws its
    own phase and a +-10% amplitude jitter, so single frames overlap
    across classes.

    Returns
    -------
    list of SkeletonSequence
        Class-major order, ids ``synth-<class>-<index>``.
    """
    if num_classes < 2 or per_class < 1 or frames < 1 or joints < 1:
        raise ContractError("synth_gait needs >= 2 classes and positive "
                            "counts, got %r" % ((num_classes, per_class,
                                                  frames, joints),))
    if frames % regions:
        raise ContractError("T=%d is not divisible into %d temporal regions"
                            % (frames, regions))
    rng = np.random.default_rng(seed)
    rest, sides, levels = _rest_pose(joints)
    time = np.arange(frames) / float(frames)
    dataset = []
    for label in range(num_classes):
        cycles = 2 + 2 * label
        noise = 0.02 * (1 + label)
        for index in range(per_class):
            phase = rng.uniform(0.0, 2.0 * np.pi)
            amplitude = 0.2 * rng.uniform(0.9, 1.1)
            angle = 2.0 * np.pi * cycles * time[:, None] + phase \
                + np.where(sides > 0, np.pi, 0.0)[None, :]
            swing = amplitude * np.where(sides < 0, 1.0 + 0.15 * label,
                                         1.0)
            motion = np.zeros((frames, joints, 3))
            motion[..., 1] = swing[None, :] * np.maximum(levels, 0.25) \
                * np.sin(angle)
            motion[..., 2] = 0.02 * np.cos(2.0 * angle)
            sequence = rest[None] + motion \
                + rng.normal(0.0, noise, size=(frames, joints, 3))
            dataset.append(SkeletonSequence(
                frames=sequence, label=label,
                subject_id="subject-%d-%d" % (label, index),
                source="synthetic", seq_id="synth-%d-%d" % (label, index)))
    return dataset
