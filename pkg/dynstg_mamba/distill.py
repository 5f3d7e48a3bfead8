# -*- coding: utf-8 -*-

"""Cross-graph relational distillation losses and the teacher memory bank.

All relational losses compare row-softmax distributions of cosine
similarities, ``KL(student || teacher)``, averaged over anchor joints. The
teacher side of every loss is detached, so no gradient reaches teacher
parameters.
"""

import logging
from collections import deque
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import settings
from .exceptions import ConfigError, ContractError, ShapeError
from .tensor import (Tensor, as_tensor, einsum, exp, l2_normalize,
                     log_softmax, reduce_mean, reduce_sum)


LOGGER = logging.getLogger(__name__)


@dataclass
class DistillConfig(object):
    """Temperatures, loss weights and memory capacity"""
    kd_temperature: float = settings.KD_TEMPERATURE
    relation_temperature: float = settings.RELATION_TEMPERATURE
    alpha: float = settings.ALPHA
    beta: float = settings.BETA
    gamma: float = settings.GAMMA
    memory_capacity: int = settings.MEMORY_CAPACITY
    use_align: bool = True

    def __post_init__(self):
        if not self.kd_temperature > 0:
            raise ConfigError("kd_temperature must be positive, got %r"
                              % (self.kd_temperature,))
        if not self.relation_temperature > 0:
            raise ConfigError("relation_temperature must be positive, got %r"
                              % (self.relation_temperature,))
        if int(self.memory_capacity) < 1:
            raise ConfigError("memory_capacity must be positive, got %r"
                              % (self.memory_capacity,))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, document):
        unknown = set(document) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError("unknown distill config keys: %s"
                              % ", ".join(sorted(unknown)))
        return cls(**document)


class MemoryBank(object):
    """Fixed-capacity FIFO of detached teacher joint embeddings.

    Attributes
    ----------
    capacity: int
        Maximum number of stored embeddings; the oldest is evicted first.
    """

    def __init__(self, capacity=settings.MEMORY_CAPACITY):
        self.capacity = int(capacity)
        self._entries = deque(maxlen=self.capacity)

    def __len__(self):
        return len(self._entries)

    def entries(self):
        """Stored embeddings as an M x O array, oldest first"""
        if not self._entries:
            return np.zeros((0, 0))
        return np.stack(self._entries)

    def clear(self):
        self._entries.clear()

    def push(self, embedding):
        self._entries.append(np.array(embedding, dtype=np.float64))


def memory_update(bank, teacher_embeddings):
    """Enqueue every B x N teacher embedding, batch-major then joint-minor"""
    data = teacher_embeddings.data if isinstance(teacher_embeddings, Tensor) \
        else np.asarray(teacher_embeddings, dtype=np.float64)
    if data.size == 0:
        return bank
    for row in data.reshape(-1, data.shape[-1]):
        bank.push(row)
    return bank


@dataclass
class RelationMatrices(object):
    """Cosine relations of one embedding set.

    Attributes
    ----------
    S: Tensor
        B x N x N joint-joint similarities.
    P: Tensor or None
        B x N x M joint-memory similarities, None for an empty bank.
    R: Tensor
        B x N x G joint-region similarities.
    """
    S: Tensor
    P: Tensor
    R: Tensor


def _unit(x):
    return l2_normalize(x, axis=-1, eps=settings.NORMALIZE_EPSILON)


def _check_embeddings(name, tensor, expected=None):
    if tensor.ndim != 3 or (expected is not None and
                            tensor.shape != expected):
        raise ShapeError("%s must be B x N x O%s, got shape %s"
                         % (name, " matching %s" % (expected,)
                            if expected else "", tensor.shape))


def joint_similarity(F):
    """Per-sample cosine similarity between joints; zero vectors give 0"""
    unit = _unit(F)
    return einsum("bio,bjo->bij", unit, unit)


def memory_similarity(F, memory):
    return einsum("bio,mo->bim", _unit(F), _unit(memory))


def region_similarity(F, R):
    return einsum("bio,bgo->big", _unit(F), _unit(R))


def relation_matrices(F, R, bank=None):
    """Cosine relations of joints ``F`` to each other, to the bank entries
    and to the regions ``R``; ``P`` is None for an empty or missing bank.

    Raises
    ------
    ShapeError
        If ``R`` is not B x G x O over the batch and width of ``F`` or the
        bank width differs from O.
    """
    F, R = as_tensor(F), as_tensor(R)
    _check_embeddings("embeddings", F)
    _check_embeddings("regions", R)
    if R.shape[0] != F.shape[0] or R.shape[2] != F.shape[2]:
        raise ShapeError("regions %s do not match embeddings %s"
                         % (R.shape, F.shape))
    if R.shape[1] < 1:
        raise ContractError("relations need at least one region")
    P = None
    if bank is not None and len(bank):
        memory = as_tensor(bank.entries())
        if memory.shape[1] != F.shape[2]:
            raise ShapeError("memory entries of width %d do not match "
                             "embeddings %s" % (memory.shape[1], F.shape))
        P = memory_similarity(F, memory)
    return RelationMatrices(S=joint_similarity(F), P=P,
                            R=region_similarity(F, R))


def _relational_kl(student, teacher, tau):
    log_p = log_softmax(student / tau, axis=-1)
    log_q = log_softmax(teacher.detach() / tau, axis=-1)
    return reduce_mean(reduce_sum(exp(log_p) * (log_p - log_q), axis=-1))


def _one_hot(labels, num_classes):
    labels = np.asarray(labels)
    if labels.ndim != 1 or (labels.size and
                            (labels.min() < 0 or labels.max() >= num_classes)):
        raise ContractError("labels must be a vector of classes in [0, %d), "
                            "got %r" % (num_classes, labels.tolist()))
    return np.eye(num_classes)[labels.astype(int)]


def loss_task(joint_logits, labels):
    """Cross-entropy of every (frame, joint) logit vector against its
    sequence label, averaged over batch, frames and joints.

    With two classes this is the binary cross-entropy of the softmax
    probability of class 1.

    Raises
    ------
    ContractError
        If a label lies outside [0, K).
    """
    joint_logits = as_tensor(joint_logits)
    batch, _, _, classes = joint_logits.shape
    target = _one_hot(labels, classes)
    if target.shape[0] != batch:
        raise ShapeError("%d labels for a batch of %d" % (target.shape[0],
                                                          batch))
    target = target.reshape(batch, 1, 1, classes)
    log_probs = log_softmax(joint_logits, axis=-1)
    return -reduce_mean(reduce_sum(log_probs * target, axis=-1))


def sequence_cross_entropy(seq_logits, labels):
    """Mean cross-entropy of B x K sequence logits"""
    seq_logits = as_tensor(seq_logits)
    target = _one_hot(labels, seq_logits.shape[-1])
    return -reduce_mean(reduce_sum(log_softmax(seq_logits, axis=-1) * target,
                                   axis=-1))


def loss_align(Z_s, Z_t, temperature=settings.KD_TEMPERATURE):
    """KL(softmax(Z_s / T) || softmax(Z_t / T)) averaged over positions.

    The teacher logits are detached and no T^2 rescaling is applied.
    """
    Z_s, Z_t = as_tensor(Z_s), as_tensor(Z_t)
    if Z_s.shape != Z_t.shape:
        raise ShapeError("student logits %s and teacher logits %s differ"
                         % (Z_s.shape, Z_t.shape))
    return _relational_kl(Z_s, Z_t, temperature)


def loss_intra(F_s, F_t, tau=settings.RELATION_TEMPERATURE):
    """Match joint-joint similarity distributions within each sample"""
    F_s, F_t = as_tensor(F_s), as_tensor(F_t)
    _check_embeddings("student embeddings", F_s)
    _check_embeddings("teacher embeddings", F_t)
    if F_s.shape[:2] != F_t.shape[:2]:
        raise ShapeError("student embeddings %s and teacher embeddings %s "
                         "differ in batch or joints" % (F_s.shape, F_t.shape))
    return _relational_kl(joint_similarity(F_s),
                          joint_similarity(F_t.detach()), tau)


def loss_memory(F_s, bank, F_t, tau=settings.RELATION_TEMPERATURE):
    """Match joint-to-memory similarity distributions.

    An empty bank contributes 0 and logs a warning.
    """
    F_s, F_t = as_tensor(F_s), as_tensor(F_t)
    _check_embeddings("student embeddings", F_s)
    _check_embeddings("teacher embeddings", F_t)
    if not len(bank):
        LOGGER.warning("memory bank is empty, memory loss set to 0")
        return as_tensor(0.0)
    memory = as_tensor(bank.entries())
    if memory.shape[1] != F_s.shape[2] or memory.shape[1] != F_t.shape[2]:
        raise ShapeError("memory entries of width %d do not match embeddings "
                         "%s and %s" % (memory.shape[1], F_s.shape,
                                        F_t.shape))
    return _relational_kl(memory_similarity(F_s, memory),
                          memory_similarity(F_t.detach(), memory), tau)


def loss_region(F_s, R_t, R_s, tau=settings.RELATION_TEMPERATURE, F_t=None):
    """Match joint-to-temporal-region similarity distributions.

    The student relates ``F_s`` to its regions ``R_s``; the teacher relates
    ``F_t`` (or the detached ``F_s`` when omitted) to ``R_t``.
    """
    F_s, R_t, R_s = as_tensor(F_s), as_tensor(R_t), as_tensor(R_s)
    _check_embeddings("student embeddings", F_s)
    _check_embeddings("student regions", R_s)
    _check_embeddings("teacher regions", R_t, R_s.shape)
    if R_s.shape[1] < 1:
        raise ContractError("region loss needs at least one region")
    anchors = F_s.detach() if F_t is None else as_tensor(F_t).detach()
    return _relational_kl(region_similarity(F_s, R_s),
                          region_similarity(anchors, R_t.detach()), tau)


@dataclass
class LossComponents(object):
    """The five distillation terms"""
    task: Tensor
    align: Tensor
    intra: Tensor
    memory: Tensor
    region: Tensor

    def to_dict(self):
        return {item.name: float(np.sum(as_tensor(getattr(self,
                                                          item.name)).data))
                for item in fields(self)}


def total_cgrkd(components, config):
    """task + align + alpha * intra + beta * memory + gamma * region"""
    total = as_tensor(components.task)
    if config.use_align:
        total = total + components.align
    return total + config.alpha * as_tensor(components.intra) \
        + config.beta * as_tensor(components.memory) \
        + config.gamma * as_tensor(components.region)


def compute_components(student, teacher, labels, bank, config):
    """Evaluate all five terms for a student/teacher ModelOutput pair.

    The relation matrices of each side are built once and shared by the
    three relational terms. ``bank`` is read as it stands; update it
    afterwards with :func:`memory_update`.
    """
    tau = config.relation_temperature
    align = loss_align(student.joint_logits, teacher.joint_logits,
                       config.kd_temperature) if config.use_align \
        else as_tensor(0.0)
    F_s, F_t = as_tensor(student.joint_embeddings), \
        as_tensor(teacher.joint_embeddings)
    _check_embeddings("student embeddings", F_s)
    _check_embeddings("teacher embeddings", F_t, F_s.shape)
    ours = relation_matrices(F_s, student.region_embeddings, bank)
    theirs = relation_matrices(F_t.detach(),
                               as_tensor(teacher.region_embeddings).detach(),
                               bank)
    if ours.P is None:
        LOGGER.warning("memory bank is empty, memory loss set to 0")
        memory = as_tensor(0.0)
    else:
        memory = _relational_kl(ours.P, theirs.P, tau)
    return LossComponents(
        task=loss_task(student.joint_logits, labels),
        align=align,
        intra=_relational_kl(ours.S, theirs.S, tau),
        memory=memory,
        region=_relational_kl(ours.R, theirs.R, tau))
