# -*- coding: utf-8 -*-

"""Confusion counts and classification metrics.

Counts are one-vs-rest per class. Binary reports quote the positive class
(index 1); with more classes the headline values are macro averages.
Divisions by zero yield 0 and are flagged in ``MetricsReport.undefined``.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
from sklearn.metrics import confusion_matrix

from .exceptions import ContractError


LOGGER = logging.getLogger(__name__)

METRIC_NAMES = ("accuracy", "sensitivity", "specificity", "precision", "f1")


@dataclass
class ConfusionCounts(object):
    """Per-class true/false positive/negative counts"""
    tp: np.ndarray
    tn: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    @classmethod
    def zeros(cls, num_classes):
        return cls(*(np.zeros(num_classes, dtype=int) for _ in range(4)))

    @classmethod
    def binary(cls, tp, tn, fp, fn):
        """Two-class counts given from the positive class's viewpoint"""
        return cls(tp=np.array([tn, tp]), tn=np.array([tp, tn]),
                   fp=np.array([fn, fp]), fn=np.array([fp, fn]))

    @property
    def num_classes(self):
        return len(self.tp)

    @property
    def total(self):
        return int(self.tp[0] + self.tn[0] + self.fp[0] + self.fn[0]) \
            if self.num_classes else 0

    def __add__(self, other):
        if other.num_classes != self.num_classes:
            raise ContractError("cannot merge counts over %d and %d classes"
                                % (self.num_classes, other.num_classes))
        return ConfusionCounts(tp=self.tp + other.tp, tn=self.tn + other.tn,
                               fp=self.fp + other.fp, fn=self.fn + other.fn)


def confusion(predictions, labels, num_classes):
    """Tally one-vs-rest counts of ``predictions`` against ``labels``.

    Raises
    ------
    ContractError
        If the lists differ in length or hold classes outside [0, K).
    """
    predictions = np.asarray(predictions, dtype=int).reshape(-1)
    labels = np.asarray(labels, dtype=int).reshape(-1)
    if predictions.shape != labels.shape:
        raise ContractError("%d predictions for %d labels"
                            % (len(predictions), len(labels)))
    if not len(labels):
        return ConfusionCounts.zeros(num_classes)
    both = np.concatenate([predictions, labels])
    if both.min() < 0 or both.max() >= num_classes:
        raise ContractError("class indices must lie in [0, %d)" % num_classes)

    matrix = confusion_matrix(labels, predictions,
                              labels=np.arange(num_classes))
    tp = np.diag(matrix)
    fp = matrix.sum(axis=0) - tp
    fn = matrix.sum(axis=1) - tp
    tn = matrix.sum() - tp - fp - fn
    return ConfusionCounts(tp=tp, tn=tn, fp=fp, fn=fn)


@dataclass
class MetricsReport(object):
    """Headline metrics plus per-class and macro values.

    Attributes
    ----------
    accuracy, sensitivity, specificity, precision, f1: float
        Headline values in [0, 1].
    per_class: dict
        Metric name to list of per-class values.
    macro: dict
        Metric name to unweighted mean over classes.
    undefined: list of str
        ``"<metric>[<class>]"`` for every zero-denominator case.
    """
    accuracy: float
    sensitivity: float
    specificity: float
    precision: float
    f1: float
    per_class: Dict[str, List[float]] = field(default_factory=dict)
    macro: Dict[str, float] = field(default_factory=dict)
    undefined: List[str] = field(default_factory=list)

    def to_row(self):
        row = {name: getattr(self, name) for name in METRIC_NAMES}
        row["undefined"] = list(self.undefined)
        return row

    def to_dict(self):
        document = self.to_row()
        document["per_class"] = self.per_class
        document["macro"] = self.macro
        return document


def _ratio(numerator, denominator, flag, undefined):
    if denominator == 0:
        undefined.append(flag)
        return 0.0
    return float(numerator) / float(denominator)


def metrics(counts):
    """Apply the five metric formulas to ``counts``"""
    undefined = []
    per_class = {name: [] for name in METRIC_NAMES}
    total = counts.total
    for c in range(counts.num_classes):
        tp, tn, fp, fn = (int(v[c]) for v in (counts.tp, counts.tn,
                                              counts.fp, counts.fn))
        precision = _ratio(tp, tp + fp, "precision[%d]" % c, undefined)
        sensitivity = _ratio(tp, tp + fn, "sensitivity[%d]" % c, undefined)
        per_class["accuracy"].append(_ratio(tp + tn, total,
                                            "accuracy[%d]" % c, undefined))
        per_class["sensitivity"].append(sensitivity)
        per_class["specificity"].append(_ratio(tn, tn + fp,
                                               "specificity[%d]" % c,
                                               undefined))
        per_class["precision"].append(precision)
        per_class["f1"].append(_ratio(2.0 * precision * sensitivity,
                                      precision + sensitivity,
                                      "f1[%d]" % c, undefined))

    macro = {name: float(np.mean(values)) if values else 0.0
             for name, values in per_class.items()}
    if counts.num_classes == 2:
        headline = {name: values[1] for name, values in per_class.items()}
    else:
        headline = dict(macro)
    headline["accuracy"] = _ratio(int(np.sum(counts.tp)), total, "accuracy",
                                  []) if total else 0.0
    if undefined:
        LOGGER.warning("zero denominator for %s; reported as 0",
                       ", ".join(undefined))
    return MetricsReport(per_class=per_class, macro=macro,
                         undefined=undefined, **headline)
