"""Group-fairness metrics for a binary sensitive attribute.

DSP: |P(Yhat=1 | S=0) - P(Yhat=1 | S=1)|
DEO: |P(Yhat=1 | Y=1, S=0) - P(Yhat=1 | Y=1, S=1)|   (true-positive rate gap)
DFP: |P(Yhat=1 | Y=0, S=0) - P(Yhat=1 | Y=0, S=1)|   (false-positive rate gap)

A metric whose conditioning group is empty is undefined and raises
:class:`UndefinedMetricError` instead of reporting a silent zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError, UndefinedMetricError

METRICS = ("DSP", "DEO", "DFP")
FEEDBACKS = ("numeric", "binary")


@dataclass(frozen=True)
class GroupCounts:
    n_total: int = 0
    n_pos_pred: int = 0
    n_tp: int = 0
    n_fp: int = 0
    n_pos_label: int = 0
    n_neg_label: int = 0


@dataclass(frozen=True)
class GroupOutcomeCounts:
    groups: tuple  # (GroupCounts for S=0, GroupCounts for S=1)

    def __getitem__(self, s: int) -> GroupCounts:
        return self.groups[s]


def _as_binary(name, x):
    a = np.asarray(x)
    if a.ndim != 1:
        raise DomainError(f"{name} must be a 1-D vector")
    if not np.all((a == 0) | (a == 1)):
        raise DomainError(f"{name} entries must be 0 or 1")
    return a.astype(bool)


def tally(preds, labels, sensitive) -> GroupOutcomeCounts:
    p = _as_binary("preds", preds)
    y = _as_binary("labels", labels)
    s = _as_binary("sensitive", sensitive)
    if not (len(p) == len(y) == len(s)) or len(p) == 0:
        raise DomainError("preds, labels and sensitive must have equal non-zero length")
    groups = []
    for g in (False, True):
        m = s == g
        groups.append(GroupCounts(
            n_total=int(m.sum()),
            n_pos_pred=int((p & m).sum()),
            n_tp=int((p & y & m).sum()),
            n_fp=int((p & ~y & m).sum()),
            n_pos_label=int((y & m).sum()),
            n_neg_label=int((~y & m).sum()),
        ))
    return GroupOutcomeCounts(tuple(groups))


def dsp(counts: GroupOutcomeCounts) -> float:
    g0, g1 = counts.groups
    if g0.n_total == 0 or g1.n_total == 0:
        raise UndefinedMetricError("DSP")
    return abs(g0.n_pos_pred / g0.n_total - g1.n_pos_pred / g1.n_total)


def deo(counts: GroupOutcomeCounts) -> float:
    g0, g1 = counts.groups
    if g0.n_pos_label == 0 or g1.n_pos_label == 0:
        raise UndefinedMetricError("DEO")
    return abs(g0.n_tp / g0.n_pos_label - g1.n_tp / g1.n_pos_label)


def dfp(counts: GroupOutcomeCounts) -> float:
    g0, g1 = counts.groups
    if g0.n_neg_label == 0 or g1.n_neg_label == 0:
        raise UndefinedMetricError("DFP")
    return abs(g0.n_fp / g0.n_neg_label - g1.n_fp / g1.n_neg_label)


_METRIC_FUNCS = {"DSP": dsp, "DEO": deo, "DFP": dfp}


@dataclass(frozen=True)
class FairnessReport:
    dsp: float | None = None
    deo: float | None = None
    dfp: float | None = None
    undefined: frozenset = field(default_factory=frozenset)

    def value(self, metric: str) -> float:
        v = getattr(self, metric.lower())
        if v is None:
            raise UndefinedMetricError(metric)
        return v

    def as_dict(self) -> dict:
        return {m: getattr(self, m.lower()) for m in METRICS}


def fairness_report(counts: GroupOutcomeCounts) -> FairnessReport:
    values, undefined = {}, set()
    for name, fn in _METRIC_FUNCS.items():
        try:
            values[name.lower()] = fn(counts)
        except UndefinedMetricError:
            values[name.lower()] = None
            undefined.add(name)
    return FairnessReport(**values, undefined=frozenset(undefined))


def report_from_predictions(preds, labels, sensitive) -> FairnessReport:
    return fairness_report(tally(preds, labels, sensitive))


@dataclass(frozen=True)
class ConstraintSpec:
    metric: str
    eps: float
    feedback: str = "numeric"

    def __post_init__(self):
        metric = self.metric.upper()
        object.__setattr__(self, "metric", metric)
        if metric not in METRICS:
            raise DomainError(f"unknown fairness metric {self.metric!r}; expected one of {METRICS}")
        if not self.eps >= 0:
            raise DomainError(f"eps must be >= 0, got {self.eps}")
        if self.feedback not in FEEDBACKS:
            raise DomainError(f"feedback must be one of {FEEDBACKS}")


def evaluate_constraints(report: FairnessReport, specs: Sequence[ConstraintSpec]):
    """Return ``(values, all_satisfied, signals)``; ``value <= eps`` counts as satisfied."""
    values = [report.value(spec.metric) for spec in specs]
    satisfied = [v <= spec.eps for v, spec in zip(values, specs)]
    signals = [1 if ok else -1 for ok in satisfied]
    return values, all(satisfied), signals
