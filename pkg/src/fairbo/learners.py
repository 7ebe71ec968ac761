"""Built-in tunable pipeline: an elastic-net logistic regression trained by
mini-batch stochastic proximal gradient descent."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy.special import expit

from .data import Dataset
from .errors import DomainError, NumericalError, UndefinedMetricError
from .fairness import ConstraintSpec, FairnessReport, report_from_predictions
from .space import Dimension, SearchSpace

REGULARIZATION_TYPES = ("L1", "L2", "ElasticNet")
SCHEDULES = ("Constant", "Optimal", "Invscaling", "Adaptive")

BATCH_SIZE = 64
ADAPTIVE_PATIENCE = 3
ADAPTIVE_TOL = 1e-4
ADAPTIVE_DIVISOR = 5.0


def linear_learner_space() -> SearchSpace:
    """The six-dimensional search space of the linear learner."""
    return SearchSpace((
        Dimension("iterations", "integer-linear", 1, 128),
        Dimension("regularization_type", "categorical", categories=REGULARIZATION_TYPES),
        Dimension("elastic_mix", "continuous-linear", 0.0, 1.0),
        Dimension("alpha", "continuous-log", 1e-3, 1e3),
        Dimension("eta0", "continuous-log", 1e-4, 0.1),
        Dimension("schedule", "categorical", categories=SCHEDULES),
    ))


@dataclass(frozen=True)
class LinearLearnerConfig:
    iterations: int = 32
    regularization_type: str = "L2"
    elastic_mix: float = 0.15
    alpha: float = 1e-3
    eta0: float = 0.01
    schedule: str = "Constant"

    def __post_init__(self):
        linear_learner_space().validate(self.as_dict())

    def as_dict(self) -> dict:
        return dict(iterations=self.iterations, regularization_type=self.regularization_type,
                    elastic_mix=self.elastic_mix, alpha=self.alpha, eta0=self.eta0,
                    schedule=self.schedule)

    @classmethod
    def from_config(cls, config: Mapping) -> "LinearLearnerConfig":
        return cls(**{k: config[k] for k in cls.__dataclass_fields__})

    @property
    def l1_ratio(self) -> float:
        return {"L1": 1.0, "L2": 0.0}.get(self.regularization_type, self.elastic_mix)


@dataclass(frozen=True, eq=False)
class LearnerModel:
    weights: np.ndarray
    intercept: float

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.weights):
            raise DomainError(f"expected {len(self.weights)} feature columns, got shape {X.shape}")
        return X @ self.weights + self.intercept


def predict(model: LearnerModel, features) -> np.ndarray:
    """Deterministic 0/1 predictions; a score of exactly 0 is positive."""
    return (model.decision_function(features) >= 0).astype(int)


def _objective(X, y, w, b, alpha, l1_ratio):
    z = X @ w + b
    loss = np.mean(np.logaddexp(0.0, z) - y * z)
    return loss + alpha * (l1_ratio * np.abs(w).sum() + 0.5 * (1 - l1_ratio) * w @ w)


def _prox(v, step, alpha, l1_ratio):
    """Proximal map of step * alpha * (l1_ratio |w|_1 + (1 - l1_ratio)/2 |w|^2)."""
    shrunk = np.sign(v) * np.maximum(np.abs(v) - step * alpha * l1_ratio, 0.0)
    return shrunk / (1.0 + step * alpha * (1.0 - l1_ratio))


def train_linear_learner(config: LinearLearnerConfig, train: Dataset,
                         rng: np.random.Generator) -> LearnerModel:
    X = np.asarray(train.features, dtype=float)
    y = np.asarray(train.labels, dtype=float)
    n, p = X.shape
    if n == 0:
        raise DomainError("cannot train on an empty dataset")
    alpha, l1_ratio, eta0 = config.alpha, config.l1_ratio, config.eta0
    w = np.zeros(p)
    base = min(max(y.mean(), 1e-3), 1 - 1e-3)
    b = math.log(base / (1 - base))
    t = 0
    t0 = 1.0 / (alpha * eta0)
    eta = eta0
    best_obj, stall = np.inf, 0
    for epoch in range(1, config.iterations + 1):
        perm = rng.permutation(n)
        for start in range(0, n, BATCH_SIZE):
            idx = perm[start:start + BATCH_SIZE]
            t += 1
            if config.schedule == "Invscaling":
                eta = eta0 / math.sqrt(t)
            elif config.schedule == "Optimal":
                eta = 1.0 / (alpha * (t0 + t - 1))
            Xb = X[idx]
            r = expit(Xb @ w + b) - y[idx]
            w = _prox(w - eta * (Xb.T @ r) / len(idx), eta, alpha, l1_ratio)
            b -= eta * r.mean()
        obj = _objective(X, y, w, b, alpha, l1_ratio)
        if not math.isfinite(obj) or not np.all(np.isfinite(w)):
            raise NumericalError(f"training loss became non-finite at epoch {epoch}")
        if config.schedule == "Adaptive":
            if obj < best_obj - ADAPTIVE_TOL:
                best_obj, stall = obj, 0
            else:
                stall += 1
                if stall >= ADAPTIVE_PATIENCE:
                    eta /= ADAPTIVE_DIVISOR
                    stall = 0
    return LearnerModel(w, float(b))


@dataclass(frozen=True)
class EvaluationOutcome:
    validation_error: float
    fairness: FairnessReport
    train_seconds: float = 0.0

    @property
    def objective(self) -> float:
        return self.validation_error


def evaluate_pipeline(config: Mapping, train: Dataset, validation: Dataset,
                      specs: Sequence[ConstraintSpec], rng: np.random.Generator) -> EvaluationOutcome:
    """Train on ``train``; report validation error and fairness on ``validation``."""
    cfg = config if isinstance(config, LinearLearnerConfig) else LinearLearnerConfig.from_config(config)
    started = time.perf_counter()
    model = train_linear_learner(cfg, train, rng)
    elapsed = time.perf_counter() - started
    preds = predict(model, validation.features)
    error = float(np.mean(preds != validation.labels))
    report = report_from_predictions(preds, validation.labels, validation.sensitive)
    for spec in specs:
        if spec.metric in report.undefined:
            raise UndefinedMetricError(spec.metric, f"{spec.metric} is undefined on the validation split")
    return EvaluationOutcome(error, report, elapsed)


class LinearLearnerPipeline:
    """Opaque evaluator ``config -> EvaluationOutcome`` over a fixed split.

    Each call trains from a fresh generator seeded with ``seed`` so the same
    configuration always yields the same outcome.
    """

    def __init__(self, train: Dataset, validation: Dataset, specs: Sequence[ConstraintSpec] = (),
                 seed: int = 0):
        self.train = train
        self.validation = validation
        self.specs = tuple(specs)
        self.seed = seed

    def __call__(self, config: Mapping) -> EvaluationOutcome:
        return evaluate_pipeline(config, self.train, self.validation, self.specs,
                                 np.random.default_rng(self.seed))


class BoundCheck(NamedTuple):
    dsp: float
    bound: float
    holds: bool
    printed_bound: float


def dsp_linear_bound_check(model: LearnerModel, validation: Dataset, sensitive_index: int,
                           premise: bool = False) -> BoundCheck:
    """Compare empirical DSP with the flip-the-sensitive-feature bound.

    For group S=0, flipping the sensitive coordinate moves the score by
    ``w_s``, so predictions can only change for scores in the window between
    ``-w_s`` and 0.  ``printed_bound`` is P(-w_s <= score < 0 | S=0), which is
    empty for negative ``w_s``; ``bound`` uses the sign-aware window and is the
    one ``holds`` is judged against, with slack ``3 / sqrt(n_0)``.

    ``premise`` must be set by the caller to assert that the non-sensitive
    features are identically distributed across groups.
    """
    if not premise:
        raise DomainError("the bound assumes features independent of S; pass premise=True to assert it")
    if not 0 <= sensitive_index < len(model.weights):
        raise DomainError("sensitive_index out of range")
    X = validation.features
    score = model.decision_function(X)
    preds = (score >= 0).astype(int)
    report = report_from_predictions(preds, validation.labels, validation.sensitive)
    if report.dsp is None:
        raise UndefinedMetricError("DSP")
    g0 = validation.sensitive == 0
    s0 = score[g0]
    w_s = float(model.weights[sensitive_index])
    printed = float(np.mean((-w_s <= s0) & (s0 < 0)))
    if w_s >= 0:
        bound = printed
    else:
        bound = float(np.mean((0 <= s0) & (s0 < -w_s)))
    slack = 3.0 * math.sqrt(1.0 / max(int(g0.sum()), 1))
    return BoundCheck(report.dsp, bound, report.dsp <= bound + slack, printed)
