"""Optimization loops: FairBO (constrained EI), plain EI-based BO and random search.

Every strategy shares the same initial design for a given seed and counts
every evaluation, initial ones included, against the budget ``T``.  Record
indices are 1-based.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import acquisition as acq
from .errors import DomainError, NumericalError
from .fairness import ConstraintSpec, evaluate_constraints
from .gp import fit_gp, fit_gp_classifier
from .space import Config, SearchSpace

log = logging.getLogger(__name__)

PHASES = ("initial", "feasibility-greedy", "cEI", "ei", "random")
RETRY_JITTER = 1e-2

# independent generator streams per seed
_INIT, _RANDOM, _ACQ, _FIT = 0, 1, 2, 3


@dataclass
class EvaluationRecord:
    index: int
    config: Config
    objective: float
    constraint_values: list
    feasible: bool
    phase: str
    valid: bool = True
    error: str | None = None


@dataclass
class History:
    strategy: str
    seed: int
    specs: tuple
    records: list = field(default_factory=list)
    best_fair: EvaluationRecord | None = None
    fallback: EvaluationRecord | None = None  # infeasible; set only when best_fair is None
    aborted: str | None = None

    @property
    def result(self) -> EvaluationRecord | None:
        return self.best_fair if self.best_fair is not None else self.fallback

    @property
    def feasible_found(self) -> bool:
        return self.best_fair is not None


def initial_design(space: SearchSpace, T0: int, seed: int) -> list:
    rng = np.random.default_rng([seed, _INIT])
    return space.sample_many(rng, T0)


def _is_satisfied(value, spec: ConstraintSpec) -> bool:
    if spec.feedback == "binary":
        return value == 1
    return value <= spec.eps


def _evaluate(pipeline, config, specs, index, phase) -> EvaluationRecord:
    try:
        outcome = pipeline(config)
        objective = float(outcome.objective)
        if not math.isfinite(objective):
            raise NumericalError("objective is not finite")
        values, _, signals = evaluate_constraints(outcome.fairness, specs)
    except Exception as exc:  # an opaque pipeline may fail in any way
        log.warning("evaluation %d failed: %s", index, exc)
        return EvaluationRecord(index, config, math.nan, [math.nan] * len(specs), False, phase,
                                valid=False, error=f"{type(exc).__name__}: {exc}")
    recorded = [s if spec.feedback == "binary" else float(v)
                for v, s, spec in zip(values, signals, specs)]
    feasible = all(_is_satisfied(v, spec) for v, spec in zip(recorded, specs))
    return EvaluationRecord(index, config, objective, recorded, feasible, phase)


def _best_fair(records) -> EvaluationRecord | None:
    best = None
    for r in records:
        if r.valid and r.feasible and (best is None or r.objective < best.objective):
            best = r
    return best


class _Surrogates:
    """Per-iteration model fitting with one jitter-escalated retry."""

    def __init__(self, space, specs, merge_constraints, seed):
        self.space = space
        self.specs = specs
        self.merge = merge_constraints
        self.seed = seed

    def _fit(self, fn, *args, t, k):
        try:
            return fn(*args, seed=[self.seed, _FIT, t, k])
        except NumericalError:
            log.warning("surrogate fit failed at iteration %d; retrying with jitter %g", t, RETRY_JITTER)
            return fn(*args, seed=[self.seed, _FIT, t, k], jitter=RETRY_JITTER)

    def objective(self, records, t):
        valid = [r for r in records if r.valid]
        X = self.space.encode_many([r.config for r in valid])
        return self._fit(fit_gp, X, np.array([r.objective for r in valid]), t=t, k=0)

    def constraints(self, records, t) -> list:
        valid = [r for r in records if r.valid]
        X = self.space.encode_many([r.config for r in valid])
        if self.merge:
            labels = np.array([1.0 if r.feasible else -1.0 for r in valid])
            return [acq.ConstraintModel(self._fit(fit_gp_classifier, X, labels, t=t, k=1))]
        models = []
        for d, spec in enumerate(self.specs):
            y = np.array([r.constraint_values[d] for r in valid], dtype=float)
            if spec.feedback == "binary":
                model = self._fit(fit_gp_classifier, X, y, t=t, k=1 + d)
            else:
                model = self._fit(fit_gp, X, y, t=t, k=1 + d)
            models.append(acq.ConstraintModel(model, spec.eps))
        return models


def _check_budget(T0, T):
    if T0 < 1 or T <= T0:
        raise DomainError(f"need T > T0 >= 1, got T0={T0}, T={T}")


def _finalize(history: History, surrogates: _Surrogates | None):
    history.best_fair = _best_fair(history.records)
    if history.best_fair is not None or surrogates is None or not history.specs:
        return history
    valid = [r for r in history.records if r.valid]
    if not valid:
        return history
    try:
        ctx = acq.AcquisitionContext(None, surrogates.constraints(history.records, len(history.records) + 1))
        p = ctx.feasibility(surrogates.space.encode_many([r.config for r in valid]))
        history.fallback = valid[int(np.argmax(p))]
    except NumericalError as exc:
        log.warning("could not fit feasibility models for the fallback: %s", exc)
    return history


def _run(strategy, space, pipeline, specs, T0, T, seed, merge_constraints=False) -> History:
    if strategy == "rs":
        if T < 1 or T0 < 1:
            raise DomainError(f"need T >= 1 and T0 >= 1, got T0={T0}, T={T}")
        T0 = min(T0, T)
    else:
        _check_budget(T0, T)
    specs = tuple(specs)
    if strategy == "fairbo" and not specs:
        raise DomainError("FairBO needs at least one constraint")
    history = History(strategy, seed, specs)
    surrogates = _Surrogates(space, specs, merge_constraints, seed)
    for i, config in enumerate(initial_design(space, T0, seed), start=1):
        history.records.append(_evaluate(pipeline, config, specs, i, "initial"))

    random_rng = np.random.default_rng([seed, _RANDOM])
    for t in range(T0 + 1, T + 1):
        records = history.records
        valid = [r for r in records if r.valid]
        if strategy == "rs" or not valid:
            config, phase = space.sample_uniform(random_rng), "random"
        else:
            try:
                config, phase = _propose(strategy, space, surrogates, records, t, seed)
            except NumericalError as exc:
                history.aborted = f"surrogate failure at iteration {t}: {exc}"
                log.error(history.aborted)
                break
        history.records.append(_evaluate(pipeline, config, specs, t, phase))
    return _finalize(history, surrogates)


def _propose(strategy, space, surrogates, records, t, seed):
    rng = np.random.default_rng([seed, _ACQ, t])
    evaluated = space.encode_many([r.config for r in records if r.valid])
    if strategy == "bo":
        model = surrogates.objective(records, t)
        f_min = min(r.objective for r in records if r.valid)
        ctx = acq.AcquisitionContext(model)
        return acq.maximize_acquisition(space, lambda V: ctx.ei(V, f_min), rng, evaluated), "ei"
    incumbent = _best_fair(records)
    constraint_models = surrogates.constraints(records, t)
    if incumbent is None:
        ctx = acq.AcquisitionContext(None, constraint_models)
        return acq.maximize_acquisition(space, ctx.feasibility, rng, evaluated), "feasibility-greedy"
    ctx = acq.AcquisitionContext(surrogates.objective(records, t), constraint_models, incumbent.objective)
    return acq.maximize_acquisition(space, ctx.cei, rng, evaluated), "cEI"


def run_fairbo(space: SearchSpace, pipeline: Callable, specs: Sequence[ConstraintSpec],
               T0: int, T: int, seed: int, merge_constraints: bool = False) -> History:
    """Constrained BO: feasibility-greedy until a fair point exists, then constrained EI."""
    return _run("fairbo", space, pipeline, specs, T0, T, seed, merge_constraints)


def run_bo(space: SearchSpace, pipeline: Callable, T0: int, T: int, seed: int,
           specs: Sequence[ConstraintSpec] = ()) -> History:
    """EI-based BO; constraints are measured and recorded but never steer selection."""
    return _run("bo", space, pipeline, specs, T0, T, seed)


def run_random_search(space: SearchSpace, pipeline: Callable, T: int, seed: int,
                      specs: Sequence[ConstraintSpec] = (), T0: int = 5) -> History:
    """Uniform sampling; the first ``min(T0, T)`` draws are the shared initial design."""
    return _run("rs", space, pipeline, specs, T0, T, seed)


STRATEGIES = {"fairbo": run_fairbo, "bo": run_bo, "rs": run_random_search}


def run_strategy(strategy: str, space, pipeline, specs, T0, T, seed, merge_constraints=False) -> History:
    if strategy not in STRATEGIES:
        raise DomainError(f"unknown strategy {strategy!r}")
    return _run(strategy, space, pipeline, specs, T0, T, seed, merge_constraints and strategy == "fairbo")


def record_feasible(record: EvaluationRecord, specs: Sequence[ConstraintSpec]) -> bool:
    return record.valid and all(_is_satisfied(v, s) for v, s in zip(record.constraint_values, specs))


def best_feasible_curve(history: History, specs: Sequence[ConstraintSpec] | None = None) -> list:
    """Running minimum objective over feasible records; ``None`` until one exists."""
    specs = history.specs if specs is None else tuple(specs)
    curve, best = [], None
    for r in history.records:
        if record_feasible(r, specs) and (best is None or r.objective < best):
            best = r.objective
        curve.append(best)
    return curve


def first_feasible_iteration(history: History) -> int | None:
    for r in history.records:
        if record_feasible(r, history.specs):
            return r.index
    return None
