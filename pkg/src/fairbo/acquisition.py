"""Acquisition functions and their maximization over a search space."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import DomainError, StateError
from .gp import GpClassifier, GpModel
from .space import Config, SearchSpace

SIGMA_FLOOR = 1e-12
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

POOL_SIZE = 2000
N_REFINE = 5
N_SWEEPS = 20
GOLDEN_STEPS = 24


def _check_finite(**values):
    for name, v in values.items():
        if not math.isfinite(v):
            raise DomainError(f"{name} must be finite, got {v!r}")


def ei_array(mean, variance, f_min):
    """Vectorized EI for minimization; see :func:`expected_improvement`."""
    mean = np.asarray(mean, dtype=float)
    sigma = np.sqrt(np.maximum(np.asarray(variance, dtype=float), 0.0))
    out = np.maximum(f_min - mean, 0.0)
    ok = sigma >= SIGMA_FLOOR
    if np.any(ok):
        s = sigma[ok] if sigma.ndim else sigma
        z = (f_min - (mean[ok] if mean.ndim else mean)) / s
        val = s * (z * ndtr(z) + INV_SQRT_2PI * np.exp(-0.5 * z * z))
        if out.ndim:
            out[ok] = np.maximum(val, 0.0)
        else:
            out = np.maximum(val, 0.0)
    return out


def expected_improvement(mean: float, variance: float, f_min: float) -> float:
    """E[max(0, f_min - Y)] for Y ~ N(mean, variance)."""
    _check_finite(mean=mean, variance=variance, f_min=f_min)
    if variance < 0:
        raise DomainError("variance must be non-negative")
    return float(ei_array(mean, variance, f_min))


def pof_array(mean, variance, eps):
    mean = np.asarray(mean, dtype=float)
    sigma = np.sqrt(np.maximum(np.asarray(variance, dtype=float), 0.0))
    safe = np.where(sigma >= SIGMA_FLOOR, sigma, 1.0)
    return np.where(sigma >= SIGMA_FLOOR, ndtr((eps - mean) / safe), (mean <= eps).astype(float))


def probability_of_feasibility(mean: float, variance: float, eps: float) -> float:
    """P(c <= eps) for c ~ N(mean, variance)."""
    _check_finite(mean=mean, variance=variance, eps=eps)
    if variance < 0:
        raise DomainError("variance must be non-negative")
    return float(pof_array(mean, variance, eps))


def joint_feasibility(probs: Sequence[float]) -> float:
    """Product of per-constraint feasibility probabilities."""
    if len(probs) == 0:
        raise DomainError("joint_feasibility needs at least one probability")
    return float(np.prod(np.asarray(probs, dtype=float)))


@dataclass
class ConstraintModel:
    model: GpModel | GpClassifier
    eps: float = 0.0

    def __post_init__(self):
        if not self.eps >= 0:
            raise DomainError("constraint threshold must be >= 0")

    def feasibility(self, Xq) -> np.ndarray:
        if isinstance(self.model, GpClassifier):
            # positive class means "constraint satisfied"
            return self.model.predict_proba(Xq)
        mean, var = self.model.predict(Xq)
        return pof_array(mean, var, self.eps)


@dataclass
class AcquisitionContext:
    objective_model: GpModel | None
    constraint_models: list = field(default_factory=list)
    fair_incumbent: float | None = None

    def feasibility(self, Xq) -> np.ndarray:
        Xq = np.atleast_2d(Xq)
        p = np.ones(Xq.shape[0])
        for cm in self.constraint_models:
            p = p * cm.feasibility(Xq)
        return p

    def ei(self, Xq, f_min: float) -> np.ndarray:
        mean, var = self.objective_model.predict(Xq)
        return ei_array(mean, var, f_min)

    def cei(self, Xq) -> np.ndarray:
        if self.fair_incumbent is None:
            raise StateError("constrained EI needs a fair incumbent; use the feasibility phase")
        return self.ei(Xq, self.fair_incumbent) * self.feasibility(Xq)


def constrained_ei(ctx: AcquisitionContext, x) -> float:
    return float(ctx.cei(np.asarray(x, dtype=float)[None, :])[0])


def _golden_coordinate(score, V, j, values):
    """Golden-section search on coordinate ``j`` of every row of ``V`` at once.

    Rows only move when the search finds a strictly better value.
    """
    m = V.shape[0]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    lo, hi = np.zeros(m), np.ones(m)
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)

    def at(t):
        W = V.copy()
        W[:, j] = t
        return score(W)

    fc, fd = at(c), at(d)
    for _ in range(GOLDEN_STEPS):
        left = fc > fd  # maximizing: keep [lo, d], else [c, hi]
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        new_c = np.where(left, hi - invphi * (hi - lo), d)
        new_d = np.where(left, c, lo + invphi * (hi - lo))
        f_new = at(np.where(left, new_c, new_d))
        fc, fd = np.where(left, f_new, fd), np.where(left, fc, f_new)
        c, d = new_c, new_d
    t = (lo + hi) / 2.0
    ft = at(t)
    better = ft > values
    V[better, j] = t[better]
    return np.where(better, ft, values)


def _categorical_block(score, V, sl, values):
    width = sl.stop - sl.start
    for k in range(width):
        W = V.copy()
        W[:, sl] = 0.0
        W[:, sl.start + k] = 1.0
        f = score(W)
        better = f > values
        V[better] = W[better]
        values = np.where(better, f, values)
    return values


def refine(space: SearchSpace, score, V, values, sweeps: int = N_SWEEPS):
    """Coordinate-wise local search from each row of ``V`` (modified in place)."""
    for _ in range(sweeps):
        before = values.copy()
        for dim, sl in space.blocks():
            if dim.kind == "categorical":
                values = _categorical_block(score, V, sl, values)
            else:
                values = _golden_coordinate(score, V, sl.start, values)
        if np.all(values <= before):
            break
    return values


def maximize_encoded(space: SearchSpace, score: Callable, rng: np.random.Generator,
                     evaluated=None, pool_size: int = POOL_SIZE, n_refine: int = N_REFINE,
                     sweeps: int = N_SWEEPS):
    """Return ``(v, value)`` approximately maximizing ``score`` over encodings.

    ``score`` maps an ``(m, w)`` array of encodings to ``m`` values.
    """
    pool = space.sample_encoded(rng, pool_size)
    if evaluated is not None and len(evaluated):
        pool = np.vstack([pool, np.atleast_2d(evaluated)])
    values = np.asarray(score(pool), dtype=float)
    values = np.where(np.isfinite(values), values, -np.inf)
    order = np.argsort(-values, kind="stable")[:n_refine]
    V = pool[order].copy()
    vals = refine(space, score, V, values[order].copy(), sweeps)
    best = int(np.argmax(vals))  # first maximum wins ties
    return V[best], float(vals[best])


def maximize_acquisition(space: SearchSpace, score: Callable, rng: np.random.Generator,
                         evaluated=None, **kwargs) -> Config:
    v, _ = maximize_encoded(space, score, rng, evaluated, **kwargs)
    return space.decode(v)
