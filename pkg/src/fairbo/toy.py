"""A cheap analytic benchmark with a small feasible region.

The objective is a quadratic bowl centred outside the feasible disk, so the
unconstrained optimum violates the constraint.  The constraint value lies in
[0, 1) and is reported as the DSP entry of a :class:`FairnessReport` so the
tuner treats it like a fairness measurement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fairness import FairnessReport
from .space import Dimension, SearchSpace

OBJECTIVE_CENTER = np.array([0.2, 0.25])
CONSTRAINT_CENTER = np.array([0.72, 0.68])
FEASIBLE_RADIUS = 0.16
EPS = 0.1
# c(x) = 1 - exp(-d^2 / (2 s^2)) <= EPS exactly on the disk of FEASIBLE_RADIUS
CONSTRAINT_SCALE = FEASIBLE_RADIUS / math.sqrt(-2.0 * math.log(1.0 - EPS))


def toy_space() -> SearchSpace:
    return SearchSpace((
        Dimension("x1", "continuous-linear", 0.0, 1.0),
        Dimension("x2", "continuous-linear", 0.0, 1.0),
    ))


def toy_objective(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sum((x - OBJECTIVE_CENTER) ** 2))


def toy_constraint(x) -> float:
    x = np.asarray(x, dtype=float)
    d2 = float(np.sum((x - CONSTRAINT_CENTER) ** 2))
    return 1.0 - math.exp(-d2 / (2.0 * CONSTRAINT_SCALE**2))


def feasible_optimum() -> float:
    """Best objective value attainable inside the feasible disk."""
    gap = float(np.linalg.norm(OBJECTIVE_CENTER - CONSTRAINT_CENTER))
    return (gap - FEASIBLE_RADIUS) ** 2


@dataclass(frozen=True)
class ToyOutcome:
    objective: float
    fairness: FairnessReport


class ToyPipeline:
    """Callable ``config -> ToyOutcome``; the constraint lands in the DSP slot.

    ``constant_constraint`` replaces the constraint by a fixed value, giving a
    problem whose constraint is always satisfied for eps above that value.
    """

    def __init__(self, constant_constraint: float | None = None):
        self.constant_constraint = constant_constraint

    def __call__(self, config) -> ToyOutcome:
        x = np.array([config["x1"], config["x2"]], dtype=float)
        c = toy_constraint(x) if self.constant_constraint is None else self.constant_constraint
        return ToyOutcome(toy_objective(x), FairnessReport(dsp=c, deo=c, dfp=c))
