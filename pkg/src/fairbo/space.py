"""Hyperparameter search spaces and their unit-cube encoding.

Every configuration is encoded into ``[0, 1]^w`` where ``w`` is the
encoded width: one coordinate per numeric dimension, one per label for
categorical dimensions (one-hot).  Log-scaled dimensions are encoded by
``log(value / lower) / log(upper / lower)``.  Integer dimensions are
treated as continuous in the encoding and rounded (half up) on decode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import DomainError

KINDS = ("continuous-linear", "continuous-log", "integer-linear", "integer-log", "categorical")

Config = dict  # dimension name -> native value


@dataclass(frozen=True)
class Dimension:
    name: str
    kind: str
    lower: float | None = None
    upper: float | None = None
    categories: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"dimension {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical":
            cats = tuple(self.categories)
            object.__setattr__(self, "categories", cats)
            if len(cats) < 2:
                raise DomainError(f"dimension {self.name!r}: categorical needs at least 2 categories")
            if len(set(cats)) != len(cats):
                raise DomainError(f"dimension {self.name!r}: categories must be distinct")
            return
        if self.lower is None or self.upper is None:
            raise DomainError(f"dimension {self.name!r}: lower and upper are required")
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "upper", float(self.upper))
        if not self.lower < self.upper:
            raise DomainError(f"dimension {self.name!r}: need lower < upper")
        if self.is_log and self.lower <= 0:
            raise DomainError(f"dimension {self.name!r}: log-scaled bounds must be positive")
        if self.is_integer and (self.lower != round(self.lower) or self.upper != round(self.upper)):
            raise DomainError(f"dimension {self.name!r}: integer bounds must be integral")

    @property
    def is_log(self) -> bool:
        return self.kind.endswith("-log")

    @property
    def is_integer(self) -> bool:
        return self.kind.startswith("integer")

    @property
    def width(self) -> int:
        return len(self.categories) if self.kind == "categorical" else 1

    def _to_unit(self, value: float) -> float:
        if self.is_log:
            return math.log(value / self.lower) / math.log(self.upper / self.lower)
        return (value - self.lower) / (self.upper - self.lower)

    def _from_unit(self, u):
        u = np.clip(u, 0.0, 1.0)
        if self.is_log:
            value = self.lower * (self.upper / self.lower) ** u
        else:
            value = self.lower + u * (self.upper - self.lower)
        return np.clip(value, self.lower, self.upper)

    def check(self, value: Any) -> None:
        if self.kind == "categorical":
            if value not in self.categories:
                raise DomainError(f"dimension {self.name!r}: {value!r} is not one of {list(self.categories)}")
            return
        if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
            raise DomainError(f"dimension {self.name!r}: expected a number, got {value!r}")
        if not (self.lower <= value <= self.upper) or math.isnan(value):
            raise DomainError(f"dimension {self.name!r}: {value!r} outside [{self.lower:g}, {self.upper:g}]")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Dimension":
        return cls(
            name=d["name"],
            kind=d["kind"],
            lower=d.get("lower"),
            upper=d.get("upper"),
            categories=tuple(d.get("categories", ())),
        )


@dataclass(frozen=True)
class SearchSpace:
    dimensions: tuple
    _offsets: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        dims = tuple(self.dimensions)
        object.__setattr__(self, "dimensions", dims)
        if not dims:
            raise DomainError("search space needs at least one dimension")
        names = [d.name for d in dims]
        if len(set(names)) != len(names):
            raise DomainError(f"dimension names must be unique: {names}")
        offsets, pos = [], 0
        for d in dims:
            offsets.append(pos)
            pos += d.width
        object.__setattr__(self, "_offsets", tuple(offsets))

    @classmethod
    def from_declaration(cls, decl: Sequence[Mapping[str, Any]]) -> "SearchSpace":
        return cls(tuple(Dimension.from_dict(d) for d in decl))

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dimensions]

    @property
    def encoded_width(self) -> int:
        return sum(d.width for d in self.dimensions)

    def blocks(self):
        """Yield ``(dimension, slice)`` pairs into the encoded vector."""
        for d, off in zip(self.dimensions, self._offsets):
            yield d, slice(off, off + d.width)

    def validate(self, config: Mapping[str, Any]) -> None:
        extra = set(config) - set(self.names)
        if extra:
            raise DomainError(f"unknown dimensions in config: {sorted(extra)}")
        for d in self.dimensions:
            if d.name not in config:
                raise DomainError(f"dimension {d.name!r} missing from config")
            d.check(config[d.name])

    def encode(self, config: Mapping[str, Any]) -> np.ndarray:
        self.validate(config)
        v = np.zeros(self.encoded_width)
        for d, sl in self.blocks():
            value = config[d.name]
            if d.kind == "categorical":
                v[sl.start + d.categories.index(value)] = 1.0
            else:
                v[sl.start] = d._to_unit(float(value))
        return np.clip(v, 0.0, 1.0)

    def encode_many(self, configs: Sequence[Mapping[str, Any]]) -> np.ndarray:
        if not configs:
            return np.zeros((0, self.encoded_width))
        return np.stack([self.encode(c) for c in configs])

    def decode(self, v) -> Config:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.encoded_width,):
            raise DomainError(f"expected a vector of length {self.encoded_width}, got shape {v.shape}")
        config = {}
        for d, sl in self.blocks():
            if d.kind == "categorical":
                # np.argmax returns the first maximum: ties go to declaration order
                config[d.name] = d.categories[int(np.argmax(v[sl]))]
                continue
            value = float(d._from_unit(v[sl.start]))
            if d.is_integer:
                value = int(min(max(math.floor(value + 0.5), d.lower), d.upper))
            config[d.name] = value
        return config

    def sample_uniform(self, rng: np.random.Generator) -> Config:
        """Draw one configuration, independently per dimension."""
        config = {}
        for d in self.dimensions:
            if d.kind == "categorical":
                config[d.name] = d.categories[int(rng.integers(len(d.categories)))]
            elif d.kind == "integer-linear":
                config[d.name] = int(rng.integers(int(d.lower), int(d.upper) + 1))
            elif d.kind == "integer-log":
                value = float(d._from_unit(rng.random()))
                config[d.name] = int(min(max(math.floor(value + 0.5), d.lower), d.upper))
            else:
                config[d.name] = float(d._from_unit(rng.random()))
        return config

    def sample_many(self, rng: np.random.Generator, n: int) -> list[Config]:
        return [self.sample_uniform(rng) for _ in range(n)]

    def sample_encoded(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` encodings distributed like ``encode(sample_uniform(rng))``, drawn in bulk."""
        V = np.zeros((n, self.encoded_width))
        for d, sl in self.blocks():
            if d.kind == "categorical":
                V[np.arange(n), sl.start + rng.integers(len(d.categories), size=n)] = 1.0
            elif d.kind == "integer-linear":
                k = rng.integers(int(d.lower), int(d.upper) + 1, size=n)
                V[:, sl.start] = (k - d.lower) / (d.upper - d.lower)
            elif d.kind == "integer-log":
                k = np.clip(np.floor(d._from_unit(rng.random(n)) + 0.5), d.lower, d.upper)
                V[:, sl.start] = np.log(k / d.lower) / math.log(d.upper / d.lower)
            else:
                V[:, sl.start] = rng.random(n)
        return V
