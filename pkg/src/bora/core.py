"""Search spaces, datasets and experiment cards shared by every other module."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

GRID_TOL = 1e-9
SOURCES = ("init", "a1", "a2", "a3", "fallback_random")


class SpaceError(ValueError):
    """Raised for malformed variables, constraints or points."""


class DuplicatePointError(ValueError):
    """Raised when a sample with an already-seen canonical key is inserted."""


class SamplerExhausted(RuntimeError):
    """Raised when a constrained space cannot yield enough fresh points."""


@dataclass(frozen=True)
class Variable:
    name: str
    lower: float
    upper: float
    kind: str = "continuous"
    step: float | None = None
    unit: str = ""
    description: str = ""

    def __post_init__(self):
        if not self.name or not self.name.replace("_", "").replace("-", "").isalnum():
            raise SpaceError(f"invalid variable name {self.name!r}")
        if self.kind not in ("continuous", "discrete"):
            raise SpaceError(f"{self.name}: unknown kind {self.kind!r}")
        if not self.lower < self.upper:
            raise SpaceError(f"{self.name}: lower must be < upper")
        if self.kind == "discrete":
            if self.step is None or self.step <= 0:
                raise SpaceError(f"{self.name}: discrete variables need step > 0")
            n = (self.upper - self.lower) / self.step
            if abs(n - round(n)) * self.step > GRID_TOL:
                raise SpaceError(f"{self.name}: range is not a multiple of step")

    @property
    def n_steps(self) -> int:
        return int(round((self.upper - self.lower) / self.step))

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind, "lower": self.lower, "upper": self.upper}
        if self.kind == "discrete":
            d["step"] = self.step
        d["unit"] = self.unit
        d["description"] = self.description
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Variable":
        return cls(
            name=d["name"],
            kind=d.get("kind", "continuous"),
            lower=float(d["lower"]),
            upper=float(d["upper"]),
            step=None if d.get("step") is None else float(d["step"]),
            unit=d.get("unit", ""),
            description=d.get("description", ""),
        )


@dataclass(frozen=True)
class SumConstraint:
    """Inclusive upper bound on the sum of a subset of variables."""

    variable_names: tuple[str, ...]
    bound: float

    def __post_init__(self):
        object.__setattr__(self, "variable_names", tuple(self.variable_names))
        if self.bound <= 0:
            raise SpaceError("sum constraint bound must be > 0")
        if not self.variable_names:
            raise SpaceError("sum constraint needs at least one variable")

    def describe(self) -> str:
        return f"sum({', '.join(self.variable_names)}) <= {self.bound:g}"


class SearchSpace:
    """Ordered box of continuous/discrete variables with optional sum bounds."""

    def __init__(self, variables: Sequence[Variable], constraints: Sequence[SumConstraint] = ()):
        self.variables = tuple(variables)
        self.constraints = tuple(constraints)
        if not self.variables:
            raise SpaceError("a search space needs at least one variable")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise SpaceError("variable names must be unique")
        index = {n: i for i, n in enumerate(names)}
        for c in self.constraints:
            missing = [n for n in c.variable_names if n not in index]
            if missing:
                raise SpaceError(f"constraint references unknown variables {missing}")
        self._cidx = [np.array([index[n] for n in c.variable_names]) for c in self.constraints]
        self.lower = np.array([v.lower for v in self.variables], dtype=float)
        self.upper = np.array([v.upper for v in self.variables], dtype=float)
        self._discrete = np.array([v.kind == "discrete" for v in self.variables])
        self._step = np.array([v.step if v.kind == "discrete" else 0.0 for v in self.variables])

    def __repr__(self):
        return f"SearchSpace(d={self.d}, constraints={len(self.constraints)})"

    @property
    def d(self) -> int:
        return len(self.variables)

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    @property
    def is_continuous(self) -> bool:
        return not self._discrete.any() and not self.constraints

    def _as_array(self, p) -> np.ndarray:
        x = np.asarray(p, dtype=float)
        if x.shape[-1] != self.d:
            raise SpaceError(f"expected {self.d} coordinates, got {x.shape[-1]}")
        return x

    def contains(self, p) -> bool:
        x = self._as_array(p)
        if x.ndim != 1:
            raise SpaceError("contains() takes a single point")
        return bool(self._contains_array(x[None, :])[0])

    def _contains_array(self, X: np.ndarray) -> np.ndarray:
        ok = np.all(np.isfinite(X), axis=1)
        ok &= np.all(X >= self.lower - GRID_TOL, axis=1) & np.all(X <= self.upper + GRID_TOL, axis=1)
        if self._discrete.any():
            cols = self._discrete
            lo, st = self.lower[cols], self._step[cols]
            idx = (X[:, cols] - lo) / st
            off = np.abs(X[:, cols] - (lo + np.round(idx) * st))
            ok &= np.all(off <= GRID_TOL, axis=1)
        for c, idx in zip(self.constraints, self._cidx):
            ok &= X[:, idx].sum(axis=1) <= c.bound + GRID_TOL
        return ok

    def snap_to_grid(self, p) -> np.ndarray:
        """Round discrete coordinates to the nearest grid value (ties go down)."""
        x = self._as_array(p)
        return self._snap_array(np.atleast_2d(x)).reshape(x.shape)

    def _snap_array(self, X: np.ndarray) -> np.ndarray:
        X = np.array(X, dtype=float)
        if not self._discrete.any():
            return X
        cols = self._discrete
        lo, st = self.lower[cols], self._step[cols]
        n = np.array([v.n_steps for v in self.variables if v.kind == "discrete"])
        raw = (X[:, cols] - lo) / st
        idx = np.clip(np.ceil(raw - 0.5 - GRID_TOL), 0, n)
        X[:, cols] = lo + idx * st
        return X

    def canonical_key(self, p) -> tuple:
        """Hashable identity of a point: 12 significant digits, or grid index."""
        return self._keys(np.atleast_2d(self._as_array(p)))[0]

    def _keys(self, X: np.ndarray) -> list[tuple]:
        K = np.empty_like(X, dtype=float)
        cont = ~self._discrete
        K[:, cont] = _round_sig(X[:, cont], 12)
        if self._discrete.any():
            cols = self._discrete
            K[:, cols] = np.round((X[:, cols] - self.lower[cols]) / self._step[cols])
        K[K == 0] = 0.0  # -0.0 and 0.0 share a key
        return [tuple(row) for row in K.tolist()]

    def sample_uniform(self, rng: np.random.Generator, n: int, dedupe: "Dataset | None" = None,
                       exclude: Iterable[tuple] = ()) -> list[np.ndarray]:
        """Draw ``n`` distinct feasible points.

        Coordinates are drawn uniformly in the box; any constrained subset whose
        sum exceeds its bound is rescaled onto the bound before snapping.
        Points that snapping pushes out of the feasible set are redrawn, and
        points whose key is already in ``dedupe`` are skipped.
        """
        if n < 1:
            raise ValueError("n must be >= 1")
        seen = set(dedupe.keys) if dedupe is not None else set()
        seen.update(exclude)
        out: list[np.ndarray] = []
        limit = 10_000 * n
        draws = 0
        while len(out) < n:
            if draws >= limit:
                raise SamplerExhausted(f"could only draw {len(out)} of {n} fresh points in {limit} draws")
            m = min(max(2 * (n - len(out)), 64), limit - draws)
            draws += m
            X = rng.uniform(self.lower, self.upper, size=(m, self.d))
            for c, idx in zip(self.constraints, self._cidx):
                s = X[:, idx].sum(axis=1)
                over = s > c.bound
                X[np.ix_(over, idx)] *= (c.bound / s[over])[:, None]
            X = self._snap_array(X)
            X = X[self._contains_array(X)]
            for row, key in zip(X, self._keys(X)):
                if key in seen:
                    continue
                seen.add(key)
                out.append(row)
                if len(out) == n:
                    break
        return out

    def to_unit(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.lower) / (self.upper - self.lower)

    def from_unit(self, U) -> np.ndarray:
        return self.lower + np.asarray(U, dtype=float) * (self.upper - self.lower)

    def to_dict(self) -> dict:
        return {
            "variables": [v.to_dict() for v in self.variables],
            "constraints": [{"variables": list(c.variable_names), "bound": c.bound} for c in self.constraints],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SearchSpace":
        variables = [Variable.from_dict(v) for v in d["variables"]]
        constraints = [SumConstraint(tuple(c["variables"]), float(c["bound"])) for c in d.get("constraints", [])]
        return cls(variables, constraints)


def _round_sig(x: np.ndarray, digits: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    safe = np.where((x == 0) | ~np.isfinite(x), 1.0, np.abs(x))
    scale = 10.0 ** (digits - 1 - np.floor(np.log10(safe)))
    return np.where(x == 0, 0.0, np.round(x * scale) / scale)


@dataclass(frozen=True)
class Sample:
    point: tuple[float, ...]
    value: float
    source: str = "a1"
    step_index: int = 0
    sample_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(float(v) for v in self.point))
        if not math.isfinite(self.value):
            raise ValueError("sample value must be finite")
        if not all(math.isfinite(v) for v in self.point):
            raise ValueError("sample point must be finite")
        if self.source not in SOURCES:
            raise ValueError(f"unknown sample source {self.source!r}")
        if self.step_index < 0 or self.sample_index < 0:
            raise ValueError("indices must be nonnegative")


class Dataset:
    """Append-only list of evaluated samples with canonical-key deduplication."""

    def __init__(self, space: SearchSpace, samples: Iterable[Sample] = ()):
        self.space = space
        self.samples: list[Sample] = []
        self.keys: set[tuple] = set()
        for s in samples:
            self.add(s)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __contains__(self, p) -> bool:
        return self.space.canonical_key(p) in self.keys

    def add(self, sample: Sample) -> None:
        key = self.space.canonical_key(sample.point)
        if key in self.keys:
            raise DuplicatePointError(f"point {sample.point} already evaluated")
        self.keys.add(key)
        self.samples.append(sample)

    @property
    def X(self) -> np.ndarray:
        return np.array([s.point for s in self.samples], dtype=float).reshape(-1, self.space.d)

    @property
    def y(self) -> np.ndarray:
        return np.array([s.value for s in self.samples], dtype=float)

    def y_max(self) -> float:
        if not self.samples:
            raise ValueError("y_max of an empty dataset")
        return max(s.value for s in self.samples)

    def best(self) -> Sample:
        if not self.samples:
            raise ValueError("best of an empty dataset")
        return max(self.samples, key=lambda s: s.value)

    def correlation_matrix(self) -> np.ndarray:
        """Pearson correlation between input variables (d x d).

        Columns with zero variance correlate 0 with everything else.
        """
        if len(self.samples) < 2:
            raise ValueError("correlation matrix needs at least 2 samples")
        X = self.X
        Xc = X - X.mean(axis=0)
        sd = np.sqrt((Xc ** 2).sum(axis=0))
        live = sd > 0
        Z = np.zeros_like(Xc)
        Z[:, live] = Xc[:, live] / sd[live]
        C = np.clip(Z.T @ Z, -1.0, 1.0)
        C = 0.5 * (C + C.T)
        np.fill_diagonal(C, 1.0)
        return C

    def to_jsonl(self, trial: int = 0) -> str:
        lines = [
            json.dumps({"trial": trial, "step": s.step_index, "sample": s.sample_index,
                        "source": s.source, "x": list(s.point), "y": s.value})
            for s in self.samples
        ]
        return "\n".join(lines) + ("\n" if lines else "")


@dataclass
class ExperimentCard:
    """User-facing description of the task handed to the LLM."""

    title: str
    description: str
    target_name: str
    target_description: str
    space: SearchSpace
    constraints_description: str = ""
    context: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.title.strip():
            raise SpaceError("experiment card needs a title")
        if not self.description.strip():
            raise SpaceError("experiment card needs a description")
        if not self.target_name.strip():
            raise SpaceError("experiment card needs a target name")

    def constraints_text(self) -> str:
        parts = [c.describe() for c in self.space.constraints]
        if self.constraints_description:
            parts.insert(0, self.constraints_description)
        return "\n".join(parts)

    def to_dict(self) -> dict:
        d = {
            "title": self.title,
            "description": self.description,
            "target": {"name": self.target_name, "description": self.target_description},
            **self.space.to_dict(),
            "context": self.context,
        }
        if self.constraints_description:
            d["constraints_description"] = self.constraints_description
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentCard":
        target = d.get("target") or {}
        return cls(
            title=d.get("title", ""),
            description=d.get("description", ""),
            target_name=target.get("name", ""),
            target_description=target.get("description", ""),
            space=SearchSpace.from_dict(d),
            constraints_description=d.get("constraints_description", ""),
            context=d.get("context", ""),
        )

    @classmethod
    def load(cls, path) -> "ExperimentCard":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")
