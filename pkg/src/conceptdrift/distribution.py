"""Categorical concepts P(X, Y) and their evolution over continuous time.

A concept is a star-shaped Bayesian network: independent categorical
covariates x_1..x_n feeding a full conditional table P(Y | X).  Covariate
combinations ("cells") are indexed in mixed-radix order with attribute 1 as
the most significant digit.

Trajectories map time to concepts through piecewise laws:

* ``Constant``: a single concept.
* ``Mixture``: convex combination of two joint distributions with a monotone
  weight given as linearly interpolated breakpoints.
* ``PosteriorInterpolation``: covariates fixed, posterior rows switched from
  one concept to another cell by cell at scheduled times.

A segment covers ``[start, end)``; the final segment also owns its end point.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np

NORM_TOL = 1e-12


@dataclass(frozen=True)
class AttributeSchema:
    n_attributes: int = 5
    arity: int = 3
    n_classes: int = 3

    def __post_init__(self):
        if self.n_attributes < 1:
            raise ValueError(f"n_attributes must be >= 1, got {self.n_attributes}")
        if self.arity < 2:
            raise ValueError(f"arity must be >= 2, got {self.arity}")
        if self.n_classes < 2:
            raise ValueError(f"n_classes must be >= 2, got {self.n_classes}")

    @property
    def cell_count(self) -> int:
        return self.arity**self.n_attributes

    def cell_index(self, x: Sequence[int]) -> int:
        if len(x) != self.n_attributes:
            raise ValueError(f"expected {self.n_attributes} attribute values, got {len(x)}")
        idx = 0
        for v in x:
            v = int(v)
            if not 0 <= v < self.arity:
                raise IndexError(f"attribute value {v} outside [0, {self.arity})")
            idx = idx * self.arity + v
        return idx

    def cell_values(self, cell: int) -> tuple[int, ...]:
        if not 0 <= cell < self.cell_count:
            raise IndexError(f"cell {cell} outside [0, {self.cell_count})")
        out = []
        for _ in range(self.n_attributes):
            cell, v = divmod(cell, self.arity)
            out.append(v)
        return tuple(reversed(out))

    def cells_to_values(self, cells: np.ndarray) -> np.ndarray:
        """Vectorised inverse of :meth:`cell_index`; returns shape (n, n_attributes)."""
        cells = np.asarray(cells, dtype=np.int64)
        out = np.empty((cells.shape[0], self.n_attributes), dtype=np.int64)
        rest = cells.copy()
        for j in range(self.n_attributes - 1, -1, -1):
            rest, out[:, j] = np.divmod(rest, self.arity)
        return out

    def values_to_cells(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.int64)
        cells = np.zeros(xs.shape[0], dtype=np.int64)
        for j in range(self.n_attributes):
            cells = cells * self.arity + xs[:, j]
        return cells


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def _check_prob_vector(v: np.ndarray, what: str, tol: float = NORM_TOL):
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ValueError(f"{what} has negative or non-finite entries")
    s = float(v.sum())
    if abs(s - 1.0) > tol:
        raise ValueError(f"{what} sums to {s!r}, not 1")


@dataclass(frozen=True, eq=False)
class CovariateDistribution:
    """P(X) over the cells of a schema.

    Normally factored into one categorical per attribute.  ``cell_probs`` holds
    an explicit joint when the distribution is not a product, which happens for
    mixtures of two factored distributions; ``per_attribute`` then carries the
    marginals.
    """

    per_attribute: tuple
    cell_probs: np.ndarray | None = None

    def __post_init__(self):
        vecs = tuple(_frozen(p) for p in self.per_attribute)
        if not vecs:
            raise ValueError("need at least one attribute")
        arity = vecs[0].shape[0]
        for i, v in enumerate(vecs):
            if v.ndim != 1 or v.shape[0] != arity:
                raise ValueError("all attribute vectors must share one arity")
            _check_prob_vector(v, f"attribute {i} distribution")
        object.__setattr__(self, "per_attribute", vecs)
        if self.cell_probs is not None:
            cp = _frozen(self.cell_probs)
            if cp.shape != (arity ** len(vecs),):
                raise ValueError(f"explicit covariate table has shape {cp.shape}")
            _check_prob_vector(cp, "covariate table", tol=1e-9)
            object.__setattr__(self, "cell_probs", cp)

    @property
    def n_attributes(self) -> int:
        return len(self.per_attribute)

    @property
    def arity(self) -> int:
        return self.per_attribute[0].shape[0]

    @property
    def is_factored(self) -> bool:
        return self.cell_probs is None

    @cached_property
    def joint(self) -> np.ndarray:
        """P(X = cell) for every cell in canonical order."""
        if self.cell_probs is not None:
            return self.cell_probs
        out = np.ones(1)
        for v in self.per_attribute:
            out = np.multiply.outer(out, v).ravel()
        out.setflags(write=False)
        return out

    @classmethod
    def from_joint(cls, n_attributes: int, arity: int, cell_probs) -> "CovariateDistribution":
        cp = np.asarray(cell_probs, dtype=np.float64)
        cube = cp.reshape((arity,) * n_attributes)
        margins = []
        for j in range(n_attributes):
            axes = tuple(k for k in range(n_attributes) if k != j)
            m = cube.sum(axis=axes) if axes else cube.copy()
            margins.append(m / m.sum())
        return cls(tuple(margins), cp)


@dataclass(frozen=True, eq=False)
class PosteriorTable:
    """P(Y | X = cell), one row per cell."""

    rows: np.ndarray

    def __post_init__(self):
        rows = _frozen(self.rows)
        if rows.ndim != 2:
            raise ValueError("posterior rows must be a 2-d array")
        if np.any(rows < 0):
            raise ValueError("posterior has negative entries")
        sums = rows.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > NORM_TOL):
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise ValueError(f"posterior row {bad} sums to {sums[bad]!r}")
        object.__setattr__(self, "rows", rows)

    @property
    def n_cells(self) -> int:
        return self.rows.shape[0]

    @property
    def n_classes(self) -> int:
        return self.rows.shape[1]

    @cached_property
    def is_deterministic(self) -> bool:
        return bool(np.all((self.rows == 0.0) | (self.rows == 1.0)))

    @cached_property
    def assigned_classes(self) -> np.ndarray:
        """Most probable class per cell, ties to the lowest index."""
        out = np.argmax(self.rows, axis=1)
        out.setflags(write=False)
        return out

    @classmethod
    def one_hot(cls, classes, n_classes: int) -> "PosteriorTable":
        classes = np.asarray(classes, dtype=np.int64)
        rows = np.zeros((classes.shape[0], n_classes))
        rows[np.arange(classes.shape[0]), classes] = 1.0
        return cls(rows)


@dataclass(frozen=True, eq=False)
class JointConcept:
    schema: AttributeSchema
    covariates: CovariateDistribution
    posterior: PosteriorTable

    def __post_init__(self):
        s = self.schema
        if self.covariates.n_attributes != s.n_attributes or self.covariates.arity != s.arity:
            raise ValueError("covariate distribution does not match schema")
        if self.posterior.rows.shape != (s.cell_count, s.n_classes):
            raise ValueError(
                f"posterior shape {self.posterior.rows.shape} does not match schema "
                f"({s.cell_count}, {s.n_classes})"
            )

    @cached_property
    def joint_table(self) -> np.ndarray:
        """P(X = cell, Y = y) as a (cells, classes) array."""
        out = self.covariates.joint[:, None] * self.posterior.rows
        out.setflags(write=False)
        return out

    @classmethod
    def from_joint(cls, schema: AttributeSchema, table) -> "JointConcept":
        """Factor a joint table back into covariates and posterior.

        Cells with zero mass get a uniform posterior row.  The result's joint
        table is recomputed from the factors, so it can differ from ``table``
        in the last bit; in exchange a concept is fully determined by its
        factors, which is what gets serialised.
        """
        table = np.array(table, dtype=np.float64)
        if table.shape != (schema.cell_count, schema.n_classes):
            raise ValueError(f"joint table has shape {table.shape}")
        if np.any(table < -1e-15):
            raise ValueError("joint table has negative entries")
        np.clip(table, 0.0, None, out=table)
        table /= table.sum()
        cov = table.sum(axis=1)
        rows = np.full_like(table, 1.0 / schema.n_classes)
        mass = cov > 0
        rows[mass] = table[mass] / cov[mass, None]
        rows[mass] /= rows[mass].sum(axis=1, keepdims=True)
        cube = cov.reshape((schema.arity,) * schema.n_attributes)
        margins = []
        for j in range(schema.n_attributes):
            axes = tuple(k for k in range(schema.n_attributes) if k != j)
            margins.append(cube.sum(axis=axes) if axes else cube.copy())
        covariates = _trusted(CovariateDistribution, per_attribute=tuple(_frozen(m) for m in margins), cell_probs=_frozen(cov))
        return _trusted(cls, schema=schema, covariates=covariates, posterior=_trusted(PosteriorTable, rows=_frozen(rows)))


def _trusted(cls, **attrs):
    """Build a frozen dataclass without re-running validation on derived data."""
    obj = object.__new__(cls)
    for k, v in attrs.items():
        object.__setattr__(obj, k, v)
    return obj


def _check_same_schema(a: JointConcept, b: JointConcept):
    if a.schema != b.schema:
        raise ValueError(f"schema mismatch: {a.schema} vs {b.schema}")


# --------------------------------------------------------------------------
# sampling


def sample_covariate_distribution(schema: AttributeSchema, rng: np.random.Generator) -> CovariateDistribution:
    """Independent flat-Dirichlet draw for each attribute."""
    vecs = []
    for _ in range(schema.n_attributes):
        e = rng.standard_exponential(schema.arity)
        vecs.append(e / e.sum())
    return CovariateDistribution(tuple(vecs))


def sample_posterior_table(schema: AttributeSchema, rng: np.random.Generator) -> PosteriorTable:
    classes = rng.integers(0, schema.n_classes, size=schema.cell_count)
    return PosteriorTable.one_hot(classes, schema.n_classes)


def sample_concept(schema: AttributeSchema, rng: np.random.Generator) -> JointConcept:
    cov = sample_covariate_distribution(schema, rng)
    post = sample_posterior_table(schema, rng)
    return JointConcept(schema, cov, post)


def joint_probability(concept: JointConcept, x: Sequence[int], y: int) -> float:
    cell = concept.schema.cell_index(x)
    if not 0 <= y < concept.schema.n_classes:
        raise IndexError(f"class {y} outside [0, {concept.schema.n_classes})")
    return float(concept.covariates.joint[cell] * concept.posterior.rows[cell, y])


def class_marginal(concept: JointConcept) -> np.ndarray:
    return concept.covariates.joint @ concept.posterior.rows


def draw_instance(concept: JointConcept, rng: np.random.Generator) -> tuple[tuple[int, ...], int]:
    xs, ys = draw_instances(concept, 1, rng)
    return tuple(int(v) for v in xs[0]), int(ys[0])


def draw_instances(concept: JointConcept, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` i.i.d. instances; returns (values (n, n_attributes), labels (n,))."""
    schema = concept.schema
    cov_cdf = np.cumsum(concept.covariates.joint)
    u = rng.random(n)
    cells = np.minimum(np.searchsorted(cov_cdf, u * cov_cdf[-1], side="right"), schema.cell_count - 1)
    row_cdf = np.cumsum(concept.posterior.rows, axis=1)[cells]
    v = rng.random(n)
    ys = np.minimum((row_cdf <= v[:, None] * row_cdf[:, -1:]).sum(axis=1), schema.n_classes - 1)
    return schema.cells_to_values(cells), ys.astype(np.int64)


# --------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True, eq=False)
class Constant:
    concept: JointConcept

    def at(self, t: float) -> JointConcept:
        return self.concept

    def knots(self, start: float, end: float) -> list[float]:
        return []

    def is_constant_between(self, t0: float, t1: float) -> bool:
        return True

    @property
    def first(self) -> JointConcept:
        return self.concept

    @property
    def last(self) -> JointConcept:
        return self.concept


@dataclass(frozen=True, eq=False)
class Mixture:
    """(1 - f(t)) P_a + f(t) P_b with f linear between ``breakpoints``.

    ``breakpoints`` are absolute ``(time, weight)`` pairs; an empty tuple means
    a single linear ramp over the whole segment.
    """

    a: JointConcept
    b: JointConcept
    breakpoints: tuple = ()

    def __post_init__(self):
        _check_same_schema(self.a, self.b)
        object.__setattr__(self, "breakpoints", tuple((float(t), float(w)) for t, w in self.breakpoints))

    def bind(self, start: float, end: float) -> "Mixture":
        if not self.breakpoints:
            return Mixture(self.a, self.b, ((start, 0.0), (end, 1.0)))
        times = [t for t, _ in self.breakpoints]
        weights = [w for _, w in self.breakpoints]
        if times[0] != start or times[-1] != end:
            raise ValueError("mixture breakpoints must start and end on the segment bounds")
        if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
            raise ValueError("mixture breakpoint times must be strictly increasing")
        if weights[0] != 0.0 or weights[-1] != 1.0:
            raise ValueError("mixture weight must run from 0 to 1")
        if any(w1 < w0 for w0, w1 in zip(weights, weights[1:])):
            raise ValueError("mixture weight must be non-decreasing")
        return self

    def weight(self, t: float) -> float:
        times = [p[0] for p in self.breakpoints]
        weights = [p[1] for p in self.breakpoints]
        return float(np.interp(t, times, weights))

    def at(self, t: float) -> JointConcept:
        f = self.weight(t)
        if f == 0.0:
            return self.a
        if f == 1.0:
            return self.b
        mixed = (1.0 - f) * self.a.joint_table + f * self.b.joint_table
        return JointConcept.from_joint(self.a.schema, mixed)

    def knots(self, start: float, end: float) -> list[float]:
        return [t for t, _ in self.breakpoints]

    def is_constant_between(self, t0: float, t1: float) -> bool:
        return self.weight(t0) == self.weight(t1) and _flat_between(self.breakpoints, t0, t1)

    @property
    def first(self) -> JointConcept:
        return self.a

    @property
    def last(self) -> JointConcept:
        return self.b


def _flat_between(breakpoints, t0, t1) -> bool:
    w0 = float(np.interp(t0, [p[0] for p in breakpoints], [p[1] for p in breakpoints]))
    return all(w == w0 for t, w in breakpoints if t0 <= t <= t1)


@dataclass(frozen=True, eq=False)
class PosteriorInterpolation:
    """Posterior rows switched from ``a`` to ``b`` one cell at a time.

    ``schedule`` holds ``(time, cell)`` pairs; from ``time`` on, ``cell`` uses
    the row of ``b``.  Covariates stay those of ``a``.
    """

    a: JointConcept
    b: JointConcept
    schedule: tuple

    def __post_init__(self):
        _check_same_schema(self.a, self.b)
        if not np.array_equal(self.a.covariates.joint, self.b.covariates.joint):
            raise ValueError("posterior interpolation requires identical covariates")
        sched = tuple(sorted((float(t), int(c)) for t, c in self.schedule))
        changed = set(np.flatnonzero(np.any(self.a.posterior.rows != self.b.posterior.rows, axis=1)).tolist())
        listed = {c for _, c in sched}
        if len(listed) != len(sched):
            raise ValueError("a cell appears twice in the schedule")
        if not changed <= listed:
            raise ValueError(f"cells {sorted(changed - listed)} differ but are not scheduled")
        object.__setattr__(self, "schedule", sched)

    def bind(self, start: float, end: float) -> "PosteriorInterpolation":
        for t, _ in self.schedule:
            if not start <= t <= end:
                raise ValueError(f"switch time {t} outside segment [{start}, {end}]")
        return self

    def at(self, t: float) -> JointConcept:
        switched = [c for s, c in self.schedule if s <= t]
        if not switched:
            return self.a
        if len(switched) == len(self.schedule):
            return self.b
        rows = self.a.posterior.rows.copy()
        rows[switched] = self.b.posterior.rows[switched]
        return JointConcept(self.a.schema, self.a.covariates, PosteriorTable(rows))

    def knots(self, start: float, end: float) -> list[float]:
        return [t for t, _ in self.schedule]

    def is_constant_between(self, t0: float, t1: float) -> bool:
        return not any(t0 < s < t1 for s, _ in self.schedule)

    @property
    def first(self) -> JointConcept:
        return self.a

    @property
    def last(self) -> JointConcept:
        return self.b


Law = Union[Constant, Mixture, PosteriorInterpolation]


@dataclass(frozen=True, eq=False)
class TrajectorySegment:
    start: float
    end: float
    law: Law

    def __post_init__(self):
        if not self.end > self.start:
            raise ValueError(f"segment end {self.end} must exceed start {self.start}")
        if hasattr(self.law, "bind"):
            object.__setattr__(self, "law", self.law.bind(self.start, self.end))


@dataclass(frozen=True, eq=False)
class ConceptTrajectory:
    segments: tuple
    _starts: list = field(init=False, repr=False)

    def __post_init__(self):
        segs = tuple(s if isinstance(s, TrajectorySegment) else TrajectorySegment(*s) for s in self.segments)
        if not segs:
            raise ValueError("a trajectory needs at least one segment")
        schema = segs[0].law.first.schema
        for prev, nxt in zip(segs, segs[1:]):
            if nxt.start != prev.end:
                raise ValueError(f"segments not contiguous at {prev.end} / {nxt.start}")
        for s in segs:
            if s.law.first.schema != schema:
                raise ValueError("all segments must share one schema")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "_starts", [s.start for s in segs])

    @classmethod
    def constant(cls, concept: JointConcept, start: float, end: float) -> "ConceptTrajectory":
        return cls(((start, end, Constant(concept)),))

    @property
    def start(self) -> float:
        return self.segments[0].start

    @property
    def end(self) -> float:
        return self.segments[-1].end

    @property
    def schema(self) -> AttributeSchema:
        return self.segments[0].law.first.schema

    def segment_at(self, t: float) -> TrajectorySegment:
        if not self.start <= t <= self.end:
            raise ValueError(f"time {t} outside trajectory span [{self.start}, {self.end}]")
        i = bisect.bisect_right(self._starts, t) - 1
        return self.segments[i]

    def concept_at(self, t: float) -> JointConcept:
        return self.segment_at(t).law.at(t)

    def knots(self) -> list[float]:
        """Every time at which the law may change character, sorted."""
        out = set()
        for s in self.segments:
            out.add(s.start)
            out.add(s.end)
            out.update(s.law.knots(s.start, s.end))
        return sorted(out)


def concept_at(trajectory: ConceptTrajectory, t: float) -> JointConcept:
    return trajectory.concept_at(t)


def chain(start: float, points: Sequence[tuple[float, Law]]) -> ConceptTrajectory:
    """Build a trajectory from consecutive ``(duration, law)`` pairs."""
    segs = []
    t = float(start)
    for duration, law in points:
        segs.append(TrajectorySegment(t, t + float(duration), law))
        t += float(duration)
    return ConceptTrajectory(tuple(segs))
