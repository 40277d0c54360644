"""Distances between concepts and the quantitative drift measures built on them."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .distribution import (
    ConceptTrajectory,
    CovariateDistribution,
    JointConcept,
    PosteriorTable,
)

INV_SQRT2 = 1.0 / math.sqrt(2.0)
DEFAULT_GRID = 1024
DEFAULT_RATE_N = 1000


def _same_covariate_shape(a: CovariateDistribution, b: CovariateDistribution):
    if a.n_attributes != b.n_attributes or a.arity != b.arity:
        raise ValueError(
            f"covariate schema mismatch: {a.n_attributes}x{a.arity} vs {b.n_attributes}x{b.arity}"
        )


def hellinger_joint(a: JointConcept, b: JointConcept) -> float:
    if a.schema != b.schema:
        raise ValueError(f"schema mismatch: {a.schema} vs {b.schema}")
    diff = np.sqrt(a.joint_table) - np.sqrt(b.joint_table)
    return min(1.0, INV_SQRT2 * math.sqrt(float(np.sum(diff * diff))))


def hellinger_posterior_paper(a: PosteriorTable, b: PosteriorTable) -> float:
    """Mean over cells of the per-cell Hellinger distance between posterior rows.

    For one-hot tables every changed cell contributes exactly 1, so the value
    is (number of changed cells) / C.
    """
    if a.rows.shape != b.rows.shape:
        raise ValueError(f"posterior shape mismatch: {a.rows.shape} vs {b.rows.shape}")
    if a.is_deterministic and b.is_deterministic:
        changed = np.count_nonzero(np.any(a.rows != b.rows, axis=1))
        return changed / a.n_cells
    diff = np.sqrt(a.rows) - np.sqrt(b.rows)
    per_cell = INV_SQRT2 * np.sqrt(np.sum(diff * diff, axis=1))
    return float(np.mean(per_cell))


def hellinger_covariate_paper(a: CovariateDistribution, b: CovariateDistribution) -> float:
    """(1/sqrt 2) times the Euclidean distance between the joint covariate tables.

    Note there are no square roots on the probabilities; see
    :func:`hellinger_covariate_standard` for the textbook Hellinger distance.
    """
    _same_covariate_shape(a, b)
    diff = a.joint - b.joint
    return INV_SQRT2 * math.sqrt(float(np.sum(diff * diff)))


def hellinger_covariate_standard(a: CovariateDistribution, b: CovariateDistribution) -> float:
    _same_covariate_shape(a, b)
    diff = np.sqrt(a.joint) - np.sqrt(b.joint)
    return min(1.0, INV_SQRT2 * math.sqrt(float(np.sum(diff * diff))))


def total_variation_joint(a: JointConcept, b: JointConcept) -> float:
    if a.schema != b.schema:
        raise ValueError(f"schema mismatch: {a.schema} vs {b.schema}")
    return min(1.0, 0.5 * float(np.sum(np.abs(a.joint_table - b.joint_table))))


class DistanceFunction(enum.Enum):
    """Distances between whole concepts; each variant looks at one aspect."""

    HELLINGER_JOINT = "hellinger-joint"
    HELLINGER_POSTERIOR_PAPER = "hellinger-posterior"
    HELLINGER_COVARIATE_PAPER = "hellinger-covariate"
    HELLINGER_COVARIATE_STANDARD = "hellinger-covariate-standard"
    TOTAL_VARIATION_JOINT = "tv-joint"

    @property
    def is_metric(self) -> bool:
        # All five are (pseudo)metrics: scaled L2 distances, or means of them.
        return True

    def __call__(self, a: JointConcept, b: JointConcept) -> float:
        if a is b:
            return 0.0
        if a.schema != b.schema:
            raise ValueError(f"schema mismatch: {a.schema} vs {b.schema}")
        if self is DistanceFunction.HELLINGER_JOINT:
            return hellinger_joint(a, b)
        if self is DistanceFunction.HELLINGER_POSTERIOR_PAPER:
            return hellinger_posterior_paper(a.posterior, b.posterior)
        if self is DistanceFunction.HELLINGER_COVARIATE_PAPER:
            return hellinger_covariate_paper(a.covariates, b.covariates)
        if self is DistanceFunction.HELLINGER_COVARIATE_STANDARD:
            return hellinger_covariate_standard(a.covariates, b.covariates)
        return total_variation_joint(a, b)

    @classmethod
    def parse(cls, name: str) -> "DistanceFunction":
        try:
            return cls(name)
        except ValueError:
            choices = ", ".join(d.value for d in cls)
            raise ValueError(f"unknown distance {name!r}; choose one of {choices}") from None


@dataclass(frozen=True)
class DriftMeasures:
    magnitude: float
    duration: float
    path_length: float
    average_rate: float


def _check_window(trajectory: ConceptTrajectory, t: float, u: float):
    if u < t:
        raise ValueError(f"interval end {u} precedes start {t}")
    if t < trajectory.start or u > trajectory.end:
        raise ValueError(f"[{t}, {u}] outside trajectory span [{trajectory.start}, {trajectory.end}]")


def magnitude(trajectory: ConceptTrajectory, t: float, u: float, D: DistanceFunction = DistanceFunction.HELLINGER_JOINT) -> float:
    _check_window(trajectory, t, u)
    if t == u:
        return 0.0
    return D(trajectory.concept_at(t), trajectory.concept_at(u))


def duration(t: float, u: float) -> float:
    if u < t:
        raise ValueError(f"interval end {u} precedes start {t}")
    return u - t


def path_through(concepts: Sequence[JointConcept], D: DistanceFunction) -> float:
    return float(sum(D(p, q) for p, q in zip(concepts, concepts[1:])))


def path_length(
    trajectory: ConceptTrajectory,
    t: float,
    u: float,
    D: DistanceFunction = DistanceFunction.HELLINGER_JOINT,
    grid_n: int = DEFAULT_GRID,
) -> float:
    """Sum of distances between consecutive concepts on a uniform grid of ``grid_n`` steps.

    For a metric this approaches the true path length from below as the grid
    is refined.
    """
    _check_window(trajectory, t, u)
    if grid_n < 1:
        raise ValueError("grid_n must be >= 1")
    if t == u:
        return 0.0
    times = np.linspace(t, u, grid_n + 1)
    return path_through([trajectory.concept_at(float(s)) for s in times], D)


def drift_rate(
    trajectory: ConceptTrajectory,
    t: float,
    D: DistanceFunction = DistanceFunction.HELLINGER_JOINT,
    n: float = DEFAULT_RATE_N,
) -> float:
    """n * D(t - 0.5/n, t + 0.5/n).

    At a kink or jump of the trajectory this does not converge as n grows.
    """
    lo, hi = t - 0.5 / n, t + 0.5 / n
    if lo < trajectory.start or hi > trajectory.end:
        raise ValueError(f"rate window [{lo}, {hi}] leaves trajectory span")
    return n * D(trajectory.concept_at(lo), trajectory.concept_at(hi))


def average_rate(path: float, dur: float) -> float:
    if dur == 0:
        return 0.0 if path == 0 else math.inf
    return path / dur


def measure(
    trajectory: ConceptTrajectory,
    t: float,
    u: float,
    D: DistanceFunction = DistanceFunction.HELLINGER_JOINT,
    grid_n: int = DEFAULT_GRID,
) -> DriftMeasures:
    mag = magnitude(trajectory, t, u, D)
    dur = duration(t, u)
    plen = path_length(trajectory, t, u, D, grid_n)
    return DriftMeasures(mag, dur, plen, average_rate(plen, dur))


def drift_frequency(segments, t: float, u: float) -> int:
    """Number of stable segments whose start lies in [t, u]."""
    return sum(1 for s in segments if t <= s.start <= u)


MEASURE_COLUMNS = ("stream_id", "t", "u", "distance", "magnitude", "duration", "path_length", "average_rate")


def format_measure_record(stream_id: str, t: float, u: float, D: DistanceFunction, m: DriftMeasures) -> str:
    fields = [stream_id, repr(float(t)), repr(float(u)), D.value]
    fields += [repr(float(v)) for v in (m.magnitude, m.duration, m.path_length, m.average_rate)]
    return "\t".join(fields)


def parse_measure_record(line: str) -> dict:
    parts = line.rstrip("\n").split("\t")
    if len(parts) != len(MEASURE_COLUMNS):
        raise ValueError(f"expected {len(MEASURE_COLUMNS)} fields, got {len(parts)}")
    rec = dict(zip(MEASURE_COLUMNS, parts))
    for k in MEASURE_COLUMNS[4:] + ("t", "u"):
        rec[k] = float(rec[k])
    return rec
