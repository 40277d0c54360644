"""Synthetic streams with controlled abrupt drift, and named fixture trajectories."""

from __future__ import annotations

import enum
import math
import warnings
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .distribution import (
    AttributeSchema,
    ConceptTrajectory,
    Constant,
    CovariateDistribution,
    JointConcept,
    Mixture,
    PosteriorInterpolation,
    PosteriorTable,
    chain,
    draw_instances,
    sample_concept,
)
from .measures import (
    DistanceFunction,
    hellinger_covariate_paper,
    hellinger_covariate_standard,
    hellinger_posterior_paper,
)
from .taxonomy import TaxonomyParams

# rng substreams per replicate; keeping them apart means streams that differ
# only in drift magnitude share their initial concept and pre-drift instances
CONCEPT_STREAM, DRIFT_STREAM, PRE_STREAM, POST_STREAM = range(4)


def replicate_rng(seed: int, replicate: int, purpose: int = 0) -> np.random.Generator:
    """Generator for (master seed, replicate, purpose) via SeedSequence spawn keys."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replicate), int(purpose)))
    return np.random.default_rng(ss)


class DriftKind(enum.Enum):
    PURE_CLASS = "class"
    PURE_COVARIATE = "covariate"
    NONE = "none"


@dataclass(frozen=True)
class DriftSpec:
    kind: DriftKind = DriftKind.PURE_CLASS
    target_magnitude: float = 0.5
    drift_time: int = 10_000
    length: int = 30_000
    schema: AttributeSchema = field(default_factory=AttributeSchema)
    seed: int = 0
    replicate_count: int = 1
    covariate_distance: DistanceFunction = DistanceFunction.HELLINGER_COVARIATE_PAPER
    covariate_tol: float = 1e-3
    max_restarts: int = 20

    def __post_init__(self):
        if not 0.0 <= self.target_magnitude <= 1.0:
            raise ValueError(f"target magnitude {self.target_magnitude} outside [0, 1]")
        if not 0 < self.drift_time < self.length:
            raise ValueError(f"need 0 < drift_time ({self.drift_time}) < length ({self.length})")
        if self.replicate_count < 1:
            raise ValueError("replicate_count must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.covariate_distance not in _COVARIATE_DISTANCES:
            raise ValueError(f"{self.covariate_distance.value} is not a covariate distance")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    trajectory: ConceptTrajectory
    kind: DriftKind
    target_magnitude: float
    achieved_magnitude: float
    k_flipped: int = 0
    search_iterations: int = 0
    restarts: int = 0

    @property
    def before(self) -> JointConcept:
        return self.trajectory.segments[0].law.first

    @property
    def after(self) -> JointConcept:
        return self.trajectory.segments[-1].law.last


@dataclass(frozen=True)
class StreamRecord:
    step: int
    x: tuple
    y: int


@dataclass(frozen=True, eq=False)
class Stream(Sequence):
    """Instances at consecutive integer steps, stored column-wise."""

    schema: AttributeSchema
    xs: np.ndarray
    ys: np.ndarray
    first_step: int = 1

    def __len__(self):
        return self.ys.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            start, stop, step = i.indices(len(self))
            if step != 1:
                raise ValueError("stream slices must be contiguous")
            return Stream(self.schema, self.xs[start:stop], self.ys[start:stop], self.first_step + start)
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        return StreamRecord(self.first_step + i, tuple(int(v) for v in self.xs[i]), int(self.ys[i]))

    @property
    def cells(self) -> np.ndarray:
        return self.schema.values_to_cells(self.xs)


# --------------------------------------------------------------------------
# drift pairs


def class_drift_cell_count(schema: AttributeSchema, target_magnitude: float) -> int:
    """Number of cells to relabel: nearest integer to target * C, at least 1 if target > 0."""
    if not 0.0 <= target_magnitude <= 1.0:
        raise ValueError(f"target magnitude {target_magnitude} outside [0, 1]")
    k = int(math.floor(target_magnitude * schema.cell_count + 0.5))
    if target_magnitude > 0 and k == 0:
        warnings.warn(
            f"target {target_magnitude} rounds to 0 of {schema.cell_count} cells; relabelling 1 cell instead",
            stacklevel=2,
        )
        k = 1
    return k


def gen_class_drift_pair(
    schema: AttributeSchema,
    target_magnitude: float,
    rng: np.random.Generator,
    base: JointConcept | None = None,
) -> tuple[JointConcept, JointConcept, GroundTruth]:
    """Relabel k = round(target * C) cells of a one-hot posterior; covariates are shared."""
    k = class_drift_cell_count(schema, target_magnitude)
    before = sample_concept(schema, rng) if base is None else base
    if not before.posterior.is_deterministic:
        raise ValueError("class drift generation needs a one-hot posterior")
    classes = np.array(before.posterior.assigned_classes)
    if k:
        cells = rng.permutation(schema.cell_count)[:k]
        classes[cells] = (classes[cells] + rng.integers(1, schema.n_classes, size=k)) % schema.n_classes
        after = JointConcept(schema, before.covariates, PosteriorTable.one_hot(classes, schema.n_classes))
    else:
        after = before
    achieved = hellinger_posterior_paper(before.posterior, after.posterior)
    truth = GroundTruth(_two_piece(before, after, 0.0, 1.0, 2.0), DriftKind.PURE_CLASS, target_magnitude, achieved, k_flipped=k)
    return before, after, truth


_COVARIATE_DISTANCES = {
    DistanceFunction.HELLINGER_COVARIATE_PAPER: hellinger_covariate_paper,
    DistanceFunction.HELLINGER_COVARIATE_STANDARD: hellinger_covariate_standard,
}


class CovariateSearchError(RuntimeError):
    def __init__(self, target, best, attempts):
        super().__init__(
            f"could not reach covariate distance {target} after {attempts} attempts; best achieved {best:.6f}"
        )
        self.target = target
        self.best = best
        self.attempts = attempts


def _mix_covariates(p: CovariateDistribution, q: Sequence[np.ndarray], lam: float) -> CovariateDistribution:
    vecs = []
    for pi, qi in zip(p.per_attribute, q):
        v = (1.0 - lam) * pi + lam * qi
        vecs.append(v / v.sum())
    return CovariateDistribution(tuple(vecs))


def gen_covariate_drift_pair(
    schema: AttributeSchema,
    target_magnitude: float,
    rng: np.random.Generator,
    tol: float = 1e-3,
    max_restarts: int = 20,
    distance: DistanceFunction = DistanceFunction.HELLINGER_COVARIATE_PAPER,
    base: JointConcept | None = None,
    direction_concentration: float = 0.1,
) -> tuple[JointConcept, JointConcept, GroundTruth]:
    """Move P(X) along p_lam = (1 - lam) p + lam q until the distance hits the target.

    ``q`` is a random direction, one Dirichlet(direction_concentration) draw per
    attribute.  Each path is scanned at 101 points; a non-monotone path or one
    that never reaches the target triggers a restart with a fresh direction.
    """
    if not 0.0 <= target_magnitude <= 1.0:
        raise ValueError(f"target magnitude {target_magnitude} outside [0, 1]")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    dist = _COVARIATE_DISTANCES[distance]
    before = sample_concept(schema, rng) if base is None else base
    p = before.covariates
    if target_magnitude == 0.0:
        truth = GroundTruth(_two_piece(before, before, 0.0, 1.0, 2.0), DriftKind.PURE_COVARIATE, 0.0, 0.0)
        return before, before, truth

    iterations = 0
    best = 0.0
    lams = np.linspace(0.0, 1.0, 101)
    for attempt in range(max_restarts + 1):
        q = [rng.dirichlet(np.full(schema.arity, direction_concentration)) for _ in range(schema.n_attributes)]
        scan = np.array([dist(p, _mix_covariates(p, q, lam)) for lam in lams])
        iterations += lams.size
        best = max(best, float(scan.max()))
        if np.any(np.diff(scan) < -1e-15) or scan[-1] < target_magnitude:
            continue
        hi_idx = int(np.argmax(scan >= target_magnitude))
        lo, hi = lams[hi_idx - 1], lams[hi_idx]
        lam, achieved = hi, scan[hi_idx]
        while abs(achieved - target_magnitude) > tol * 1e-3 and hi - lo > 1e-15:
            lam = 0.5 * (lo + hi)
            achieved = dist(p, _mix_covariates(p, q, lam))
            iterations += 1
            if achieved < target_magnitude:
                lo = lam
            else:
                hi = lam
        if abs(achieved - target_magnitude) > tol:
            continue
        after = JointConcept(schema, _mix_covariates(p, q, lam), before.posterior)
        truth = GroundTruth(
            _two_piece(before, after, 0.0, 1.0, 2.0),
            DriftKind.PURE_COVARIATE,
            target_magnitude,
            float(achieved),
            search_iterations=iterations,
            restarts=attempt,
        )
        return before, after, truth
    raise CovariateSearchError(target_magnitude, best, max_restarts + 1)


def _two_piece(before, after, start, switch, end) -> ConceptTrajectory:
    if after is before:
        return ConceptTrajectory.constant(before, start, end)
    return ConceptTrajectory(((start, switch, Constant(before)), (switch, end, Constant(after))))


# --------------------------------------------------------------------------
# streams


def generate_stream(spec: DriftSpec, replicate: int = 0) -> tuple[Stream, GroundTruth]:
    """Instances for steps 1..length; steps after ``drift_time`` come from the new concept.

    The ground-truth trajectory spans [1, length] and switches at
    ``drift_time + 1``, so ``concept_at(step)`` is the concept that produced the
    instance at ``step``.
    """
    schema = spec.schema
    base = sample_concept(schema, replicate_rng(spec.seed, replicate, CONCEPT_STREAM))
    drift_rng = replicate_rng(spec.seed, replicate, DRIFT_STREAM)
    if spec.kind is DriftKind.PURE_CLASS:
        before, after, truth = gen_class_drift_pair(schema, spec.target_magnitude, drift_rng, base=base)
    elif spec.kind is DriftKind.PURE_COVARIATE:
        before, after, truth = gen_covariate_drift_pair(
            schema,
            spec.target_magnitude,
            drift_rng,
            tol=spec.covariate_tol,
            max_restarts=spec.max_restarts,
            distance=spec.covariate_distance,
            base=base,
        )
    else:
        before = after = base
        truth = GroundTruth(None, DriftKind.NONE, 0.0, 0.0)
    pre_x, pre_y = draw_instances(before, spec.drift_time, replicate_rng(spec.seed, replicate, PRE_STREAM))
    post_x, post_y = draw_instances(after, spec.length - spec.drift_time, replicate_rng(spec.seed, replicate, POST_STREAM))
    stream = Stream(schema, np.concatenate([pre_x, post_x]), np.concatenate([pre_y, post_y]), 1)
    traj = _two_piece(before, after, 1.0, float(spec.drift_time + 1), float(spec.length))
    truth = GroundTruth(
        traj,
        spec.kind,
        spec.target_magnitude,
        truth.achieved_magnitude,
        truth.k_flipped,
        truth.search_iterations,
        truth.restarts,
    )
    return stream, truth


# --------------------------------------------------------------------------
# fixtures


def build_cyclical_trajectory(concepts, concept_durations, drift_durations, start: float = 0.0) -> ConceptTrajectory:
    """Stable periods joined by linear mixtures (or instant switches for zero drift time).

    ``drift_durations[k]`` is the drift from ``concepts[k]`` to ``concepts[k + 1]``.
    """
    if len(concept_durations) != len(concepts) or len(drift_durations) != len(concepts) - 1:
        raise ValueError("need one duration per concept and one drift duration between each pair")
    pieces = []
    for k, c in enumerate(concepts):
        pieces.append((concept_durations[k], Constant(c)))
        if k < len(drift_durations) and drift_durations[k] > 0:
            pieces.append((drift_durations[k], Mixture(c, concepts[k + 1])))
    return chain(start, pieces)


_FIG1_SCHEMA = AttributeSchema(2, 2, 2)


def _fig1_endpoints() -> tuple[JointConcept, JointConcept]:
    a = JointConcept(
        _FIG1_SCHEMA,
        CovariateDistribution((np.array([0.5, 0.5]), np.array([0.6, 0.4]))),
        PosteriorTable(np.array([[0.8, 0.2], [0.3, 0.7], [0.6, 0.4], [0.25, 0.75]])),
    )
    b = JointConcept(
        _FIG1_SCHEMA,
        CovariateDistribution((np.array([0.4, 0.6]), np.array([0.45, 0.55]))),
        PosteriorTable(np.array([[0.45, 0.55], [0.6, 0.4], [0.35, 0.65], [0.55, 0.45]])),
    )
    return a, b


def line_concept(a: JointConcept, b: JointConcept, lam: float) -> JointConcept:
    """Point on the straight line through two joints; lam outside [0, 1] extrapolates."""
    if lam == 0.0:
        return a
    if lam == 1.0:
        return b
    table = (1.0 - lam) * a.joint_table + lam * b.joint_table
    if np.any(table < 0):
        raise ValueError(f"lam={lam} leaves the probability simplex")
    return JointConcept.from_joint(a.schema, table)


def _fig1(legs: Sequence[tuple[float, float, float]]) -> ConceptTrajectory:
    """Stable A on [0, 100), drift legs from t = 100, stable B for 100 units after.

    Each leg is ``(duration, lam_from, lam_to)`` along the A-B line; a leg that
    does not start where the previous one ended makes an instantaneous jump.
    """
    a, b = _fig1_endpoints()
    pieces = [(100.0, Constant(a))]
    for dur, l0, l1 in legs:
        pieces.append((dur, Mixture(line_concept(a, b, l0), line_concept(a, b, l1))))
    pieces.append((100.0, Constant(b)))
    return chain(0.0, pieces)


def _waypoints(points: Sequence[tuple[float, float]]) -> list[tuple[float, float, float]]:
    return [(t1 - t0, l0, l1) for (t0, l0), (t1, l1) in zip(points, points[1:])]


def _blip() -> ConceptTrajectory:
    rng = np.random.default_rng(20141201)
    schema = AttributeSchema(2, 3, 3)
    usual, sale = sample_concept(schema, rng), sample_concept(schema, rng)
    return chain(0.0, [(300.0, Constant(usual)), (1.0, Constant(sale)), (64.0, Constant(usual))])


def _home_work() -> ConceptTrajectory:
    rng = np.random.default_rng(9)
    schema = AttributeSchema(2, 3, 3)
    home, work = sample_concept(schema, rng), sample_concept(schema, rng)
    return build_cyclical_trajectory([home, work, home], [8.0, 8.0, 6.0], [1.0, 1.0])


def _seasons() -> ConceptTrajectory:
    rng = np.random.default_rng(365)
    schema = AttributeSchema(2, 3, 3)
    seasons = [sample_concept(schema, rng) for _ in range(4)]
    return build_cyclical_trajectory(seasons * 2 + seasons[:1], [80.0] * 9, [11.31] * 8)


def _sensor_swap() -> ConceptTrajectory:
    rng = np.random.default_rng(4242)
    schema = AttributeSchema(2, 3, 3)
    old, new = sample_concept(schema, rng), sample_concept(schema, rng)
    f = ((100.0, 0.0), (120.0, 0.1), (150.0, 0.5), (170.0, 0.5), (200.0, 1.0))
    return chain(0.0, [(100.0, Constant(old)), (100.0, Mixture(old, new, f)), (100.0, Constant(new))])


def _cellwise() -> ConceptTrajectory:
    schema = AttributeSchema(1, 3, 2)
    cov = CovariateDistribution((np.array([0.2, 0.3, 0.5]),))
    a = JointConcept(schema, cov, PosteriorTable.one_hot([0, 0, 0], 2))
    b = JointConcept(schema, cov, PosteriorTable.one_hot([1, 1, 1], 2))
    # the pieces between switches last 25 < phi, so only the ends are stable
    law = PosteriorInterpolation(a, b, ((125.0, 0), (150.0, 1), (175.0, 2)))
    return chain(0.0, [(100.0, Constant(a)), (100.0, law), (100.0, Constant(b))])


@dataclass(frozen=True)
class Fixture:
    build: object
    params: TaxonomyParams
    description: str


# nu = 10 and mu = 0.1 separate the smooth panels (largest 10-unit move about
# 0.062 under joint Hellinger) from the jump and the oscillation (at least 0.16).
_FIG1_PARAMS = TaxonomyParams(phi=50.0, delta=1.0, beta=1.0, gamma=0.5, nu=10.0, mu=0.1)

FIXTURES: dict[str, Fixture] = {
    "fig1-top-left": Fixture(
        lambda: _fig1(_waypoints([(100, 0.0), (200, 1.0)])), _FIG1_PARAMS, "steady linear progression A -> B"
    ),
    "fig1-top-center": Fixture(
        lambda: _fig1(_waypoints([(100, 0.0), (140, 0.2), (160, 0.7), (200, 1.0)])),
        _FIG1_PARAMS,
        "monotone progression with varying speed",
    ),
    "fig1-top-right": Fixture(
        lambda: _fig1(_waypoints([(100, 0.0), (140, 0.6), (160, 0.35), (200, 1.0)])),
        _FIG1_PARAMS,
        "slow progression that reverses direction for a while",
    ),
    "fig1-bottom-left": Fixture(
        lambda: _fig1(_waypoints([(100, 0.0), (170, 1.3), (200, 1.0)])), _FIG1_PARAMS, "slow progression overshooting B"
    ),
    "fig1-bottom-center": Fixture(
        lambda: _fig1([(50.0, 0.0, 0.25), (50.0, 0.85, 1.0)]),
        _FIG1_PARAMS,
        "monotone progression with one large instantaneous jump",
    ),
    "fig1-bottom-right": Fixture(
        lambda: _fig1(
            _waypoints([(100, 0.0), (110, 1.0), (120, 0.0), (130, 1.0), (140, 0.1), (150, 0.9), (200, 1.0)])
        ),
        _FIG1_PARAMS,
        "fast oscillation between A and B before settling",
    ),
    "blip-cyber-monday": Fixture(
        _blip, TaxonomyParams(phi=0.5, delta=0.1, beta=2.0), "year of usual sales with a one-day sale concept"
    ),
    "recurring-home-work": Fixture(
        _home_work, TaxonomyParams(phi=2.0, delta=0.5, beta=0.5), "home -> work -> home app usage"
    ),
    "cyclical-seasons": Fixture(
        _seasons,
        TaxonomyParams(phi=30.0, delta=1.0, beta=1.0, cycle_i=4, cycle_m=365.24, eps_time=1e-9),
        "two years of four seasons with incremental drift between them",
    ),
    "probabilistic-sensor-swap": Fixture(
        _sensor_swap, TaxonomyParams(phi=50.0, nu=10.0, mu=0.5), "old and new sensor concepts mixed with rising weight"
    ),
    "posterior-cellwise": Fixture(
        _cellwise, TaxonomyParams(phi=50.0, nu=10.0, mu=0.5), "posterior switched one cell at a time"
    ),
}


def build_fixture_trajectory(name: str) -> ConceptTrajectory:
    try:
        return FIXTURES[name].build()
    except KeyError:
        raise ValueError(f"unknown fixture {name!r}; known: {', '.join(sorted(FIXTURES))}") from None


def fixture_params(name: str) -> TaxonomyParams:
    if name not in FIXTURES:
        raise ValueError(f"unknown fixture {name!r}")
    return FIXTURES[name].params
