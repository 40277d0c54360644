"""Qualitative drift categories evaluated on ground-truth trajectories.

Segments are numbered from 1 as in the usual S_a / E_a notation.  Every "= 0"
test uses ``eps_zero`` and every time equality uses ``eps_time``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import NamedTuple, Sequence

import numpy as np

from .distribution import ConceptTrajectory, JointConcept, class_marginal
from .measures import DEFAULT_GRID, DistanceFunction, DriftMeasures, average_rate, drift_frequency, path_through

# Invariants table for the six drift-shape archetype fixtures (see
# ``generator.FIXTURES``), classified with joint Hellinger distance under the
# fixtures' own parameters (nu = 10, mu = 0.1):
#
#   fixture               gradual  incremental  shape
#   fig1-top-left         yes      yes          steady progression
#   fig1-top-center       yes      yes          monotone, varying speed
#   fig1-top-right        yes      no           temporary reversal
#   fig1-bottom-left      yes      no           overshoot, then settle
#   fig1-bottom-center    no       yes          one large jump
#   fig1-bottom-right     no       no           oscillation
ARCHETYPE_LABELS: dict[str, tuple[bool, bool]] = {
    "fig1-top-left": (True, True),
    "fig1-top-center": (True, True),
    "fig1-top-right": (True, False),
    "fig1-bottom-left": (True, False),
    "fig1-bottom-center": (False, True),
    "fig1-bottom-right": (False, False),
}


@dataclass(frozen=True)
class TaxonomyParams:
    phi: float = 1.0
    delta: float = 1.0
    beta: float = 1.0
    gamma: float = 0.5
    nu: float = 1.0
    mu: float = 0.1
    eps_zero: float = 1e-9
    cycle_i: int = 0
    cycle_m: float = 0.0
    eps_time: float = 0.0

    def __post_init__(self):
        for name in ("phi", "delta", "beta", "cycle_m", "eps_time", "eps_zero"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("gamma", "mu", "nu"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.cycle_i < 0:
            raise ValueError("cycle_i must be >= 0 (0 means unset)")

    @classmethod
    def from_text(cls, text: str) -> "TaxonomyParams":
        known = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key = value")
            key, val = (p.strip() for p in line.split("=", 1))
            if key not in known:
                raise ValueError(f"line {lineno}: unknown parameter {key!r}")
            values[key] = int(val) if key == "cycle_i" else float(val)
        return cls(**values)

    def to_text(self) -> str:
        return "".join(f"{k} = {v!r}\n" for k, v in asdict(self).items())


class DurationClass(enum.Enum):
    ABRUPT = "abrupt"
    EXTENDED = "extended"


class MagnitudeClass(enum.Enum):
    MINOR = "minor"
    MAJOR = "major"


@dataclass(frozen=True, eq=False)
class StableSegment:
    index: int
    start: float
    end: float
    concept: JointConcept

    @property
    def length(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class SubjectPredicates:
    class_drift: bool
    pure_class_drift: bool
    subconcept: bool
    full_concept: bool
    covariate_drift: bool
    pure_covariate_drift: bool
    drift_scope: float


@dataclass(frozen=True, eq=False)
class DriftEpisode:
    from_segment: int
    to_segment: int
    start: float
    end: float
    measures: DriftMeasures
    labels: frozenset = field(default_factory=frozenset)
    subject: SubjectPredicates | None = None

    @property
    def gap(self) -> float:
        return self.end - self.start


class DegenerateEpisodeError(ValueError):
    """Raised when an episode's endpoint concepts coincide."""


# --------------------------------------------------------------------------
# segmentation


def _piece_is_constant(trajectory, t0, t1, D, eps, sample_step) -> bool:
    seg = trajectory.segment_at(t0)
    if seg.law.is_constant_between(t0, t1):
        return True
    ref = trajectory.concept_at(t0)
    n = max(3, min(4096, int(math.ceil((t1 - t0) / sample_step)) + 1))
    # sample the half-open piece; its right end belongs to the next piece
    for s in np.linspace(t0, t1, n)[1:-1]:
        if D(ref, trajectory.concept_at(float(s))) > eps:
            return False
    # probe just left of t1 so a change landing exactly on t1 is not missed
    return D(ref, trajectory.concept_at(t1 - (t1 - t0) * 1e-9)) <= eps


def segment_stable_periods(
    trajectory: ConceptTrajectory,
    D: DistanceFunction = DistanceFunction.HELLINGER_JOINT,
    params: TaxonomyParams = TaxonomyParams(),
    sample_step: float = 1.0,
) -> list[StableSegment]:
    """Maximal constant stretches of at least ``phi`` time units, in order.

    The trajectory's own knots (segment bounds, mixture breakpoints, switch
    times) delimit the candidate pieces, so boundaries are exact.
    """
    if sample_step <= 0:
        raise ValueError("sample_step must be > 0")
    knots = trajectory.knots()
    runs: list[list] = []  # [start, end, concept]
    for t0, t1 in zip(knots, knots[1:]):
        if not _piece_is_constant(trajectory, t0, t1, D, params.eps_zero, sample_step):
            runs.append(None)
            continue
        c = trajectory.concept_at(t0)
        last = runs[-1] if runs else None
        if last is not None and last[1] == t0 and D(last[2], c) <= params.eps_zero:
            last[1] = t1
        else:
            runs.append([t0, t1, c])
    out = []
    for run in runs:
        if run is None:
            continue
        start, end, c = run
        if end - start + params.eps_time >= params.phi:
            out.append(StableSegment(len(out) + 1, start, end, c))
    return out


# --------------------------------------------------------------------------
# per-episode categories


def classify_duration(episode: DriftEpisode, params: TaxonomyParams) -> DurationClass:
    return DurationClass.ABRUPT if episode.gap <= params.delta else DurationClass.EXTENDED


def classify_magnitude(episode: DriftEpisode, D: DistanceFunction, params: TaxonomyParams) -> MagnitudeClass:
    return MagnitudeClass.MINOR if episode.measures.magnitude < params.gamma else MagnitudeClass.MAJOR


class BlipResult(NamedTuple):
    literal: bool
    strict: bool


def _seg(segments: Sequence[StableSegment], a: int) -> StableSegment:
    if not 1 <= a <= len(segments):
        raise IndexError(f"segment {a} outside 1..{len(segments)}")
    return segments[a - 1]


def is_blip(segments: Sequence[StableSegment], a: int, params: TaxonomyParams) -> BlipResult:
    """Blip test for concept ``a``.

    ``literal`` is the gap test S_{a+1} - E_a <= beta.  ``strict`` asks that
    concept ``a`` itself last at most beta and be entered and left abruptly.
    """
    if a >= len(segments):
        raise ValueError(f"segment {a} has no successor")
    cur, nxt = _seg(segments, a), _seg(segments, a + 1)
    literal = nxt.start - cur.end <= params.beta
    strict = False
    if a > 1:
        prev = _seg(segments, a - 1)
        strict = (
            cur.end - cur.start <= params.beta
            and cur.start - prev.end <= params.delta
            and nxt.start - cur.end <= params.delta
        )
    return BlipResult(literal, strict)


def _concept_in_episode(trajectory, episode, start_concept, end_concept, t):
    if t <= episode.start:
        return start_concept
    if t >= episode.end:
        return end_concept
    return trajectory.concept_at(t)


def _episode_grid(trajectory, lo, hi, grid_n, extra=()) -> np.ndarray:
    pts = set(np.linspace(lo, hi, grid_n + 1).tolist())
    for k in (*trajectory.knots(), *extra):
        if lo <= k <= hi:
            pts.add(k)
    return np.array(sorted(pts))


def is_gradual(
    trajectory: ConceptTrajectory,
    episode: DriftEpisode,
    D: DistanceFunction,
    params: TaxonomyParams,
    grid_n: int = DEFAULT_GRID,
    *,
    start_concept: JointConcept | None = None,
    end_concept: JointConcept | None = None,
) -> bool:
    """Every window of width nu inside the episode moves at most mu."""
    lo, hi = episode.start, episode.end - params.nu
    if hi < lo:
        return True
    start_concept = start_concept or trajectory.concept_at(episode.start)
    end_concept = end_concept or trajectory.concept_at(episode.end)
    shifted = [k - params.nu for k in trajectory.knots()]
    for t in _episode_grid(trajectory, lo, hi, grid_n, shifted):
        p = _concept_in_episode(trajectory, episode, start_concept, end_concept, float(t))
        q = _concept_in_episode(trajectory, episode, start_concept, end_concept, float(t) + params.nu)
        if D(p, q) > params.mu:
            return False
    return True


def _nondecreasing_pairwise(values: np.ndarray, eps: float) -> bool:
    """values[i] <= values[j] + eps for every i < j."""
    if values.size < 2:
        return True
    suffix_min = np.minimum.accumulate(values[::-1])[::-1]
    return bool(np.all(values[:-1] <= suffix_min[1:] + eps))


def is_incremental(
    trajectory: ConceptTrajectory,
    episode: DriftEpisode,
    D: DistanceFunction,
    grid_n: int = DEFAULT_GRID,
    eps: float = 1e-9,
    *,
    start_concept: JointConcept | None = None,
    end_concept: JointConcept | None = None,
) -> bool:
    """Distance from the old concept never falls and distance to the new never rises."""
    if episode.end <= episode.start:
        return True
    start_concept = start_concept or trajectory.concept_at(episode.start)
    end_concept = end_concept or trajectory.concept_at(episode.end)
    grid = _episode_grid(trajectory, episode.start, episode.end, grid_n)
    interior = grid[(grid > episode.start) & (grid < episode.end)]
    from_start = np.empty(interior.size)
    to_end = np.empty(interior.size)
    for i, t in enumerate(interior):
        c = trajectory.concept_at(float(t))
        from_start[i] = D(start_concept, c)
        to_end[i] = D(c, end_concept)
    return _nondecreasing_pairwise(from_start, eps) and _nondecreasing_pairwise(-to_end, eps)


class ProbabilisticResult(NamedTuple):
    holds: bool
    recovered_f: tuple
    max_residual: float


def is_probabilistic(
    trajectory: ConceptTrajectory,
    episode: DriftEpisode,
    tol: float = 1e-9,
    grid_n: int = DEFAULT_GRID,
    eps: float = 1e-9,
    *,
    start_concept: JointConcept | None = None,
    end_concept: JointConcept | None = None,
) -> ProbabilisticResult:
    """Fit P_t = (1 - f) P_start + f P_end by least squares at each grid time.

    The recovered ``f`` is returned as ``(time, weight)`` breakpoints including
    every knot of the trajectory inside the episode.  Without explicit
    endpoints the start concept is read just left of ``episode.start``, since a
    switch scheduled at that instant already belongs to the episode.
    """
    if start_concept is None:
        t0 = episode.start
        if t0 > trajectory.start:
            t0 -= max(episode.end - episode.start, 1.0) * 1e-9
        start_concept = trajectory.concept_at(t0)
    end_concept = end_concept or trajectory.concept_at(episode.end)
    j0 = start_concept.joint_table.ravel()
    delta = end_concept.joint_table.ravel() - j0
    norm2 = float(delta @ delta)
    if norm2 == 0.0:
        raise DegenerateEpisodeError("endpoint concepts are identical; mixture weight is unidentifiable")
    grid = _episode_grid(trajectory, episode.start, episode.end, grid_n)
    recovered = []
    worst = 0.0
    for t in grid:
        c = _concept_in_episode(trajectory, episode, start_concept, end_concept, float(t))
        r = c.joint_table.ravel() - j0
        f = float(r @ delta) / norm2
        worst = max(worst, float(np.max(np.abs(r - f * delta))))
        recovered.append((float(t), f))
    weights = np.array([w for _, w in recovered])
    holds = (
        worst <= tol
        and abs(weights[0]) <= eps
        and abs(weights[-1] - 1.0) <= eps
        and _nondecreasing_pairwise(weights, eps)
    )
    return ProbabilisticResult(bool(holds), tuple(recovered), worst)


# --------------------------------------------------------------------------
# subject of drift


def subject_predicates(a: JointConcept, b: JointConcept, eps: float = 1e-9) -> SubjectPredicates:
    if a.schema != b.schema:
        raise ValueError(f"schema mismatch: {a.schema} vs {b.schema}")
    changed = np.any(np.abs(a.posterior.rows - b.posterior.rows) > eps, axis=1)
    class_drift = bool(changed.any())
    covariate = bool(np.any(np.abs(a.covariates.joint - b.covariates.joint) > eps))
    return SubjectPredicates(
        class_drift=class_drift,
        pure_class_drift=class_drift and not covariate,
        subconcept=class_drift and not bool(changed.all()),
        full_concept=bool(changed.all()),
        covariate_drift=covariate,
        pure_covariate_drift=covariate and not class_drift,
        drift_scope=float(np.count_nonzero(changed)) / changed.size,
    )


def novel_class_appearance(trajectory: ConceptTrajectory, t: float, u: float, eps: float = 1e-9) -> set[int]:
    before = class_marginal(trajectory.concept_at(t))
    after = class_marginal(trajectory.concept_at(u))
    return {int(y) for y in np.flatnonzero((before <= eps) & (after > eps))}


# --------------------------------------------------------------------------
# recurrence


def is_recurring(segments: Sequence[StableSegment], D: DistanceFunction, params: TaxonomyParams) -> bool:
    for i, s in enumerate(segments):
        for r in segments[i + 1:]:
            if D(s.concept, r.concept) <= params.eps_zero:
                return True
    return False


def _require_cycle(segments, params):
    i = params.cycle_i
    if i < 1:
        raise ValueError("cycle_i must be set (>= 1) for cyclical predicates")
    if len(segments) < i + 1:
        raise ValueError(f"need at least {i + 1} segments to judge a cycle of {i}, have {len(segments)}")
    return i


def is_cyclical(segments: Sequence[StableSegment], D: DistanceFunction, params: TaxonomyParams) -> bool:
    i = _require_cycle(segments, params)
    return all(
        D(segments[k].concept, segments[k + i].concept) <= params.eps_zero
        for k in range(len(segments) - i)
    )


@dataclass(frozen=True)
class CyclicalProperties:
    cyclical: bool
    fixed_frequency: bool
    fixed_concept_duration: bool
    fixed_drift_duration: bool
    fixed_concept_onset: bool
    fixed_drift_onset: bool
    cycle_durations: tuple


def _all_equal(values, tol) -> bool:
    return all(abs(v - values[0]) <= tol for v in values) if values else True


def cyclical_fixed_properties(
    segments: Sequence[StableSegment], D: DistanceFunction, params: TaxonomyParams
) -> CyclicalProperties:
    i = _require_cycle(segments, params)
    cyc = is_cyclical(segments, D, params)
    S = [s.start for s in segments]
    E = [s.end for s in segments]
    n = len(segments)
    m, tol = params.cycle_m, params.eps_time
    pairs = range(n - i)
    freq = all(S[a + i] <= E[a] + m + tol and E[a + i] + tol >= S[a] + m for a in pairs)
    concept_dur = all(abs((E[a] - S[a]) - (E[a + i] - S[a + i])) <= tol for a in pairs)
    drift_dur = all(
        abs((S[a + 1] - E[a]) - (S[a + i + 1] - E[a + i])) <= tol for a in range(n - i - 1)
    )
    concept_onsets = [S[a + i] - S[a] for a in pairs]
    drift_onsets = [E[a + i] - E[a] for a in pairs]
    return CyclicalProperties(
        cyclical=cyc,
        fixed_frequency=cyc and freq,
        fixed_concept_duration=cyc and concept_dur,
        fixed_drift_duration=cyc and drift_dur,
        fixed_concept_onset=cyc and _all_equal(concept_onsets, tol),
        fixed_drift_onset=cyc and _all_equal(drift_onsets, tol),
        cycle_durations=tuple(concept_onsets),
    )


# --------------------------------------------------------------------------
# whole-trajectory classification


def _episode_measures(trajectory, a_seg, b_seg, D, grid_n) -> DriftMeasures:
    dur = b_seg.start - a_seg.end
    mag = D(a_seg.concept, b_seg.concept)
    if dur <= 0:
        path = mag
    else:
        inner = np.linspace(a_seg.end, b_seg.start, grid_n + 1)[1:-1]
        path = path_through([a_seg.concept, *(trajectory.concept_at(float(t)) for t in inner), b_seg.concept], D)
    return DriftMeasures(mag, dur, path, average_rate(path, dur))


def build_episodes(
    trajectory: ConceptTrajectory,
    segments: Sequence[StableSegment],
    D: DistanceFunction,
    params: TaxonomyParams,
    grid_n: int = DEFAULT_GRID,
    probabilistic_tol: float = 1e-9,
) -> list[DriftEpisode]:
    """Drift periods between adjacent stable segments with all labels attached."""
    out = []
    for cur, nxt in zip(segments, segments[1:]):
        meas = _episode_measures(trajectory, cur, nxt, D, grid_n)
        ep = DriftEpisode(cur.index, nxt.index, cur.end, nxt.start, meas)
        ends = dict(start_concept=cur.concept, end_concept=nxt.concept)
        labels = {classify_duration(ep, params).value, classify_magnitude(ep, D, params).value}
        if is_blip(segments, cur.index, params).literal:
            labels.add("blip-literal")
        if is_gradual(trajectory, ep, D, params, grid_n, **ends):
            labels.add("gradual")
        if is_incremental(trajectory, ep, D, grid_n, params.eps_zero, **ends):
            labels.add("incremental")
        try:
            if is_probabilistic(trajectory, ep, probabilistic_tol, grid_n, params.eps_zero, **ends).holds:
                labels.add("probabilistic")
        except DegenerateEpisodeError:
            labels.add("degenerate")
        subject = subject_predicates(cur.concept, nxt.concept, params.eps_zero)
        for name in ("class_drift", "pure_class_drift", "subconcept", "full_concept", "covariate_drift", "pure_covariate_drift"):
            if getattr(subject, name):
                labels.add(name.replace("_", "-"))
        out.append(DriftEpisode(ep.from_segment, ep.to_segment, ep.start, ep.end, meas, frozenset(labels), subject))
    return out


@dataclass(frozen=True, eq=False)
class TaxonomyReport:
    segments: tuple
    episodes: tuple
    recurring: bool
    strict_blips: tuple
    frequency: int
    cyclical: CyclicalProperties | None
    params: TaxonomyParams
    distance: DistanceFunction

    def records(self) -> list[dict]:
        prm = asdict(self.params)
        out = []
        for ep in self.episodes:
            out.append(
                {
                    "record": "episode",
                    "from_segment": ep.from_segment,
                    "to_segment": ep.to_segment,
                    "start": ep.start,
                    "end": ep.end,
                    "labels": sorted(ep.labels),
                    "magnitude": ep.measures.magnitude,
                    "duration": ep.measures.duration,
                    "path_length": ep.measures.path_length,
                    "average_rate": ep.measures.average_rate,
                    "drift_scope": ep.subject.drift_scope if ep.subject else None,
                    "distance": self.distance.value,
                    "params": prm,
                }
            )
        out.append(
            {
                "record": "trajectory",
                "segments": [[s.index, s.start, s.end] for s in self.segments],
                "n_episodes": len(self.episodes),
                "frequency": self.frequency,
                "recurring": self.recurring,
                "strict_blips": list(self.strict_blips),
                "cyclical": asdict(self.cyclical) if self.cyclical else None,
                "distance": self.distance.value,
                "params": prm,
            }
        )
        return out

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True, default=_json_default) + "\n" for r in self.records())


def _json_default(o):
    if isinstance(o, float) and math.isinf(o):
        return "inf"
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o))


def classify_trajectory(
    trajectory: ConceptTrajectory,
    D: DistanceFunction = DistanceFunction.HELLINGER_JOINT,
    params: TaxonomyParams = TaxonomyParams(),
    grid_n: int = DEFAULT_GRID,
    sample_step: float = 1.0,
) -> TaxonomyReport:
    segments = segment_stable_periods(trajectory, D, params, sample_step)
    episodes = build_episodes(trajectory, segments, D, params, grid_n)
    strict = tuple(a for a in range(2, len(segments)) if is_blip(segments, a, params).strict)
    cyc = None
    if params.cycle_i >= 1 and len(segments) >= params.cycle_i + 1:
        cyc = cyclical_fixed_properties(segments, D, params)
    return TaxonomyReport(
        segments=tuple(segments),
        episodes=tuple(episodes),
        recurring=is_recurring(segments, D, params),
        strict_blips=strict,
        frequency=drift_frequency(segments, trajectory.start, trajectory.end),
        cyclical=cyc,
        params=params,
        distance=D,
    )
