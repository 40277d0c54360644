import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conceptdrift.distribution import (
    AttributeSchema,
    ConceptTrajectory,
    Constant,
    CovariateDistribution,
    JointConcept,
    Mixture,
    PosteriorInterpolation,
    PosteriorTable,
    chain,
    sample_concept,
)
from conceptdrift.generator import (
    DriftKind,
    DriftSpec,
    build_cyclical_trajectory,
    build_fixture_trajectory,
    fixture_params,
    gen_class_drift_pair,
    gen_covariate_drift_pair,
    generate_stream,
)
from conceptdrift.measures import DistanceFunction, DriftMeasures
from conceptdrift.taxonomy import (
    ARCHETYPE_LABELS,
    DegenerateEpisodeError,
    DriftEpisode,
    DurationClass,
    MagnitudeClass,
    TaxonomyParams,
    classify_duration,
    classify_magnitude,
    classify_trajectory,
    cyclical_fixed_properties,
    is_blip,
    is_cyclical,
    is_gradual,
    is_incremental,
    is_probabilistic,
    is_recurring,
    novel_class_appearance,
    segment_stable_periods,
    subject_predicates,
)

H = DistanceFunction.HELLINGER_JOINT
TV = DistanceFunction.TOTAL_VARIATION_JOINT
SCHEMA = AttributeSchema(2, 3, 3)


def concepts(n, seed=0, schema=SCHEMA):
    r = np.random.default_rng(seed)
    return [sample_concept(schema, r) for _ in range(n)]


def episode(start, end, mag=0.0):
    return DriftEpisode(1, 2, start, end, DriftMeasures(mag, end - start, mag, 0.0))


def only_episode(traj, D=H, params=TaxonomyParams(phi=5.0)):
    rep = classify_trajectory(traj, D, params)
    assert len(rep.episodes) == 1
    return rep.episodes[0]


# ---------------------------------------------------------------- params


def test_params_text_round_trip_and_unknown_keys():
    p = TaxonomyParams(phi=2.5, nu=3.0, cycle_i=4, cycle_m=365.24)
    assert TaxonomyParams.from_text(p.to_text()) == p
    assert TaxonomyParams.from_text("# comment\nphi = 3  # trailing\n").phi == 3.0
    with pytest.raises(ValueError, match="unknown"):
        TaxonomyParams.from_text("alpha = 1\n")


@pytest.mark.parametrize("kw", [{"phi": -1.0}, {"gamma": 0.0}, {"mu": 0.0}, {"nu": 0.0}, {"cycle_i": -2}])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        TaxonomyParams(**kw)


# ---------------------------------------------------------------- segmentation


def test_single_constant_gives_one_segment():
    (a,) = concepts(1)
    segs = segment_stable_periods(ConceptTrajectory.constant(a, 0, 10), H, TaxonomyParams(phi=5))
    assert [(s.index, s.start, s.end) for s in segs] == [(1, 0.0, 10.0)]


def test_instant_switch_gives_touching_segments():
    a, b = concepts(2)
    segs = segment_stable_periods(chain(0.0, [(10, Constant(a)), (10, Constant(b))]), H, TaxonomyParams(phi=5))
    assert len(segs) == 2
    assert segs[1].start == segs[0].end == 10.0


def test_short_constant_gives_no_segment():
    (a,) = concepts(1)
    assert segment_stable_periods(ConceptTrajectory.constant(a, 0, 3), H, TaxonomyParams(phi=5)) == []


def test_equal_adjacent_pieces_merge():
    a, b = concepts(2)
    traj = chain(0.0, [(3, Constant(a)), (3, Constant(a)), (3, Constant(b))])
    segs = segment_stable_periods(traj, H, TaxonomyParams(phi=5))
    assert [(s.start, s.end) for s in segs] == [(0.0, 6.0)]


def test_segment_concept_is_constant_on_samples():
    traj = build_fixture_trajectory("cyclical-seasons")
    for seg in segment_stable_periods(traj, H, fixture_params("cyclical-seasons")):
        for t in np.linspace(seg.start, seg.end, 9):
            assert H(traj.concept_at(float(t)), seg.concept) <= 1e-9
        assert seg.length >= 30.0


@pytest.mark.parametrize("name", ["cyclical-seasons", "recurring-home-work", "fig1-top-center", "blip-cyber-monday"])
def test_segmentation_is_idempotent(name):
    traj = build_fixture_trajectory(name)
    params = fixture_params(name)
    segs = segment_stable_periods(traj, H, params)
    # rebuild: constants on the segments, straight mixtures across the gaps
    pieces = []
    for k, s in enumerate(segs):
        pieces.append((s.end - s.start, Constant(s.concept)))
        if k + 1 < len(segs) and segs[k + 1].start > s.end:
            pieces.append((segs[k + 1].start - s.end, Mixture(s.concept, segs[k + 1].concept)))
    again = segment_stable_periods(chain(segs[0].start, pieces), H, params)
    assert len(again) == len(segs)
    for x, y in zip(segs, again):
        assert abs(x.start - y.start) <= params.eps_time + 1e-9
        assert abs(x.end - y.end) <= params.eps_time + 1e-9


# ---------------------------------------------------------------- duration / magnitude


def test_duration_classes():
    p = TaxonomyParams(delta=1.0)
    assert classify_duration(episode(5.0, 5.0), p) is DurationClass.ABRUPT
    assert classify_duration(episode(5.0, 15.0), p) is DurationClass.EXTENDED


@pytest.mark.parametrize("kind", [DriftKind.PURE_CLASS, DriftKind.PURE_COVARIATE])
def test_generated_streams_drift_abruptly(kind):
    _, truth = generate_stream(DriftSpec(kind, 0.3, drift_time=100, length=300, seed=1))
    rep = classify_trajectory(truth.trajectory, H, TaxonomyParams(phi=10.0, delta=0.0))
    (ep,) = rep.episodes
    assert ep.gap == 0.0
    assert "abrupt" in ep.labels


def test_magnitude_classes_and_boundary():
    p = TaxonomyParams(gamma=0.5)
    assert classify_magnitude(episode(0, 1, 0.1), H, p) is MagnitudeClass.MINOR
    assert classify_magnitude(episode(0, 1, 0.5), H, p) is MagnitudeClass.MAJOR


def test_full_flip_is_major_under_posterior_distance():
    before, after, truth = gen_class_drift_pair(AttributeSchema(), 1.0, np.random.default_rng(3))
    traj = chain(0.0, [(10, Constant(before)), (10, Constant(after))])
    ep = only_episode(traj, DistanceFunction.HELLINGER_POSTERIOR_PAPER)
    assert ep.measures.magnitude == 1.0
    assert classify_magnitude(ep, DistanceFunction.HELLINGER_POSTERIOR_PAPER, TaxonomyParams(gamma=0.5)) is MagnitudeClass.MAJOR


@given(st.integers(0, 1000), st.one_of(st.just(0.0), st.floats(0.01, 30.0)))
@settings(max_examples=20, deadline=None)
def test_duration_and_magnitude_labels_are_exclusive(seed, gap):
    a, b = concepts(2, seed)
    laws = [(10, Constant(a))] + ([(gap, Mixture(a, b))] if gap > 0 else []) + [(10, Constant(b))]
    ep = only_episode(chain(0.0, laws), H, TaxonomyParams(phi=5.0, delta=2.0))
    assert len(ep.labels & {"abrupt", "extended"}) == 1
    assert len(ep.labels & {"minor", "major"}) == 1


# ---------------------------------------------------------------- blips


def test_cyber_monday_is_a_strict_blip():
    traj = build_fixture_trajectory("blip-cyber-monday")
    params = fixture_params("blip-cyber-monday")
    segs = segment_stable_periods(traj, H, params)
    assert len(segs) == 3
    assert segs[1].length == params.beta / 2
    assert is_blip(segs, 2, params).strict
    assert classify_trajectory(traj, H, params).strict_blips == (2,)


def test_long_segments_with_slow_drift_are_not_blips():
    a, b, c = concepts(3)
    traj = build_cyclical_trajectory([a, b, c], [20.0, 20.0, 20.0], [5.0, 5.0])
    params = TaxonomyParams(phi=5.0, beta=0.5)
    segs = segment_stable_periods(traj, H, params)
    for k in (1, 2):
        assert is_blip(segs, k, params) == (False, False)


def test_literal_blip_with_zero_gap_holds_for_any_beta():
    a, b, c = concepts(3)
    segs = segment_stable_periods(chain(0.0, [(20, Constant(a)), (20, Constant(b)), (20, Constant(c))]), H, TaxonomyParams(phi=5))
    for beta in (0.0, 1.0, 100.0):
        assert is_blip(segs, 1, TaxonomyParams(phi=5, beta=beta)).literal


def test_blip_needs_a_successor():
    a, b = concepts(2)
    segs = segment_stable_periods(chain(0.0, [(20, Constant(a)), (20, Constant(b))]), H, TaxonomyParams(phi=5))
    with pytest.raises(ValueError):
        is_blip(segs, 2, TaxonomyParams())


# ---------------------------------------------------------------- gradual


def test_linear_mixture_gradual_at_the_slope_bound_under_tv():
    a, b = concepts(2, 7)
    L, nu = 50.0, 5.0
    traj = chain(0.0, [(10, Constant(a)), (L, Mixture(a, b)), (10, Constant(b))])
    ep = only_episode(traj, TV)
    bound = nu * TV(a, b) / L
    assert is_gradual(traj, ep, TV, TaxonomyParams(nu=nu, mu=bound * (1 + 1e-9)))
    assert not is_gradual(traj, ep, TV, TaxonomyParams(nu=nu, mu=bound * 0.99))


def test_linear_mixture_slope_bound_is_not_enough_under_hellinger():
    # the Hellinger path of a mixture is longer than its chord, so some
    # nu-step must exceed nu * d / L
    a, b = concepts(2, 7)
    L, nu = 50.0, 5.0
    traj = chain(0.0, [(10, Constant(a)), (L, Mixture(a, b)), (10, Constant(b))])
    ep = only_episode(traj, H)
    bound = nu * H(a, b) / L
    assert not is_gradual(traj, ep, H, TaxonomyParams(nu=nu, mu=bound * (1 + 1e-9)))


def test_interior_jump_is_not_gradual():
    traj = build_fixture_trajectory("fig1-bottom-center")
    params = fixture_params("fig1-bottom-center")
    ep = only_episode(traj, H, params)
    assert not is_gradual(traj, ep, H, params)


def test_episode_shorter_than_nu_is_vacuously_gradual():
    a, b = concepts(2)
    traj = chain(0.0, [(10, Constant(a)), (2, Mixture(a, b)), (10, Constant(b))])
    ep = only_episode(traj)
    assert is_gradual(traj, ep, H, TaxonomyParams(nu=3.0, mu=1e-6))


# ---------------------------------------------------------------- incremental


# Strictly positive weight increments: equal adjacent weights would hold the
# concept still for longer than phi and legitimately split the episode.
@given(st.integers(0, 1000), st.lists(st.floats(0.05, 1.0), min_size=2, max_size=5))
@settings(max_examples=25, deadline=None)
def test_monotone_mixture_is_incremental(seed, steps):
    a, b = concepts(2, seed)
    ws = list(np.cumsum(steps)[:-1] / np.sum(steps))
    times = np.linspace(10.0, 40.0, len(ws) + 2)
    bps = tuple(zip(times, [0.0] + ws + [1.0]))
    traj = chain(0.0, [(10, Constant(a)), (30, Mixture(a, b, bps)), (10, Constant(b))])
    ep = only_episode(traj)
    assert is_incremental(traj, ep, H, grid_n=256)
    assert "incremental" in ep.labels


@pytest.mark.parametrize("name", ["fig1-bottom-right", "fig1-bottom-left"])
def test_oscillation_and_overshoot_are_not_incremental(name):
    traj = build_fixture_trajectory(name)
    ep = only_episode(traj, H, fixture_params(name))
    assert not is_incremental(traj, ep, H)


@pytest.mark.parametrize("name", sorted(ARCHETYPE_LABELS))
def test_archetype_labels(name):
    traj = build_fixture_trajectory(name)
    params = fixture_params(name)
    ep = only_episode(traj, H, params)
    got = (is_gradual(traj, ep, H, params), is_incremental(traj, ep, H))
    assert got == ARCHETYPE_LABELS[name]
    assert ("gradual" in ep.labels, "incremental" in ep.labels) == got


# ---------------------------------------------------------------- probabilistic


def test_mixture_weight_is_recovered():
    traj = build_fixture_trajectory("probabilistic-sensor-swap")
    params = fixture_params("probabilistic-sensor-swap")
    ep = only_episode(traj, H, params)
    res = is_probabilistic(traj, ep)
    assert res.holds
    law = traj.segments[1].law
    recovered = dict(res.recovered_f)
    for t, w in law.breakpoints:
        assert recovered[t] == pytest.approx(w, abs=1e-9)


def test_two_cell_switch_leaves_the_mixture_line():
    # one attribute with two equally likely values; both cells move from class
    # 0 to class 1, one after the other.  Halfway, P_t - P_a = (b - a) on cell 0
    # only, so the best f is 1/2 and every entry of the residual is +-1/4.
    s = AttributeSchema(1, 2, 2)
    cov = CovariateDistribution((np.array([0.5, 0.5]),))
    a = JointConcept(s, cov, PosteriorTable.one_hot([0, 0], 2))
    b = JointConcept(s, cov, PosteriorTable.one_hot([1, 1], 2))
    law = PosteriorInterpolation(a, b, ((15.0, 0), (25.0, 1)))
    traj = chain(0.0, [(10, Constant(a)), (20, law), (10, Constant(b))])
    # the half-switched hold lasts 10 units, so phi must exceed it
    ep = only_episode(traj, H, TaxonomyParams(phi=12.0))
    res = is_probabilistic(traj, ep)
    assert not res.holds
    assert res.max_residual == pytest.approx(0.25, abs=1e-15)
    assert dict(res.recovered_f)[20.0] == pytest.approx(0.5, abs=1e-15)


def test_incremental_without_probabilistic_and_probabilistic_without_gradual():
    traj = build_fixture_trajectory("posterior-cellwise")
    ep = only_episode(traj, H, fixture_params("posterior-cellwise"))
    assert "incremental" in ep.labels and "probabilistic" not in ep.labels

    traj = build_fixture_trajectory("fig1-bottom-center")
    ep = only_episode(traj, H, fixture_params("fig1-bottom-center"))
    assert "probabilistic" in ep.labels and "gradual" not in ep.labels


def test_identical_endpoints_are_degenerate():
    a, b = concepts(2)
    traj = chain(0.0, [(10, Constant(a)), (10, Mixture(a, b)), (10, Mixture(b, a)), (10, Constant(a))])
    ep = DriftEpisode(1, 2, 10.0, 30.0, DriftMeasures(0.0, 20.0, 0.0, 0.0))
    with pytest.raises(DegenerateEpisodeError):
        is_probabilistic(traj, ep)


# ---------------------------------------------------------------- recurrence and cycles


def _segments_of(cs, length=10.0):
    traj = chain(0.0, [(length, Constant(c)) for c in cs])
    return segment_stable_periods(traj, H, TaxonomyParams(phi=5.0))


def test_recurring():
    a, b, c = concepts(3)
    assert is_recurring(_segments_of([a, b, a]), H, TaxonomyParams())
    assert not is_recurring(_segments_of([a, b, c]), H, TaxonomyParams())
    traj = build_fixture_trajectory("recurring-home-work")
    assert classify_trajectory(traj, H, fixture_params("recurring-home-work")).recurring


def test_cyclical():
    a, b, c, d = concepts(4)
    assert is_cyclical(_segments_of([a, b, c, d, a, b, c, d]), H, TaxonomyParams(cycle_i=4))
    assert not is_cyclical(_segments_of([a, b, a, c]), H, TaxonomyParams(cycle_i=2))
    with pytest.raises(ValueError):
        is_cyclical(_segments_of([a, b, a]), H, TaxonomyParams(cycle_i=4))
    with pytest.raises(ValueError):
        is_cyclical(_segments_of([a, b, a]), H, TaxonomyParams())


def test_seasons_fixture_has_every_fixed_property():
    traj = build_fixture_trajectory("cyclical-seasons")
    rep = classify_trajectory(traj, H, fixture_params("cyclical-seasons"))
    cyc = rep.cyclical
    assert cyc.cyclical and cyc.fixed_frequency and cyc.fixed_concept_duration
    assert cyc.fixed_drift_duration and cyc.fixed_concept_onset and cyc.fixed_drift_onset
    assert all(d == pytest.approx(365.24, abs=1e-9) for d in cyc.cycle_durations)


def test_perfect_period_gives_cycle_duration():
    cs = concepts(3, 4)
    traj = build_cyclical_trajectory(cs * 3, [7.0] * 9, [3.0] * 8)
    params = TaxonomyParams(phi=5.0, cycle_i=3, cycle_m=30.0, eps_time=1e-9)
    props = cyclical_fixed_properties(segment_stable_periods(traj, H, params), H, params)
    assert props.cyclical and props.fixed_frequency and props.fixed_concept_duration
    assert props.fixed_drift_duration and props.fixed_concept_onset and props.fixed_drift_onset
    assert props.cycle_durations == pytest.approx([30.0] * 6)


def test_jittered_onset_breaks_fixed_onset():
    cs = concepts(3, 4)
    durations = [7.0] * 9
    durations[4] += 0.5  # one concept lasts a little longer
    traj = build_cyclical_trajectory(cs * 3, durations, [3.0] * 8)
    params = TaxonomyParams(phi=5.0, cycle_i=3, cycle_m=30.0, eps_time=1e-9)
    props = cyclical_fixed_properties(segment_stable_periods(traj, H, params), H, params)
    assert props.cyclical
    assert not props.fixed_concept_onset
    assert not props.fixed_concept_duration
    assert props.fixed_drift_duration


def test_winter_varies_but_seasons_still_cycle():
    seasons = concepts(4, 11)
    rng = np.random.default_rng(2)
    stable = list(80.0 + rng.uniform(-6, 6, 12))
    traj = build_cyclical_trajectory(seasons * 3, stable, [11.0] * 11)
    params = TaxonomyParams(phi=30.0, cycle_i=4, cycle_m=365.0, eps_time=1e-9)
    props = cyclical_fixed_properties(segment_stable_periods(traj, H, params), H, params)
    assert props.cyclical
    assert not props.fixed_concept_onset


# ---------------------------------------------------------------- subject


def test_pure_class_drift_predicates():
    before, after, truth = gen_class_drift_pair(AttributeSchema(), 0.3, np.random.default_rng(1))
    sp = subject_predicates(before, after)
    assert sp.class_drift and sp.pure_class_drift and not sp.covariate_drift
    assert sp.subconcept and not sp.full_concept
    changed = np.any(before.posterior.rows != after.posterior.rows, axis=1)
    assert sp.drift_scope == truth.k_flipped / 243 == changed.sum() / 243


def test_pure_covariate_drift_predicates():
    before, after, _ = gen_covariate_drift_pair(AttributeSchema(), 0.3, np.random.default_rng(1), tol=1e-3, max_restarts=20)
    sp = subject_predicates(before, after)
    assert sp.pure_covariate_drift and sp.covariate_drift and not sp.class_drift
    assert sp.drift_scope == 0.0


def test_identical_concepts_have_no_subject():
    (a,) = concepts(1)
    sp = subject_predicates(a, a)
    assert not any([sp.class_drift, sp.pure_class_drift, sp.subconcept, sp.full_concept, sp.covariate_drift, sp.pure_covariate_drift])
    assert sp.drift_scope == 0.0


def test_novel_class():
    s = AttributeSchema(1, 3, 3)
    cov = CovariateDistribution((np.full(3, 1 / 3),))
    a = JointConcept(s, cov, PosteriorTable.one_hot([0, 1, 0], 3))
    b = JointConcept(s, cov, PosteriorTable.one_hot([0, 1, 2], 3))
    c = JointConcept(s, cov, PosteriorTable.one_hot([2, 1, 0], 3))
    assert novel_class_appearance(ConceptTrajectory.constant(a, 0, 10), 0, 10) == set()
    assert novel_class_appearance(chain(0.0, [(5, Constant(a)), (5, Constant(b))]), 0, 10) == {2}
    assert novel_class_appearance(chain(0.0, [(5, Constant(b)), (5, Constant(c))]), 0, 10) == set()


# ---------------------------------------------------------------- report


def test_report_records_echo_params():
    params = fixture_params("recurring-home-work")
    rep = classify_trajectory(build_fixture_trajectory("recurring-home-work"), H, params)
    lines = [json.loads(line) for line in rep.to_jsonl().splitlines()]
    assert [r["record"] for r in lines] == ["episode", "episode", "trajectory"]
    for r in lines:
        assert TaxonomyParams(**r["params"]) == params


def test_stationary_trajectory_has_no_episodes():
    (a,) = concepts(1)
    rep = classify_trajectory(ConceptTrajectory.constant(a, 0, 100), H, TaxonomyParams(phi=10))
    assert rep.episodes == () and len(rep.segments) == 1
