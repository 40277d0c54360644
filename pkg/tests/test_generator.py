import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conceptdrift.distribution import AttributeSchema, PosteriorTable, sample_concept
from conceptdrift.generator import (
    FIXTURES,
    CovariateSearchError,
    DriftKind,
    DriftSpec,
    build_fixture_trajectory,
    class_drift_cell_count,
    fixture_params,
    gen_class_drift_pair,
    gen_covariate_drift_pair,
    generate_stream,
    replicate_rng,
)
from conceptdrift.measures import (
    DistanceFunction,
    hellinger_covariate_paper,
    hellinger_covariate_standard,
    hellinger_joint,
    hellinger_posterior_paper,
)
from conceptdrift.taxonomy import subject_predicates

SCHEMA = AttributeSchema(5, 3, 3)
SMALL = AttributeSchema(2, 3, 3)


# ---------------------------------------------------------------- class drift


@pytest.mark.parametrize(
    "target, k",
    [(0.0, 0), (0.25, 61), (0.5, 122), (0.7, 170), (0.75, 182), (1.0, 243)],
)
def test_cell_count_rounds_to_nearest(target, k):
    # 0.25 * 243 = 60.75, 0.5 * 243 = 121.5 (half rounds up), 0.7 * 243 = 170.1
    assert class_drift_cell_count(SCHEMA, target) == k


def test_tiny_positive_target_flips_one_cell_with_warning():
    with pytest.warns(UserWarning, match="rounds to 0"):
        assert class_drift_cell_count(SCHEMA, 0.001) == 1


def test_cell_count_rejects_out_of_range():
    with pytest.raises(ValueError):
        class_drift_cell_count(SCHEMA, 1.2)
    with pytest.raises(ValueError):
        class_drift_cell_count(SCHEMA, -0.1)


@pytest.mark.parametrize("target", [0.0, 0.25, 0.7, 1.0])
def test_class_pair_hits_k_over_c_exactly(target):
    rng = np.random.default_rng(3)
    before, after, truth = gen_class_drift_pair(SCHEMA, target, rng)
    k = class_drift_cell_count(SCHEMA, target)
    changed = np.sum(np.array(before.posterior.assigned_classes) != np.array(after.posterior.assigned_classes))
    assert changed == k == truth.k_flipped
    assert truth.achieved_magnitude == k / SCHEMA.cell_count
    assert hellinger_posterior_paper(before.posterior, after.posterior) == k / SCHEMA.cell_count


def test_full_class_drift_relabels_every_cell():
    before, after, _ = gen_class_drift_pair(SMALL, 1.0, np.random.default_rng(0))
    assert np.all(np.array(before.posterior.assigned_classes) != np.array(after.posterior.assigned_classes))


def test_class_drift_needs_one_hot_base():
    rng = np.random.default_rng(0)
    base = sample_concept(SMALL, rng)
    rows = np.full((SMALL.cell_count, SMALL.n_classes), 1.0 / SMALL.n_classes)
    soft = type(base)(SMALL, base.covariates, PosteriorTable(rows))
    with pytest.raises(ValueError, match="one-hot"):
        gen_class_drift_pair(SMALL, 0.5, rng, base=soft)


@given(st.integers(0, 2**32), st.floats(0.0, 1.0))
@settings(max_examples=40, deadline=None)
def test_class_pair_is_pure(seed, target):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        before, after, _ = gen_class_drift_pair(SMALL, target, np.random.default_rng(seed))
        k = class_drift_cell_count(SMALL, target)
    for a, b in zip(before.covariates.per_attribute, after.covariates.per_attribute):
        assert a.tobytes() == b.tobytes()
    sp = subject_predicates(before, after)
    assert not sp.covariate_drift
    assert sp.class_drift == (k > 0)


# ---------------------------------------------------------------- covariate drift


@pytest.mark.parametrize(
    "distance, fn",
    [
        (DistanceFunction.HELLINGER_COVARIATE_PAPER, hellinger_covariate_paper),
        (DistanceFunction.HELLINGER_COVARIATE_STANDARD, hellinger_covariate_standard),
    ],
)
@pytest.mark.parametrize("target", [0.1, 0.3, 0.5])
def test_covariate_pair_within_tolerance(distance, fn, target):
    before, after, truth = gen_covariate_drift_pair(SCHEMA, target, np.random.default_rng(11), distance=distance)
    d = fn(before.covariates, after.covariates)
    assert abs(d - target) <= 1e-3
    assert truth.achieved_magnitude == pytest.approx(d, abs=1e-15)
    assert before.posterior.rows.tobytes() == after.posterior.rows.tobytes()


def test_covariate_standard_distance_equals_joint_hellinger_for_shared_posterior():
    d = DistanceFunction.HELLINGER_COVARIATE_STANDARD
    before, after, truth = gen_covariate_drift_pair(SCHEMA, 0.3, np.random.default_rng(5), distance=d)
    assert hellinger_joint(before, after) == pytest.approx(truth.achieved_magnitude, abs=1e-12)


def test_zero_covariate_target_returns_same_concept():
    before, after, truth = gen_covariate_drift_pair(SCHEMA, 0.0, np.random.default_rng(0))
    assert after is before
    assert truth.achieved_magnitude == 0.0


def test_unreachable_covariate_target_raises():
    # one binary attribute: the literal covariate formula tops out well below 1, and a
    # single restart leaves no room to get lucky
    schema = AttributeSchema(1, 2, 2)
    with pytest.raises(CovariateSearchError) as err:
        gen_covariate_drift_pair(schema, 0.999, np.random.default_rng(0), max_restarts=0)
    assert err.value.attempts == 1
    assert err.value.best < 0.999


def test_covariate_search_validates_arguments():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        gen_covariate_drift_pair(SCHEMA, 1.5, rng)
    with pytest.raises(ValueError):
        gen_covariate_drift_pair(SCHEMA, 0.3, rng, tol=0.0)


# ---------------------------------------------------------------- streams


def small_spec(**kw):
    base = dict(kind=DriftKind.PURE_CLASS, target_magnitude=0.5, drift_time=300, length=1000, schema=SMALL, seed=7)
    base.update(kw)
    return DriftSpec(**base)


def test_stream_shape_and_steps():
    stream, truth = generate_stream(small_spec())
    assert len(stream) == 1000
    assert stream[0].step == 1 and stream[-1].step == 1000
    assert stream.xs.shape == (1000, SMALL.n_attributes)
    assert truth.trajectory.start == 1.0 and truth.trajectory.end == 1000.0


def test_truth_switches_right_after_drift_time():
    stream, truth = generate_stream(small_spec(target_magnitude=1.0))
    traj = truth.trajectory
    assert traj.concept_at(300) is truth.before
    assert traj.concept_at(301) is truth.after
    # full relabelling: every post-drift label disagrees with the old map
    old = np.array(truth.before.posterior.assigned_classes)
    post = stream[300:]
    assert post.first_step == 301
    assert np.all(old[post.cells] != post.ys)
    pre = stream[:300]
    assert np.all(old[pre.cells] == pre.ys)


def test_stream_is_deterministic():
    s1, t1 = generate_stream(small_spec(), replicate=2)
    s2, t2 = generate_stream(small_spec(), replicate=2)
    assert s1.xs.tobytes() == s2.xs.tobytes() and s1.ys.tobytes() == s2.ys.tobytes()
    assert t1.after.posterior.rows.tobytes() == t2.after.posterior.rows.tobytes()


def test_replicates_differ():
    s1, _ = generate_stream(small_spec(), replicate=0)
    s2, _ = generate_stream(small_spec(), replicate=1)
    assert s1.ys.tobytes() != s2.ys.tobytes()


def test_magnitudes_share_initial_concept_and_prefix():
    s_lo, t_lo = generate_stream(small_spec(target_magnitude=0.2))
    s_hi, t_hi = generate_stream(small_spec(target_magnitude=0.9))
    assert t_lo.before.joint_table.tobytes() == t_hi.before.joint_table.tobytes()
    assert s_lo.xs[:300].tobytes() == s_hi.xs[:300].tobytes()
    assert s_lo.ys[:300].tobytes() == s_hi.ys[:300].tobytes()


def test_no_drift_stream_has_constant_truth():
    _, truth = generate_stream(small_spec(kind=DriftKind.NONE))
    assert len(truth.trajectory.segments) == 1
    assert truth.before is truth.after
    assert truth.achieved_magnitude == 0.0


def test_covariate_stream_keeps_posterior():
    _, truth = generate_stream(small_spec(kind=DriftKind.PURE_COVARIATE, target_magnitude=0.3))
    assert truth.before.posterior.rows.tobytes() == truth.after.posterior.rows.tobytes()
    assert abs(truth.achieved_magnitude - 0.3) <= 1e-3


@pytest.mark.parametrize(
    "kw",
    [
        dict(target_magnitude=1.2),
        dict(drift_time=0),
        dict(drift_time=1000),
        dict(replicate_count=0),
        dict(seed=-1),
        dict(covariate_distance=DistanceFunction.HELLINGER_JOINT),
    ],
)
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        small_spec(**kw)


def test_replicate_rng_substreams_are_independent():
    a = replicate_rng(1, 0, 0).random(4)
    assert not np.array_equal(a, replicate_rng(1, 0, 1).random(4))
    assert not np.array_equal(a, replicate_rng(1, 1, 0).random(4))
    assert not np.array_equal(a, replicate_rng(2, 0, 0).random(4))
    assert np.array_equal(a, replicate_rng(1, 0, 0).random(4))


# ---------------------------------------------------------------- fixtures


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_fixtures_build(name):
    traj = build_fixture_trajectory(name)
    assert traj.end > traj.start
    fixture_params(name)


def test_unknown_fixture():
    with pytest.raises(ValueError, match="unknown fixture"):
        build_fixture_trajectory("nope")
    with pytest.raises(ValueError):
        fixture_params("nope")
