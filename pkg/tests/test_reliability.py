import itertools

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from trua.reliability import (
    EmpiricalLifetimeDist,
    NoSurvivors,
    TaskRequest,
    Unsatisfiable,
    build_lifetime_dist,
    combined_failure,
    conditional_failure_prob,
    conditional_failure_probs,
    lifetime_dist_from_lifetimes,
    min_replicas,
)
from trua.trace_model import bimodal_spec, generate_synthetic

from conftest import make_dataset


def test_bins_are_half_open():
    assert lifetime_dist_from_lifetimes([5, 15, 25], 10).counts.tolist() == [1, 1, 1]
    assert lifetime_dist_from_lifetimes([10], 10).counts.tolist() == [1]
    assert lifetime_dist_from_lifetimes([11], 10).counts.tolist() == [0, 1]


def test_build_from_dataset():
    ds = make_dataset([("a", 0, 5), ("b", 100, 115), ("c", 7, 32)])
    dist = build_lifetime_dist(ds, 10)
    assert dist.counts.tolist() == [1, 1, 1]
    assert dist.total == 3
    with pytest.raises(ValueError):
        build_lifetime_dist(make_dataset([]), 10)
    with pytest.raises(ValueError):
        build_lifetime_dist(ds, 0)


def test_large_trace_total():
    ds = generate_synthetic(bimodal_spec(80_000, seed=1))
    assert build_lifetime_dist(ds, 60).total == 80_000


def test_mass():
    dist = lifetime_dist_from_lifetimes(range(1, 101), 1)
    assert dist.mass(0, 100) == 1.0
    assert dist.mass(0, 50) == 0.5
    assert dist.mass(20, 30) == pytest.approx(0.1)
    assert dist.mass(100, 500) == 0.0


def test_uniform_half():
    dist = lifetime_dist_from_lifetimes(range(1, 101), 1)
    assert conditional_failure_prob(dist, 0, 50) == 0.5


def test_zero_lease_is_zero():
    dist = lifetime_dist_from_lifetimes([3, 40, 77, 1000], 7)
    for age in (0, 5, 39, 500):
        assert conditional_failure_prob(dist, age, 0) == 0.0


def test_no_survivors():
    dist = lifetime_dist_from_lifetimes([10, 20], 1)
    with pytest.raises(NoSurvivors):
        conditional_failure_prob(dist, 20, 5)
    assert np.isnan(conditional_failure_probs(dist, np.array([25]), 5)[0])


def test_against_counting_oracle_one_point():
    ds = generate_synthetic(bimodal_spec(20_000, seed=2))
    lifetimes = ds.lifetimes
    t0, dt, w = 600, 3600, 60
    alive = lifetimes > t0
    oracle = np.count_nonzero(alive & (lifetimes <= t0 + dt)) / np.count_nonzero(alive)
    got = conditional_failure_prob(build_lifetime_dist(ds, w), t0, dt)
    # t0 and t0 + dt sit on bin edges here, so there is no quantization error
    assert got == oracle
    off = conditional_failure_prob(build_lifetime_dist(ds, 7), t0, dt)
    boundary = sum(np.count_nonzero((lifetimes > e // 7 * 7) & (lifetimes <= e // 7 * 7 + 7)) for e in (t0, t0 + dt))
    assert abs(off - oracle) <= boundary / np.count_nonzero(alive)


def test_vectorised_matches_scalar():
    ds = generate_synthetic(bimodal_spec(3000, seed=6))
    dist = build_lifetime_dist(ds, 120)
    ages = np.arange(0, 150_000, 777)
    vec = conditional_failure_probs(dist, ages, 14400)
    for age, v in zip(ages, vec):
        try:
            assert conditional_failure_prob(dist, age, 14400) == v
        except NoSurvivors:
            assert np.isnan(v)


def test_combined_failure():
    assert combined_failure([0.1, 0.1, 0.1]) == pytest.approx(0.001)
    assert combined_failure([]) == 1.0
    assert combined_failure([0.0, 0.9]) == 0.0
    with pytest.raises(ValueError):
        combined_failure([1.2])


@pytest.mark.parametrize("f, lam, m", [(0.1, 0.99, 2), (0.5, 0.9, 4), (0.3, 0.95, 3), (0.0, 0.5, 1), (0.9, 0.05, 1)])
def test_min_replicas_examples(f, lam, m):
    assert min_replicas(f, lam) == m


def test_min_replicas_errors():
    with pytest.raises(Unsatisfiable):
        min_replicas(1.0, 0.5)
    with pytest.raises(ValueError):
        min_replicas(0.5, 1.0)
    with pytest.raises(ValueError):
        min_replicas(-0.1, 0.5)


def test_task_request_validation():
    TaskRequest(0.9, 3600, 4)
    for bad in ((0.0, 10), (1.0, 10), (0.5, 0), (0.5, 10, 0)):
        with pytest.raises(ValueError):
            TaskRequest(*bad)


def test_json_round_trip():
    dist = lifetime_dist_from_lifetimes([1, 1, 50, 999], 25)
    again = EmpiricalLifetimeDist.from_json(dist.to_json())
    assert again == dist and again.total == 4


_lifetimes = st.lists(st.integers(1, 5000), min_size=1, max_size=200)


@settings(max_examples=80, deadline=None)
@given(_lifetimes, st.integers(1, 300), st.integers(0, 5000), st.integers(0, 3000), st.integers(0, 3000))
def test_monotone_in_lease(lifetimes, w, age, d1, d2):
    dist = lifetime_dist_from_lifetimes(lifetimes, w)
    assume(dist.total - int(dist._count_le(age)) > 0)
    a, b = sorted((d1, d2))
    assert conditional_failure_prob(dist, age, a) <= conditional_failure_prob(dist, age, b)


@settings(max_examples=80, deadline=None)
@given(_lifetimes, st.integers(1, 300), st.integers(0, 5000), st.integers(1, 3000))
def test_within_boundary_bin_mass(lifetimes, w, age, dt):
    life = np.asarray(lifetimes)
    survivors = np.count_nonzero(life > age)
    assume(survivors > 0)
    dist = lifetime_dist_from_lifetimes(life, w)
    assume(dist.total - int(dist._count_le(age)) > 0)
    oracle = np.count_nonzero((life > age) & (life <= age + dt)) / survivors
    boundary = sum(np.count_nonzero((life > e // w * w) & (life <= e // w * w + w)) for e in (age, age + dt))
    assert abs(conditional_failure_prob(dist, age, dt) - oracle) <= boundary / survivors + 1e-12
    exact = lifetime_dist_from_lifetimes(life, 1)
    assert conditional_failure_prob(exact, age, dt) == oracle


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), max_size=8), st.floats(0, 0.999))
def test_combined_failure_permutation_and_monotone(rates, extra):
    base = combined_failure(rates)
    for perm in itertools.islice(itertools.permutations(rates), 10):
        assert combined_failure(perm) == pytest.approx(base, abs=1e-15)
    assert combined_failure(rates + [extra]) <= base


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 0.999999), st.floats(1e-6, 0.999999))
def test_min_replicas_contract(f, lam):
    m = min_replicas(f, lam)
    assert combined_failure([f] * m) <= 1 - lam
    assert m == 1 or combined_failure([f] * (m - 1)) > 1 - lam
