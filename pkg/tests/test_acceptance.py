"""End-to-end acceptance criteria, one test per criterion.

Each test prints a single PASS/FAIL line when run with ``-s``; the session
summary lists every criterion's verdict either way.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from trua.anomaly_rrcf import (
    DetectorConfig,
    FailurePoint,
    RrcfForest,
    bin_failures,
    calibrate_threshold,
    detect,
    filter_dataset,
    leaf_multiset,
    score_stream,
    tree_invariant_violations,
)
from trua.kernels import RCTree
from trua.reliability import (
    Unsatisfiable,
    build_lifetime_dist,
    combined_failure,
    conditional_failure_prob,
    min_replicas,
)
from trua.replay_sim import SimConfig, run_simulation
from trua.selection import Status, apply_cap
from trua.trace_model import (
    AnomalyBurst,
    LifetimeComponent,
    SyntheticTraceSpec,
    bimodal_spec,
    generate_synthetic,
    locality_stress_spec,
)
from trua.valley_builder import Valley, ValleyTable, compute_failure_curves, determine_valleys, parse_table, serialize_table

pytestmark = pytest.mark.acceptance


def _verdict(n: int, ok: bool, detail: str, elapsed: float) -> None:
    print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'} ({elapsed:.2f} s) {detail}")


def _sign_test_p(wins: int, losses: int) -> float:
    """One-sided P(X >= wins) for X ~ Binomial(wins + losses, 1/2); ties dropped."""
    n = wins + losses
    return sum(math.comb(n, k) for k in range(wins, n + 1)) / 2**n


def test_criterion_01_conditional_failure_oracle():
    t = time.perf_counter()
    ds = generate_synthetic(bimodal_spec(10_000, seed=11))
    lifetimes = ds.lifetimes
    rng = np.random.default_rng(20_240_601)
    pairs = [(int(rng.integers(0, 130_000)), int(rng.integers(1, 40_000))) for _ in range(100)]
    pairs = [(t0, dt) for t0, dt in pairs if (lifetimes > t0).any()]
    assert len(pairs) == 100

    def oracle(t0, dt):
        alive = lifetimes > t0
        return np.count_nonzero(alive & (lifetimes <= t0 + dt)) / np.count_nonzero(alive)

    worst = 0.0
    for width in (60, 600, 3600):
        dist = build_lifetime_dist(ds, width)
        for t0, dt in pairs:
            survivors = np.count_nonzero(lifetimes > t0)
            boundary = 0
            for edge in (t0, t0 + dt):
                lo = (edge // width) * width
                boundary += np.count_nonzero((lifetimes > lo) & (lifetimes <= lo + width))
            gap = abs(conditional_failure_prob(dist, t0, dt) - oracle(t0, dt))
            assert gap <= boundary / survivors + 1e-12, (width, t0, dt)
            worst = max(worst, gap)

    exact = build_lifetime_dist(ds, 1)
    for t0, dt in pairs:
        assert conditional_failure_prob(exact, t0, dt) == oracle(t0, dt)
    elapsed = time.perf_counter() - t
    assert elapsed < 5.0
    _verdict(1, True, f"worst binned gap {worst:.4f}; bin_width 1 exact on 100 pairs", elapsed)


def test_criterion_02_replica_count_contracts():
    t = time.perf_counter()
    rng = np.random.default_rng(4)
    for _ in range(1000):
        f = float(rng.uniform(1e-6, 1 - 1e-6))
        lam = float(rng.uniform(1e-6, 1 - 1e-6))
        m = min_replicas(f, lam)
        assert m >= 1
        assert combined_failure([f] * m) <= 1 - lam
        assert m == 1 or combined_failure([f] * (m - 1)) > 1 - lam
    assert min_replicas(0.0, 0.99) == 1
    with pytest.raises(Unsatisfiable):
        min_replicas(1.0, 0.9)
    elapsed = time.perf_counter() - t
    assert elapsed < 1.0
    _verdict(2, True, "1000 random (f, availability) pairs", elapsed)


def test_criterion_03_target_availability():
    t = time.perf_counter()
    per_cell: dict[tuple, list[float]] = {}
    for seed in range(10):
        ds = generate_synthetic(bimodal_spec(30 * 24 * 60, seed=seed, arrival_rate=30))
        config = SimConfig(algorithms=("Valley", "Spread"), seed=seed, record_tasks=False)
        report = run_simulation(config, ds, threads=3)
        for c in report.cells:
            assert c.attempted == c.successes + c.failures + c.held
            per_cell.setdefault((c.availability, c.lease, c.algorithm), []).append(c.observed_failure_rate)
    assert len(per_cell) == 18
    misses = {
        key: float(np.mean(rates))
        for key, rates in per_cell.items()
        if np.mean(rates) > (1 - key[0]) + 0.02
    }
    elapsed = time.perf_counter() - t
    worst = max(np.mean(r) - (1 - k[0]) for k, r in per_cell.items())
    ok = not misses and elapsed < 120
    _verdict(3, ok, f"worst mean excess over 1-availability {worst:+.4f}", elapsed)
    assert not misses, misses
    assert elapsed < 120


def test_criterion_04_spread_beats_valley_under_locality():
    t = time.perf_counter()
    valley, spread = [], []
    for seed in range(30):
        ds = generate_synthetic(locality_stress_spec(40 * 24 * 10, seed=seed))
        config = SimConfig(
            availabilities=(0.95,), leases=(14400,), algorithms=("Valley", "Spread"),
            cadence=600, seed=seed, record_tasks=False,
        )
        report = run_simulation(config, ds)
        valley.append(report.cell(0.95, 14400, "Valley").observed_failure_rate)
        spread.append(report.cell(0.95, 14400, "Spread").observed_failure_rate)
    valley, spread = np.array(valley), np.array(spread)
    wins, losses = int((spread < valley).sum()), int((spread > valley).sum())
    p = _sign_test_p(wins, losses)
    elapsed = time.perf_counter() - t
    ok = spread.mean() <= valley.mean() and p < 0.05 and elapsed < 180
    _verdict(4, ok, f"mean Valley {valley.mean():.4f} Spread {spread.mean():.4f}; "
                    f"{wins} wins / {losses} losses, p={p:.2e}", elapsed)
    assert spread.mean() <= valley.mean()
    assert p < 0.05
    assert elapsed < 180


def test_criterion_05_sorted_uses_fewest_replicas():
    t = time.perf_counter()
    ds = generate_synthetic(locality_stress_spec(40 * 24 * 10, seed=5))
    config = SimConfig(algorithms=("Random", "Sorted"), cadence=1200, seed=5)
    report = run_simulation(config, ds)
    by_key: dict[tuple, dict[str, int]] = {}
    for task in report.tasks:
        if task.status is Status.SELECTED:
            by_key.setdefault((task.sample, task.availability, task.lease), {})[task.algorithm] = task.replicas
    compared = [v for v in by_key.values() if len(v) == 2]
    violations = [v for v in compared if v["Sorted"] > v["Random"]]
    strict = sum(v["Sorted"] < v["Random"] for v in compared)
    elapsed = time.perf_counter() - t
    ok = not violations and len(compared) > 1000 and elapsed < 60
    _verdict(5, ok, f"{len(compared)} paired tasks, {strict} strictly fewer, {len(violations)} violations", elapsed)
    assert len(compared) > 1000
    assert not violations
    assert elapsed < 60


def test_criterion_06_anomaly_excision():
    t = time.perf_counter()
    bin_width = 3600
    burst_at = 15 * 86400 + 1800
    burst_lifetime = 20 * 3600 + 1800
    spec = bimodal_spec(30 * 24 * 60, seed=2)
    clean = generate_synthetic(spec)
    dirty = generate_synthetic(replace(spec, anomaly_bursts=(AnomalyBurst(burst_at, 500, burst_lifetime),)))

    config = DetectorConfig(bin_width_s=bin_width, seed=2)
    clean_stream = bin_failures(clean, config.classes, bin_width)
    dirty_stream = bin_failures(dirty, config.classes, bin_width)
    assert len(clean_stream) <= 1000
    config = replace(config, threshold=calibrate_threshold(score_stream(clean_stream, config), 99.9))

    assert len(detect(clean_stream, config)) == 0
    schedule = detect(dirty_stream, config)
    burst_bin = (burst_at // bin_width) * bin_width
    assert any(start <= burst_bin and burst_bin + bin_width <= end for start, end in schedule.windows)

    lifetime_bin = math.ceil(burst_lifetime / bin_width) - 1

    def share(ds):
        dist = build_lifetime_dist(ds, bin_width)
        return dist.counts[lifetime_bin] / dist.total

    baseline, before, after = share(clean), share(dirty), share(filter_dataset(dirty, schedule))
    elapsed = time.perf_counter() - t
    ok = before > 2 * baseline and after <= 2 * baseline and elapsed < 30
    _verdict(6, ok, f"{len(schedule)} window(s); burst-bin share {before:.4f} -> {after:.4f} "
                    f"(baseline {baseline:.4f})", elapsed)
    assert before > 2 * baseline  # the burst is visible before filtering
    assert after <= 2 * baseline
    assert elapsed < 30


def test_criterion_07_uniform_valley_matches_analytic_boundary():
    t = time.perf_counter()
    lease, availability, width = 100, 0.90, 50
    spec = SyntheticTraceSpec(
        count=2 * 86400,
        mixture=(LifetimeComponent(1.0, "uniform", 0.0, 2000.0),),
        arrival_rate=3600,
        seed=3,
        retire_time=3000,
        kill_time=4000,
    )
    ds = generate_synthetic(spec)
    assert ds.lifetimes.max() <= 2000
    curves = compute_failure_curves(ds, lease, [1], interval_width=width, cadence=37, reps=10, seed=3)
    table = determine_valleys(curves, availability)
    # survival over the lease is (2000 - t0 - lease) / (2000 - t0) >= availability
    boundary = 2000 - lease / (1 - availability)
    v1 = table.valleys[0]
    elapsed = time.perf_counter() - t
    ok = v1.redundancy == 1 and abs(v1.age_hi - boundary) <= width and elapsed < 30
    _verdict(7, ok, f"r=1 valley ({v1.age_lo}, {v1.age_hi}] vs analytic boundary {boundary:.0f}", elapsed)
    assert v1.redundancy == 1 and v1.age_lo == 0
    assert abs(v1.age_hi - boundary) <= width
    assert elapsed < 30


def test_criterion_08_redundancy_cap_holds_tasks():
    t = time.perf_counter()
    ds = generate_synthetic(locality_stress_spec(40 * 24 * 10, seed=3))
    base = SimConfig(
        availabilities=(0.95, 0.99), leases=(14400, 25200), algorithms=("Valley", "Spread"),
        cadence=1200, seed=1,
    )
    uncapped = run_simulation(base, ds)
    tables = uncapped.tables
    # the only in-cap valley covers ages no pilot reaches before the kill time
    engineered = ValleyTable(0.99, 3600, (Valley(3, 150000, 160000), Valley(8, 0, 120000)))
    lines = []
    for cap in (4, 5, 6):
        report = run_simulation(replace(base, redundancy_cap=cap), ds, tables=tables)
        for c in report.cells:
            assert c.attempted == c.successes + c.failures + c.held
        over = [k for k in report.tasks if k.status is Status.SELECTED and k.replicas > cap]
        assert not over
        held = sum(c.held for c in report.cells)

        forced = run_simulation(
            replace(base, availabilities=(0.99,), leases=(3600,), redundancy_cap=cap),
            ds, tables={(0.99, 3600): engineered},
        )
        forced_cells = forced.cells
        for c in forced_cells:
            assert c.attempted == c.successes + c.failures + c.held
            assert c.held == c.attempted > 0
        assert all(k.status is Status.HELD for k in forced.tasks)
        lines.append(f"cap {cap}: max r {max(k.replicas for k in report.tasks)}, held {held}")
        assert held > 0
    assert apply_cap(engineered, 6).valleys == (Valley(3, 150000, 160000),)
    elapsed = time.perf_counter() - t
    _verdict(8, elapsed < 60, "; ".join(lines), elapsed)
    assert elapsed < 60


def test_criterion_09_table1_golden_fixtures(fixtures_dir):
    t = time.perf_counter()
    for name, rs in (("table1_095_240.json", [1, 2, 3, 4]), ("table1_099_420.json", [4, 6, 8, 9, 10, 12])):
        text = (fixtures_dir / name).read_text()
        table = parse_table(text)
        assert [v.redundancy for v in table.valleys] == rs
        assert serialize_table(table) + "\n" == text
        assert parse_table(serialize_table(table)) == table
        assert table.is_nested()
    capped = apply_cap(parse_table((fixtures_dir / "table1_099_420.json").read_text()), 6)
    assert [v.redundancy for v in capped.valleys] == [4, 6]
    elapsed = time.perf_counter() - t
    _verdict(9, elapsed < 1.0, "both rows byte-stable and nested; cap 6 keeps r in {4, 6}", elapsed)
    assert elapsed < 1.0


def test_criterion_10_rrcf_structure():
    t = time.perf_counter()
    rng = np.random.default_rng(10)

    # 10 000 random inserts and forgets on a small forest
    forest = RrcfForest(num_trees=6, window_size=64, shingle_size=3, seed=10)
    for op in range(10_000):
        if len(forest) and rng.random() < 0.3:
            forest.forget_oldest()
        else:
            point = rng.integers(0, 6, size=3) if rng.random() < 0.5 else rng.normal(0, 5, size=3)
            score = forest.insert_point(point)
            assert score >= 0 and math.isfinite(score)
        if op % 250 == 0 or op == 9_999:
            for tree in forest.trees:
                assert tree_invariant_violations(tree) == []
                assert len(tree) <= 64

    # insert then forget restores the leaf multiset
    tree = RCTree(2, 128, 99)
    for i in range(100):
        tree.insert(i, [float(v) for v in rng.integers(0, 4, size=2)])
    for j in range(500):
        before = leaf_multiset(tree)
        point = [float(v) for v in (rng.integers(0, 4, size=2) if j % 2 else rng.normal(0, 3, size=2))]
        tree.insert(1000 + j, point)
        tree.forget(1000 + j)
        assert leaf_multiset(tree) == before
        assert tree_invariant_violations(tree) == []

    # outlier ranking on a constant stream, 30 seeds
    counts = [10] * 600
    counts[450] = 10_000
    stream = [FailurePoint(i * 300, c) for i, c in enumerate(counts)]
    ranked = 0
    for seed in range(30):
        scores = score_stream(stream, DetectorConfig(seed=seed))
        touched = np.zeros(len(counts), dtype=bool)
        touched[450:454] = True  # shingles of size 4 that contain the outlier
        if scores[450] > scores[~touched].max():
            ranked += 1
    elapsed = time.perf_counter() - t
    ok = ranked == 30 and elapsed < 30
    _verdict(10, ok, f"invariants held; outlier ranked first on {ranked}/30 seeds", elapsed)
    assert ranked == 30
    assert elapsed < 30
