"""Trace-replay evaluation of the selection algorithms.

The test span is sampled on a fixed cadence.  At each sample time every
``(availability, lease, algorithm)`` cell issues one task against the pool of
pilots alive at that moment; the outcome is read straight off the trace.
"""

from __future__ import annotations

import csv
import io
import json
from bisect import bisect_right
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from trua.anomaly_rrcf import DetectorConfig, HaltSchedule, bin_failures, detect, filter_dataset
from trua.reliability import build_lifetime_dist
from trua.selection import (
    PilotCandidate,
    Status,
    apply_cap,
    attach_failure_rates,
    select_random,
    select_sorted,
    select_spread,
    select_valley,
)
from trua.trace_model import TraceDataset
from trua.valley_builder import (
    DEFAULT_CADENCE,
    DEFAULT_INTERVAL_WIDTH,
    DEFAULT_REPS,
    ValleyTable,
    compute_failure_curves,
    determine_valleys,
)

ALGORITHMS = ("Random", "Sorted", "Valley", "Spread")
CSV_COLUMNS = (
    "availability", "lease_s", "algorithm", "attempted", "held",
    "failure_rate", "mean_redundancy", "utilization",
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    availabilities: tuple[float, ...] = (0.90, 0.95, 0.99)
    leases: tuple[int, ...] = (3600, 14400, 25200)
    algorithms: tuple[str, ...] = ALGORITHMS
    cadence: int = 6000
    train_fraction: float = 0.75
    redundancy_cap: int | None = None
    anomaly: DetectorConfig | None = None
    seed: int = 0
    dist_bin_width: int = 60
    interval_width: int = DEFAULT_INTERVAL_WIDTH
    curve_cadence: int = DEFAULT_CADENCE
    reps: int = DEFAULT_REPS
    max_redundancy: int = 12
    record_tasks: bool = True
    # file inputs, used by the CLI
    trace: str | None = None
    train_trace: str | None = None
    test_trace: str | None = None
    valley_tables: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "availabilities", tuple(float(a) for a in self.availabilities))
        object.__setattr__(self, "leases", tuple(int(x) for x in self.leases))
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        object.__setattr__(self, "valley_tables", tuple(self.valley_tables))
        if not all(0.0 < a < 1.0 for a in self.availabilities):
            raise ConfigError("availabilities must lie in (0, 1)")
        if not all(x > 0 for x in self.leases):
            raise ConfigError("leases must be positive")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ConfigError(f"unknown algorithms {sorted(unknown)}")
        if self.cadence <= 0:
            raise ConfigError("cadence must be positive")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.redundancy_cap is not None and self.redundancy_cap < 1:
            raise ConfigError("redundancy_cap must be positive")

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SimConfig":
        doc = dict(doc)
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if doc.get("anomaly") is not None:
            doc["anomaly"] = DetectorConfig.from_dict(doc["anomaly"])
        for key in ("availabilities", "leases", "algorithms", "valley_tables"):
            if key in doc:
                doc[key] = tuple(doc[key])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["anomaly"] = None if self.anomaly is None else self.anomaly.to_dict()
        for key in ("availabilities", "leases", "algorithms", "valley_tables"):
            doc[key] = list(doc[key])
        return doc


@dataclass
class CellReport:
    availability: float
    lease: int
    algorithm: str
    attempted: int = 0
    held: int = 0
    successes: int = 0
    failures: int = 0
    replicas: int = 0
    selectable_pilots: int = 0
    pooled_pilots: int = 0
    sample_utilization_sum: float = 0.0
    sample_utilization_n: int = 0

    @property
    def selected(self) -> int:
        return self.successes + self.failures

    @property
    def observed_failure_rate(self) -> float:
        return self.failures / self.selected if self.selected else 0.0

    @property
    def mean_redundancy(self) -> float:
        return self.replicas / self.selected if self.selected else 0.0

    @property
    def utilization(self) -> float:
        """Distinct pilots ever selectable over distinct pilots ever pooled."""
        return self.selectable_pilots / self.pooled_pilots if self.pooled_pilots else 0.0

    @property
    def mean_sample_utilization(self) -> float:
        n = self.sample_utilization_n
        return self.sample_utilization_sum / n if n else 0.0

    def to_dict(self) -> dict:
        return {
            "availability": self.availability,
            "lease_s": self.lease,
            "algorithm": self.algorithm,
            "attempted": self.attempted,
            "held": self.held,
            "successes": self.successes,
            "failures": self.failures,
            "failure_rate": self.observed_failure_rate,
            "mean_redundancy": self.mean_redundancy,
            "utilization": self.utilization,
            "mean_sample_utilization": self.mean_sample_utilization,
        }


@dataclass(frozen=True)
class TaskRecord:
    sample: int
    time: int
    availability: float
    lease: int
    algorithm: str
    status: Status
    replicas: int
    success: bool | None


@dataclass
class SimReport:
    cells: list[CellReport]
    halt_windows: tuple[tuple[int, int], ...] = ()
    samples: int = 0
    halted_samples: int = 0
    tables: dict = field(default_factory=dict)
    tasks: list[TaskRecord] = field(default_factory=list)

    def cell(self, availability: float, lease: int, algorithm: str) -> CellReport:
        for c in self.cells:
            if c.availability == availability and c.lease == lease and c.algorithm == algorithm:
                return c
        raise KeyError((availability, lease, algorithm))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for c in self.cells:
            w.writerow((
                repr(c.availability), c.lease, c.algorithm, c.attempted, c.held,
                repr(c.observed_failure_rate), repr(c.mean_redundancy), repr(c.utilization),
            ))
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "samples": self.samples,
            "halted_samples": self.halted_samples,
            "halt_windows": [list(w) for w in self.halt_windows],
            "utilization_definitions": {
                "utilization": "distinct selectable pilots / distinct pooled pilots",
                "mean_sample_utilization": "mean over sample times of selectable / pooled",
            },
            "cells": [c.to_dict() for c in self.cells],
        }
        return json.dumps(doc, indent=2)


def enumerate_pool(dataset: TraceDataset, t: int) -> list[PilotCandidate]:
    """Pilots alive at ``t`` (``start <= t < end``) with their ages."""
    hi = bisect_right(dataset.starts, t)
    alive = np.flatnonzero(dataset.ends[:hi] > t)
    ids, starts = dataset.pilot_ids, dataset.starts
    return [PilotCandidate(ids[i], int(starts[i]), int(t - starts[i])) for i in alive]


def task_outcome(ends: TraceDataset | Mapping[str, int], pilots: Sequence[str], t0: int, lease: int) -> bool:
    """True when at least one replica's pilot is still alive at ``t0 + lease``."""
    if isinstance(ends, TraceDataset):
        ends = {r.pilot_id: r.end_time for r in ends.records}
    deadline = t0 + lease
    return any(ends[p] >= deadline for p in pilots)


def split_dataset(dataset: TraceDataset, train_fraction: float) -> tuple[TraceDataset, int, int]:
    """Time split: training keeps pilots finished before the split time.

    Returns ``(train, test_start, test_stop)``; the test span runs from the
    split time to the last pilot start.
    """
    if not len(dataset):
        raise ConfigError("cannot split an empty dataset")
    first, last = int(dataset.starts[0]), int(dataset.starts[-1])
    split = first + int(round(train_fraction * (last - first)))
    train = dataset.replace_records(r for r in dataset.records if r.end_time <= split)
    return train, split, last


def build_tables(
    train: TraceDataset,
    availabilities: Sequence[float],
    leases: Sequence[int],
    *,
    max_redundancy: int = 12,
    interval_width: int = DEFAULT_INTERVAL_WIDTH,
    cadence: int = DEFAULT_CADENCE,
    reps: int = DEFAULT_REPS,
    seed: int = 0,
    threads: int = 1,
) -> dict[tuple[float, int], ValleyTable]:
    """Valley tables for every ``(availability, lease)`` pair from training data."""
    rs = range(1, max_redundancy + 1)

    def one_lease(lease):
        return lease, compute_failure_curves(train, lease, rs, interval_width, cadence, reps, seed)

    if threads > 1 and len(leases) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            curves_by_lease = dict(pool.map(one_lease, leases))
    else:
        curves_by_lease = dict(one_lease(lease) for lease in leases)
    return {
        (a, lease): determine_valleys(curves_by_lease[lease], a, train.retire_time)
        for lease in leases
        for a in availabilities
    }


def run_simulation(
    config: SimConfig,
    dataset: TraceDataset | None = None,
    *,
    train: TraceDataset | None = None,
    test: TraceDataset | None = None,
    tables: Mapping[tuple[float, int], ValleyTable] | None = None,
    threads: int = 1,
) -> SimReport:
    """Replay the test span and aggregate failure rate, redundancy and utilization.

    Pass either a single ``dataset`` (split by ``config.train_fraction``) or
    explicit ``train`` and ``test`` datasets.  Valley tables are built from
    the training data unless supplied.
    """
    if dataset is not None:
        train, t_start, t_stop = split_dataset(dataset, config.train_fraction)
        test = dataset
    elif train is not None and test is not None:
        if not len(test):
            raise ConfigError("test dataset is empty")
        t_start, t_stop = int(test.starts[0]), int(test.starts[-1])
    else:
        raise ConfigError("provide a dataset or both train and test datasets")

    halts = HaltSchedule()
    if config.anomaly is not None:
        det = config.anomaly
        train_halts = detect(bin_failures(train, det.classes, det.bin_width_s), det)
        train = filter_dataset(train, train_halts)
        halts = detect(bin_failures(test, det.classes, det.bin_width_s), det)

    algos = [a for a in ALGORITHMS if a in config.algorithms]
    needs_tables = any(a in ("Valley", "Spread") for a in algos)
    if needs_tables:
        if tables is None:
            if not len(train):
                raise ConfigError("training dataset is empty")
            tables = build_tables(
                train, config.availabilities, config.leases,
                max_redundancy=config.max_redundancy, interval_width=config.interval_width,
                cadence=config.curve_cadence, reps=config.reps, seed=config.seed, threads=threads,
            )
        tables = dict(tables)
        for a in config.availabilities:
            for lease in config.leases:
                if (a, lease) not in tables:
                    raise ConfigError(f"no valley table for availability {a}, lease {lease}")
                if config.redundancy_cap is not None:
                    tables[(a, lease)] = apply_cap(tables[(a, lease)], config.redundancy_cap)
    dist = None
    if {"Random", "Sorted"} & set(algos):
        if not len(train):
            raise ConfigError("training dataset is empty")
        dist = build_lifetime_dist(train, config.dist_bin_width)

    cells = {
        (a, lease, algo): CellReport(a, lease, algo)
        for a in config.availabilities
        for lease in config.leases
        for algo in algos
    }
    selectable_ids = {key: set() for key in cells}
    pooled_ids: set[str] = set()
    ends_by_id = {r.pilot_id: r.end_time for r in test.records}
    tasks: list[TaskRecord] = []

    times = np.arange(t_start, t_stop + 1, config.cadence, dtype=np.int64)
    halted = halts.contains(times) if len(times) else np.zeros(0, dtype=bool)
    samples = 0
    for si, t in enumerate(times):
        if halted[si]:
            continue
        samples += 1
        t = int(t)
        pool = enumerate_pool(test, t)
        pool_ids = [c.pilot_id for c in pool]
        pooled_ids.update(pool_ids)
        ages = np.array([c.age for c in pool], dtype=np.int64)
        rated = {}
        if dist is not None:
            rated = {lease: attach_failure_rates(pool, dist, lease) for lease in config.leases}
        for ci, ((a, lease, algo), cell) in enumerate(cells.items()):
            rng = np.random.default_rng([config.seed, si, ci])
            if algo == "Random":
                res = select_random(rated[lease], a, rng)
                mask = None
            elif algo == "Sorted":
                res = select_sorted(rated[lease], a)
                mask = None
            else:
                table = tables[(a, lease)]
                select = select_valley if algo == "Valley" else select_spread
                res = select(pool, table, rng)
                mask = table.selectable(ages) if len(pool) else np.zeros(0, dtype=bool)
            if mask is None:
                selectable_ids[(a, lease, algo)].update(pool_ids)
                n_sel = len(pool)
            else:
                selectable_ids[(a, lease, algo)].update(p for p, m in zip(pool_ids, mask) if m)
                n_sel = int(mask.sum())
            if pool:
                cell.sample_utilization_sum += n_sel / len(pool)
                cell.sample_utilization_n += 1
            cell.attempted += 1
            success = None
            if res.status is Status.SELECTED:
                success = task_outcome(ends_by_id, res.pilots, t, lease)
                cell.replicas += len(res.pilots)
                if success:
                    cell.successes += 1
                else:
                    cell.failures += 1
            else:
                cell.held += 1
            if config.record_tasks:
                tasks.append(TaskRecord(si, t, a, lease, algo, res.status, len(res.pilots) if res.selected else 0, success))

    for key, cell in cells.items():
        cell.selectable_pilots = len(selectable_ids[key])
        cell.pooled_pilots = len(pooled_ids)
    return SimReport(
        cells=list(cells.values()),
        halt_windows=halts.windows,
        samples=samples,
        halted_samples=int(halted.sum()),
        tables=dict(tables) if needs_tables else {},
        tasks=tasks,
    )
