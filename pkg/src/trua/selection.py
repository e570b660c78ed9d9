"""Pilot selection: Random and Sorted baselines, Valley and Spread, redundancy cap."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from trua.reliability import EmpiricalLifetimeDist, conditional_failure_probs
from trua.valley_builder import ValleyTable


class Status(str, enum.Enum):
    SELECTED = "Selected"
    NO_SOLUTION = "NoSolution"
    HELD = "Held"


@dataclass(frozen=True)
class PilotCandidate:
    pilot_id: str
    start_time: int
    age: int
    failure_rate: float | None = None

    def age_at(self, t0: int) -> int:
        return t0 - self.start_time


@dataclass(frozen=True)
class SelectionResult:
    status: Status
    pilots: tuple[str, ...] = ()
    valley_used: int | None = None
    predicted_failure: float | None = None

    @property
    def selected(self) -> bool:
        return self.status is Status.SELECTED

    def __len__(self) -> int:
        return len(self.pilots)


def candidates_at(pilot_ids, starts, t0: int) -> list[PilotCandidate]:
    return [PilotCandidate(str(p), int(s), int(t0 - s)) for p, s in zip(pilot_ids, starts)]


def attach_failure_rates(pool: Sequence[PilotCandidate], dist: EmpiricalLifetimeDist, lease: int) -> list[PilotCandidate]:
    """Fill each candidate's conditional failure rate; pilots past every
    observed lifetime get 1.0."""
    if not pool:
        return []
    rates = conditional_failure_probs(dist, np.array([c.age for c in pool]), lease)
    rates = np.where(np.isnan(rates), 1.0, rates)
    return [replace(c, failure_rate=float(f)) for c, f in zip(pool, rates)]


def _rate(c: PilotCandidate) -> float:
    return 1.0 if c.failure_rate is None else c.failure_rate


def _accumulate(ordered: Sequence[PilotCandidate], availability: float) -> SelectionResult:
    target = 1.0 - availability
    chosen: list[str] = []
    product = 1.0
    for c in ordered:
        chosen.append(c.pilot_id)
        product *= _rate(c)
        if product <= target:
            return SelectionResult(Status.SELECTED, tuple(chosen), None, product)
    return SelectionResult(Status.NO_SOLUTION, tuple(chosen), None, product if chosen else None)


def select_random(pool: Sequence[PilotCandidate], availability: float, seed=None) -> SelectionResult:
    """Draw candidates in random order until the replicas' joint failure
    probability reaches ``1 - availability``."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pool))
    return _accumulate([pool[i] for i in order], availability)


def select_sorted(pool: Sequence[PilotCandidate], availability: float) -> SelectionResult:
    """Most reliable candidates first; ties go to the older pilot, then by id."""
    ordered = sorted(pool, key=lambda c: (_rate(c), c.start_time, c.pilot_id))
    return _accumulate(ordered, availability)


def spread_select(r: int, pilots: Sequence[PilotCandidate], seed=None) -> tuple[str, ...]:
    """Pick ``r`` pilots spread evenly over the candidates' start-time span.

    The span ``[t_min, t_max]`` is cut into ``r`` equal buckets (the last one
    closed); buckets are visited round-robin and each non-empty bucket yields
    one uniformly drawn pilot until ``r`` are chosen.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    if len(pilots) < r:
        raise ValueError(f"need at least {r} pilots, got {len(pilots)}")
    rng = np.random.default_rng(seed)
    starts = np.array([c.start_time for c in pilots], dtype=np.int64)
    t_min, t_max = int(starts.min()), int(starts.max())
    if t_min == t_max:
        n_buckets = 1
        idx = np.zeros(len(pilots), dtype=np.int64)
    else:
        n_buckets = r
        idx = np.minimum((starts - t_min) * r // (t_max - t_min), r - 1)
    buckets = [list(np.flatnonzero(idx == b)) for b in range(n_buckets)]
    chosen: list[str] = []
    b = 0
    while len(chosen) < r:
        members = buckets[b]
        if members:
            k = int(rng.integers(len(members)))
            chosen.append(pilots[members.pop(k)].pilot_id)
        b = (b + 1) % n_buckets
    return tuple(chosen)


def _select_in_valleys(pool, table: ValleyTable, seed, spread: bool) -> SelectionResult:
    rng = np.random.default_rng(seed)
    ages = np.array([c.age for c in pool], dtype=np.int64)
    for v in table.valleys:
        inside = np.flatnonzero(v.contains(ages)) if len(pool) else []
        if len(inside) >= v.redundancy:
            members = [pool[i] for i in inside]
            if spread:
                picked = spread_select(v.redundancy, members, rng)
            else:
                picked = tuple(members[i].pilot_id for i in rng.choice(len(members), v.redundancy, replace=False))
            return SelectionResult(Status.SELECTED, picked, v.redundancy)
    return SelectionResult(Status.HELD if table.cap is not None else Status.NO_SOLUTION)


def select_valley(pool: Sequence[PilotCandidate], table: ValleyTable, seed=None) -> SelectionResult:
    """Try valleys from the most reliable one; pick ``r`` uniformly inside the
    first valley holding at least ``r`` pilots."""
    return _select_in_valleys(pool, table, seed, spread=False)


def select_spread(pool: Sequence[PilotCandidate], table: ValleyTable, seed=None) -> SelectionResult:
    return _select_in_valleys(pool, table, seed, spread=True)


def apply_cap(table: ValleyTable, cap: int) -> ValleyTable:
    """Drop valleys needing more than ``cap`` replicas; unmet requests are
    then held for later instead of escalating redundancy."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    kept = tuple(v for v in table.valleys if v.redundancy <= cap)
    return replace(table, valleys=kept, cap=cap)
