"""Empirical failure-rate curves per redundancy level and availability valleys."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from trua.kernels import derive_seed, failure_trials
from trua.trace_model import TraceDataset

DEFAULT_INTERVAL_WIDTH = 200 * 60
DEFAULT_CADENCE = 100 * 60
DEFAULT_REPS = 10


class ValleyTableError(ValueError):
    pass


@dataclass(frozen=True)
class CurvePoint:
    lo: int
    hi: int
    failure_rate: float | None  # None: no sample time had enough pilots
    trials: int = 0


@dataclass(frozen=True)
class FailureRateCurve:
    lease: int
    redundancy: int
    interval_width: int
    points: tuple[CurvePoint, ...]

    def rates(self) -> np.ndarray:
        return np.array([np.nan if p.failure_rate is None else p.failure_rate for p in self.points])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# lease_s={self.lease} r={self.redundancy} interval_s={self.interval_width}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("age_lo_s", "age_hi_s", "failure_rate", "trials"))
        for p in self.points:
            w.writerow((p.lo, p.hi, "" if p.failure_rate is None else repr(p.failure_rate), p.trials))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "FailureRateCurve":
        meta: dict[str, int] = {}
        rows = []
        for line in text.splitlines():
            if not line.strip():
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    key, _, val = tok.partition("=")
                    meta[key] = int(val)
                continue
            rows.append(line)
        reader = csv.reader(rows)
        header = next(reader, None)
        if header != ["age_lo_s", "age_hi_s", "failure_rate", "trials"]:
            raise ValueError("curve CSV lacks the age_lo_s,age_hi_s,failure_rate,trials header")
        missing = {"lease_s", "r", "interval_s"} - set(meta)
        if missing:
            raise ValueError(f"curve CSV metadata missing {sorted(missing)}")
        points = []
        for row in reader:
            if len(row) != 4:
                raise ValueError(f"malformed curve row {row!r}")
            lo, hi, rate, trials = row
            points.append(CurvePoint(int(lo), int(hi), float(rate) if rate else None, int(trials)))
        return cls(meta["lease_s"], meta["r"], meta["interval_s"], tuple(points))


def curves_to_csv(curves: Iterable[FailureRateCurve]) -> str:
    """Concatenate several curves; each section starts with its metadata line."""
    return "".join(c.to_csv() for c in sorted(curves, key=lambda c: (c.lease, c.redundancy)))


def curves_from_csv(text: str) -> list[FailureRateCurve]:
    sections: list[list[str]] = []
    for line in text.splitlines():
        if line.startswith("# lease_s="):
            sections.append([])
        if not sections:
            if line.strip():
                raise ValueError("curve CSV must start with a '# lease_s=... r=... interval_s=...' line")
            continue
        sections[-1].append(line)
    return [FailureRateCurve.from_csv("\n".join(s)) for s in sections]


def sample_times(dataset: TraceDataset, cadence: int, start: int | None = None, stop: int | None = None) -> np.ndarray:
    first, last = dataset.span
    start = first if start is None else start
    stop = last if stop is None else stop
    if stop <= start:
        return np.empty(0, dtype=np.int64)
    return np.arange(start, stop, cadence, dtype=np.int64)


def compute_failure_curves(
    dataset: TraceDataset,
    lease: int,
    redundancies: Sequence[int],
    interval_width: int = DEFAULT_INTERVAL_WIDTH,
    cadence: int = DEFAULT_CADENCE,
    reps: int = DEFAULT_REPS,
    seed: int = 0,
    max_age: int | None = None,
) -> dict[int, FailureRateCurve]:
    """Measure the all-replicas-fail rate per age interval for several redundancies.

    At every sample time, the pilots alive with age in an interval form the
    candidate set; ``reps`` times, ``r`` distinct candidates are drawn and the
    trial fails if all of them end before the lease expires.  Each
    ``(interval, r)`` pair draws from its own seeded stream, so a curve does
    not depend on which other redundancies were computed alongside it.
    """
    if not len(dataset):
        raise ValueError("cannot compute a failure curve from an empty dataset")
    if lease <= 0 or interval_width <= 0 or cadence <= 0 or reps < 1:
        raise ValueError("lease, interval_width and cadence must be positive; reps >= 1")
    rs = np.asarray(sorted(set(int(r) for r in redundancies)), dtype=np.int64)
    if rs.size == 0 or rs[0] < 1:
        raise ValueError("redundancies must be positive integers")
    if max_age is None:
        max_age = int(dataset.lifetimes.max())
    n_intervals = max(1, math.ceil(max_age / interval_width))
    times = sample_times(dataset, cadence)
    starts, ends = dataset.starts, dataset.ends
    points: dict[int, list[CurvePoint]] = {int(r): [] for r in rs}
    for i in range(n_intervals):
        lo, hi = i * interval_width, (i + 1) * interval_width
        seeds = [derive_seed(seed, lease, i, int(r)) for r in rs]
        failed, trials = failure_trials(starts, ends, times, lo, hi, lease, rs, seeds, reps)
        for r, f, n in zip(rs, failed, trials):
            rate = float(f) / float(n) if n else None
            points[int(r)].append(CurvePoint(lo, hi, rate, int(n)))
    return {r: FailureRateCurve(int(lease), r, int(interval_width), tuple(pts)) for r, pts in points.items()}


def compute_failure_curve(
    dataset: TraceDataset,
    lease: int,
    redundancy: int,
    interval_width: int = DEFAULT_INTERVAL_WIDTH,
    cadence: int = DEFAULT_CADENCE,
    reps: int = DEFAULT_REPS,
    seed: int = 0,
    max_age: int | None = None,
) -> FailureRateCurve:
    curves = compute_failure_curves(dataset, lease, [redundancy], interval_width, cadence, reps, seed, max_age)
    return curves[int(redundancy)]


@dataclass(frozen=True)
class Valley:
    redundancy: int
    age_lo: int
    age_hi: int
    widened: bool = False

    def __post_init__(self):
        if self.redundancy < 1:
            raise ValueError("valley redundancy must be positive")
        if not self.age_lo < self.age_hi:
            raise ValueError(f"empty valley ({self.age_lo}, {self.age_hi}]")

    def contains(self, age):
        return (age > self.age_lo) & (age <= self.age_hi)


@dataclass(frozen=True)
class ValleyTable:
    """Valleys for one ``(availability, lease)`` pair, most reliable first.

    ``cap`` is set once a redundancy cap has been applied; selectors then
    report an unmet request as held rather than unsolvable.
    """

    availability: float | None = None
    lease: int | None = None
    valleys: tuple[Valley, ...] = ()
    cap: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "valleys", tuple(sorted(self.valleys, key=lambda v: v.redundancy)))
        rs = [v.redundancy for v in self.valleys]
        if len(set(rs)) != len(rs):
            raise ValueError("duplicate redundancy level in valley table")

    def __len__(self) -> int:
        return len(self.valleys)

    def is_nested(self) -> bool:
        return all(
            b.age_lo <= a.age_lo and a.age_hi <= b.age_hi
            for a, b in zip(self.valleys, self.valleys[1:])
        )

    def selectable(self, ages: np.ndarray) -> np.ndarray:
        ages = np.asarray(ages)
        mask = np.zeros(ages.shape, dtype=bool)
        for v in self.valleys:
            mask |= v.contains(ages)
        return mask


def _runs_below(rates: np.ndarray, limit: float) -> list[tuple[int, int]]:
    ok = ~np.isnan(rates) & (rates <= limit)
    runs, start = [], None
    for i, good in enumerate(ok):
        if good and start is None:
            start = i
        elif not good and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(ok) - 1))
    return runs


def determine_valleys(
    curves: Iterable[FailureRateCurve] | dict[int, FailureRateCurve],
    availability: float,
    retire_time: int | None = None,
) -> ValleyTable:
    """Cut each redundancy curve at ``1 - availability``.

    A valley is the longest run of defined intervals at or under the limit
    (earliest on ties).  Valleys are then widened to contain every smaller
    redundancy's valley, and construction stops once a valley spans from age 0
    to ``min(retire_time, largest measured age)``.
    """
    if not 0.0 < availability < 1.0:
        raise ValueError("availability must lie in (0, 1)")
    if isinstance(curves, dict):
        curves = curves.values()
    curves = sorted(curves, key=lambda c: c.redundancy)
    if not curves:
        return ValleyTable(availability, None, ())
    lease = curves[0].lease
    grid = [(p.lo, p.hi) for p in curves[0].points]
    for c in curves:
        if c.lease != lease or [(p.lo, p.hi) for p in c.points] != grid:
            raise ValueError("curves must share lease and interval grid")

    limit = 1.0 - availability
    defined_his = [p.hi for c in curves for p in c.points if p.failure_rate is not None]
    cover = max(defined_his) if defined_his else 0
    if retire_time is not None:
        cover = min(cover, retire_time)

    valleys: list[Valley] = []
    for c in curves:
        runs = _runs_below(c.rates(), limit)
        if not runs:
            continue
        a, b = max(runs, key=lambda ab: (ab[1] - ab[0], -ab[0]))
        lo, hi = c.points[a].lo, c.points[b].hi
        widened = False
        if valleys:
            prev = valleys[-1]
            if prev.age_lo < lo or prev.age_hi > hi:
                lo, hi = min(lo, prev.age_lo), max(hi, prev.age_hi)
                widened = True
        valleys.append(Valley(c.redundancy, lo, hi, widened))
        if lo <= 0 and hi >= cover:
            break
    return ValleyTable(availability, lease, tuple(valleys))


# -- JSON ------------------------------------------------------------------


def serialize_table(table: ValleyTable) -> str:
    doc: dict = {}
    if table.availability is not None:
        doc["availability"] = table.availability
    if table.lease is not None:
        doc["lease_s"] = table.lease
    if table.cap is not None:
        doc["cap"] = table.cap
    doc["valleys"] = [
        {"r": v.redundancy, "lo_s": v.age_lo, "hi_s": v.age_hi, "widened": v.widened} for v in table.valleys
    ]
    return json.dumps(doc, separators=(",", ":"))


def parse_table(text: str) -> ValleyTable:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValleyTableError(f"valley table is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("valleys"), list):
        raise ValleyTableError("valley table must be an object with a 'valleys' list")
    try:
        valleys = tuple(
            Valley(int(v["r"]), int(v["lo_s"]), int(v["hi_s"]), bool(v.get("widened", False)))
            for v in doc["valleys"]
        )
        availability = doc.get("availability")
        lease = doc.get("lease_s")
        cap = doc.get("cap")
        return ValleyTable(
            None if availability is None else float(availability),
            None if lease is None else int(lease),
            valleys,
            None if cap is None else int(cap),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValleyTableError(f"malformed valley entry: {exc}") from None
