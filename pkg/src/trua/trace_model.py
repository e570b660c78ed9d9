"""Pilot traces: records, CSV I/O, termination classification and synthesis."""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import re
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_RETIRE_TIME = 38 * 3600
DEFAULT_KILL_TIME = 40 * 3600

CSV_HEADER = ("pilot_id", "site_id", "start_time", "end_time", "termination_class")
_META_RE = re.compile(r"^#\s*retire_time=(\d+)\s+kill_time=(\d+)\s*$")


class TraceError(ValueError):
    """Base class for trace input problems."""


class TraceParseError(TraceError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class TraceValidationError(TraceError):
    pass


class TerminationClass(str, enum.Enum):
    RETIRED = "retired"
    KILLED = "killed"
    PREEMPTED = "preempted"
    NETWORK = "network"
    IDLE = "idle"
    OTHER = "other"


class Expectation(str, enum.Enum):
    EXPECTED = "expected"
    UNEXPECTED = "unexpected"


@dataclass(frozen=True)
class PilotRecord:
    pilot_id: str
    site_id: str
    start_time: int
    end_time: int
    termination_class: TerminationClass

    def __post_init__(self):
        if self.end_time <= self.start_time:
            raise TraceValidationError(
                f"pilot {self.pilot_id}: end_time {self.end_time} <= start_time {self.start_time}"
            )

    @property
    def lifetime(self) -> int:
        return self.end_time - self.start_time


@dataclass(frozen=True)
class TraceDataset:
    """Immutable, start-ordered collection of pilot records."""

    records: tuple[PilotRecord, ...] = ()
    retire_time: int = DEFAULT_RETIRE_TIME
    kill_time: int = DEFAULT_KILL_TIME

    def __post_init__(self):
        if not self.retire_time < self.kill_time:
            raise TraceValidationError(
                f"retire_time {self.retire_time} must be below kill_time {self.kill_time}"
            )
        object.__setattr__(self, "records", tuple(sorted(self.records, key=_record_order)))

    @classmethod
    def from_records(cls, records: Iterable[PilotRecord], **kw) -> "TraceDataset":
        return cls(tuple(records), **kw)

    def replace_records(self, records: Iterable[PilotRecord]) -> "TraceDataset":
        return TraceDataset(tuple(records), self.retire_time, self.kill_time)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    # Column views used by the vectorised consumers.
    @cached_property
    def starts(self) -> np.ndarray:
        return np.fromiter((r.start_time for r in self.records), dtype=np.int64, count=len(self))

    @cached_property
    def ends(self) -> np.ndarray:
        return np.fromiter((r.end_time for r in self.records), dtype=np.int64, count=len(self))

    @cached_property
    def lifetimes(self) -> np.ndarray:
        return self.ends - self.starts

    @cached_property
    def pilot_ids(self) -> np.ndarray:
        return np.array([r.pilot_id for r in self.records], dtype=object)

    @property
    def span(self) -> tuple[int, int]:
        """``(earliest start, latest end)``; ``(0, 0)`` when empty."""
        if not self.records:
            return (0, 0)
        return int(self.starts[0]), int(self.ends.max())


def _record_order(rec: PilotRecord):
    return (rec.start_time, rec.pilot_id)


def classify_expected(record: PilotRecord, retire_time: int = DEFAULT_RETIRE_TIME) -> Expectation:
    """Pilots that reach the retire time terminated by the normal life cycle."""
    if record.lifetime >= retire_time:
        return Expectation.EXPECTED
    return Expectation.UNEXPECTED


# -- CSV -------------------------------------------------------------------


def _parse_int(value: str, column: str, lineno: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise TraceParseError(f"{column} is not an integer: {value!r}", lineno) from None


def parse_trace_text(text: str) -> TraceDataset:
    retire, kill = DEFAULT_RETIRE_TIME, DEFAULT_KILL_TIME
    records = []
    header_seen = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            m = _META_RE.match(stripped)
            if m:
                retire, kill = int(m.group(1)), int(m.group(2))
            continue
        row = next(csv.reader([stripped]))
        if not header_seen:
            if tuple(c.strip() for c in row) != CSV_HEADER:
                raise TraceParseError(f"expected header {','.join(CSV_HEADER)}", lineno)
            header_seen = True
            continue
        if len(row) != len(CSV_HEADER):
            raise TraceParseError(f"expected {len(CSV_HEADER)} fields, got {len(row)}", lineno)
        pilot_id, site_id, start, end, cls = (c.strip() for c in row)
        try:
            term = TerminationClass(cls)
        except ValueError:
            raise TraceParseError(f"unknown termination class {cls!r}", lineno) from None
        records.append(
            PilotRecord(
                pilot_id,
                site_id,
                _parse_int(start, "start_time", lineno),
                _parse_int(end, "end_time", lineno),
                term,
            )
        )
    if not header_seen:
        raise TraceParseError("missing CSV header")
    return TraceDataset(tuple(records), retire, kill)


def parse_trace(path: str | Path) -> TraceDataset:
    """Read a trace CSV.

    Raises :class:`TraceParseError` (with the line number) for malformed rows
    and :class:`TraceValidationError` for records ending before they start.
    """
    return parse_trace_text(Path(path).read_text())


def serialize_trace(dataset: TraceDataset) -> str:
    buf = io.StringIO()
    buf.write(f"# retire_time={dataset.retire_time} kill_time={dataset.kill_time}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in dataset.records:
        writer.writerow((r.pilot_id, r.site_id, r.start_time, r.end_time, r.termination_class.value))
    return buf.getvalue()


def write_trace(dataset: TraceDataset, path: str | Path) -> None:
    Path(path).write_text(serialize_trace(dataset))


# -- synthesis -------------------------------------------------------------


@dataclass(frozen=True)
class LifetimeComponent:
    """One bounded-support lifetime component, in seconds.

    ``johnson_sb``: ``loc + scale / (1 + exp(-(Z - gamma) / delta))`` with Z
    standard normal.  ``uniform``: uniform on ``(loc, loc + scale]``.
    """

    weight: float
    family: str = "johnson_sb"
    loc: float = 0.0
    scale: float = 1.0
    gamma: float = 0.0
    delta: float = 1.0

    def __post_init__(self):
        if self.family not in ("johnson_sb", "uniform"):
            raise ValueError(f"unknown lifetime family {self.family!r}")
        if self.scale <= 0 or self.delta <= 0 or self.weight < 0:
            raise ValueError("scale and delta must be positive, weight non-negative")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.family == "uniform":
            return self.loc + self.scale * (1.0 - rng.random(n))
        z = rng.standard_normal(n)
        return self.loc + self.scale / (1.0 + np.exp(-(z - self.gamma) / self.delta))


@dataclass(frozen=True)
class AnomalyBurst:
    at: int
    extra_failures: int
    burst_lifetime: int
    window: int = 300
    termination_class: TerminationClass = TerminationClass.NETWORK


@dataclass(frozen=True)
class SyntheticTraceSpec:
    count: int
    mixture: tuple[LifetimeComponent, ...]
    arrival_rate: float = 60.0  # pilots per hour, Poisson
    group_size: int = 1
    group_fraction: float = 0.0
    anomaly_bursts: tuple[AnomalyBurst, ...] = ()
    seed: int = 0
    start_epoch: int = 0
    retire_time: int = DEFAULT_RETIRE_TIME
    kill_time: int = DEFAULT_KILL_TIME
    n_sites: int = 8
    unexpected_classes: dict[str, float] = field(
        default_factory=lambda: {"preempted": 0.85, "network": 0.10, "idle": 0.05}
    )

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("count must be non-negative")
        weights = [c.weight for c in self.mixture]
        if self.count and (not weights or not math.isclose(sum(weights), 1.0, abs_tol=1e-9)):
            raise ValueError(f"mixture weights must sum to 1, got {sum(weights)}")
        if not 0.0 <= self.group_fraction <= 1.0:
            raise ValueError("group_fraction must lie in [0, 1]")
        if self.group_size < 1:
            raise ValueError("group_size must be >= 1")
        if self.arrival_rate <= 0:
            raise ValueError("arrival_rate must be positive")
        if not self.retire_time < self.kill_time:
            raise ValueError("retire_time must be below kill_time")
        classes = {TerminationClass(k) for k in self.unexpected_classes}
        if classes & {TerminationClass.RETIRED, TerminationClass.KILLED}:
            raise ValueError("unexpected_classes may not include retired/killed")

    # JSON mirrors the field layout; arrival is nested as in the documented schema.
    def to_json(self) -> str:
        doc = {
            "count": self.count,
            "arrival": {"rate": self.arrival_rate, "process": "poisson"},
            "mixture": [asdict(c) for c in self.mixture],
            "locality_groups": {"group_size": self.group_size, "group_fraction": self.group_fraction},
            "anomaly_bursts": [
                {**asdict(b), "termination_class": b.termination_class.value} for b in self.anomaly_bursts
            ],
            "seed": self.seed,
            "start_epoch": self.start_epoch,
            "retire_time": self.retire_time,
            "kill_time": self.kill_time,
            "n_sites": self.n_sites,
            "unexpected_classes": dict(self.unexpected_classes),
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "SyntheticTraceSpec":
        arrival = doc.get("arrival", {})
        if arrival.get("process", "poisson").lower() != "poisson":
            raise ValueError("only Poisson arrivals are supported")
        groups = doc.get("locality_groups", {})
        kw = dict(
            count=int(doc["count"]),
            mixture=tuple(LifetimeComponent(**c) for c in doc["mixture"]),
            arrival_rate=float(arrival.get("rate", 60.0)),
            group_size=int(groups.get("group_size", 1)),
            group_fraction=float(groups.get("group_fraction", 0.0)),
            anomaly_bursts=tuple(
                AnomalyBurst(**{**b, "termination_class": TerminationClass(b.get("termination_class", "network"))})
                for b in doc.get("anomaly_bursts", [])
            ),
            seed=int(doc.get("seed", 0)),
        )
        for key in ("start_epoch", "retire_time", "kill_time", "n_sites"):
            if key in doc:
                kw[key] = int(doc[key])
        if "unexpected_classes" in doc:
            kw["unexpected_classes"] = {str(k): float(v) for k, v in doc["unexpected_classes"].items()}
        return cls(**kw)

    @classmethod
    def from_json(cls, text: str) -> "SyntheticTraceSpec":
        return cls.from_dict(json.loads(text))


def generate_synthetic(spec: SyntheticTraceSpec) -> TraceDataset:
    """Emulate a pilot trace from a parameterised lifetime mixture.

    Arrival events follow a Poisson process whose mean rate is
    ``spec.arrival_rate`` pilots per hour.  A locality group is a single event
    that creates ``group_size`` pilots sharing one start time and one lifetime.
    """
    rng = np.random.default_rng(spec.seed)
    n_grouped = int(round(spec.count * spec.group_fraction)) if spec.group_size > 1 else 0
    n_groups = n_grouped // spec.group_size
    n_single = spec.count - n_groups * spec.group_size
    sizes = np.concatenate(
        [np.full(n_groups, spec.group_size, dtype=np.int64), np.ones(n_single, dtype=np.int64)]
    )
    rng.shuffle(sizes)

    # Inter-arrival gaps scale with event size so the pilot rate stays fixed.
    gaps = rng.exponential(3600.0 / spec.arrival_rate, size=len(sizes)) * sizes
    event_starts = spec.start_epoch + np.floor(np.cumsum(gaps)).astype(np.int64)

    weights = np.array([c.weight for c in spec.mixture]) if spec.mixture else np.ones(1)
    comp = rng.choice(len(weights), size=len(sizes), p=weights / weights.sum()) if len(sizes) else []
    lifetimes = np.empty(len(sizes), dtype=np.float64)
    for k, c in enumerate(spec.mixture):
        idx = np.flatnonzero(comp == k)
        lifetimes[idx] = c.sample(rng, len(idx))
    lifetimes = np.clip(np.rint(lifetimes), 1, spec.kill_time).astype(np.int64)

    cls_names = list(spec.unexpected_classes)
    cls_p = np.array([spec.unexpected_classes[c] for c in cls_names], dtype=np.float64)
    cls_p = cls_p / cls_p.sum()
    ev_cls = rng.choice(len(cls_names), size=len(sizes), p=cls_p) if len(sizes) else []
    ev_site = rng.integers(0, spec.n_sites, size=len(sizes))

    rows: list[tuple[int, int, TerminationClass, int]] = []
    for e in range(len(sizes)):
        life = int(lifetimes[e])
        start = int(event_starts[e])
        if life >= spec.kill_time:
            term = TerminationClass.KILLED
        elif life >= spec.retire_time:
            term = TerminationClass.RETIRED
        else:
            term = TerminationClass(cls_names[ev_cls[e]])
        for _ in range(int(sizes[e])):
            rows.append((start, start + life, term, int(ev_site[e])))

    for burst in spec.anomaly_bursts:
        offsets = rng.integers(-(burst.window // 2), burst.window // 2 + 1, size=burst.extra_failures)
        sites = rng.integers(0, spec.n_sites, size=burst.extra_failures)
        life = min(int(burst.burst_lifetime), spec.kill_time)
        for off, site in zip(offsets, sites):
            end = int(burst.at + off)
            rows.append((end - life, end, burst.termination_class, int(site)))

    rows.sort(key=lambda r: (r[0], r[1]))
    width = max(7, len(str(len(rows))))
    records = [
        PilotRecord(f"p{i:0{width}d}", f"site{site:02d}", start, end, term)
        for i, (start, end, term, site) in enumerate(rows)
    ]
    return TraceDataset(tuple(records), spec.retire_time, spec.kill_time)


def bimodal_spec(
    count: int,
    *,
    seed: int = 0,
    early_weight: float = 0.45,
    retire_time: int = DEFAULT_RETIRE_TIME,
    kill_time: int = DEFAULT_KILL_TIME,
    arrival_rate: float = 60.0,
    group_size: int = 1,
    group_fraction: float = 0.0,
    anomaly_bursts: Sequence[AnomalyBurst] = (),
) -> SyntheticTraceSpec:
    """Preset two-mode mixture: early preemptions and the retire-to-kill band.

    The early component lives on ``(0, retire_time)`` with its mode near 5%
    of the retire time; the late component lives on ``[retire, kill]``.
    """
    early = LifetimeComponent(
        weight=early_weight, family="johnson_sb", loc=0.0, scale=float(retire_time - 1),
        gamma=1.6, delta=0.9,
    )
    late = LifetimeComponent(
        weight=1.0 - early_weight, family="johnson_sb", loc=float(retire_time),
        scale=float(kill_time - retire_time), gamma=0.0, delta=1.0,
    )
    return SyntheticTraceSpec(
        count=count,
        mixture=(early, late),
        arrival_rate=arrival_rate,
        group_size=group_size,
        group_fraction=group_fraction,
        anomaly_bursts=tuple(anomaly_bursts),
        seed=seed,
        retire_time=retire_time,
        kill_time=kill_time,
    )


def locality_stress_spec(
    count: int,
    *,
    seed: int = 0,
    group_size: int = 20,
    group_fraction: float = 0.5,
    early_weight: float = 0.6,
    arrival_rate: float = 10.0,
    retire_time: int = DEFAULT_RETIRE_TIME,
    kill_time: int = DEFAULT_KILL_TIME,
) -> SyntheticTraceSpec:
    """Trace where single pilots are never reliable enough on their own.

    Early terminations are spread uniformly over ``(0, retire_time)`` so the
    hazard stays high through the stable stage and tasks need several
    replicas; a share of pilots arrive in same-lifetime groups.
    """
    early = LifetimeComponent(weight=early_weight, family="uniform", loc=0.0, scale=float(retire_time - 1))
    late = LifetimeComponent(
        weight=1.0 - early_weight, family="johnson_sb", loc=float(retire_time),
        scale=float(kill_time - retire_time), gamma=0.0, delta=1.0,
    )
    return SyntheticTraceSpec(
        count=count,
        mixture=(early, late),
        arrival_rate=arrival_rate,
        group_size=group_size,
        group_fraction=group_fraction,
        seed=seed,
        retire_time=retire_time,
        kill_time=kill_time,
    )
