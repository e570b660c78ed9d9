"""Empirical lifetime distribution and the replica failure/redundancy formulas."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from trua.trace_model import TraceDataset


class NoSurvivors(ValueError):
    """No observed pilot outlived the queried age."""


class Unsatisfiable(ValueError):
    """A replica with failure rate 1 can never reach the availability target."""


@dataclass(frozen=True)
class TaskRequest:
    availability: float
    lease: int
    redundancy_cap: int | None = None

    def __post_init__(self):
        if not 0.0 < self.availability < 1.0:
            raise ValueError("availability must lie in (0, 1)")
        if self.lease <= 0:
            raise ValueError("lease must be positive")
        if self.redundancy_cap is not None and self.redundancy_cap < 1:
            raise ValueError("redundancy_cap must be a positive integer")


class EmpiricalLifetimeDist:
    """Histogram of pilot lifetimes over half-open bins ``(i*w, (i+1)*w]``.

    Cumulative queries are answered at bin resolution: the number of lifetimes
    ``<= x`` is the count of every bin whose upper edge is ``<= x``.  With
    integer lifetimes and ``bin_width == 1`` this is exact.
    """

    def __init__(self, bin_width: int, counts: Sequence[int]):
        if bin_width <= 0:
            raise ValueError("bin_width must be positive")
        counts = np.asarray(counts, dtype=np.int64)
        if counts.ndim != 1 or (counts < 0).any():
            raise ValueError("counts must be a 1-D vector of non-negative integers")
        self.bin_width = int(bin_width)
        self.counts = counts
        self.counts.flags.writeable = False
        self.total = int(counts.sum())
        # cum[k] = lifetimes in (0, k*w]
        self._cum = np.concatenate([[0], np.cumsum(counts)])

    def __repr__(self) -> str:
        return f"EmpiricalLifetimeDist(bin_width={self.bin_width}, bins={len(self.counts)}, total={self.total})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmpiricalLifetimeDist):
            return NotImplemented
        return self.bin_width == other.bin_width and np.array_equal(self.counts, other.counts)

    def _count_le(self, x):
        k = np.floor_divide(np.asarray(x, dtype=np.float64), self.bin_width).astype(np.int64)
        k = np.clip(k, 0, len(self.counts))
        return self._cum[k]

    def mass(self, a, b):
        """Fraction of lifetimes in ``(a, b]``."""
        if self.total < 1:
            raise ValueError("distribution is empty")
        return (self._count_le(b) - self._count_le(a)) / self.total

    def to_json(self) -> str:
        return json.dumps({"bin_width": self.bin_width, "counts": self.counts.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "EmpiricalLifetimeDist":
        doc = json.loads(text)
        return cls(int(doc["bin_width"]), doc["counts"])


def lifetime_dist_from_lifetimes(lifetimes: Iterable[int], bin_width: int) -> EmpiricalLifetimeDist:
    life = np.asarray(list(lifetimes) if not isinstance(lifetimes, np.ndarray) else lifetimes)
    if life.size == 0:
        raise ValueError("cannot build a lifetime distribution from an empty dataset")
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    if (life <= 0).any():
        raise ValueError("lifetimes must be positive")
    idx = (-(-life // bin_width) - 1).astype(np.int64)  # ceil(L / w) - 1
    counts = np.bincount(idx, minlength=int(idx.max()) + 1)
    return EmpiricalLifetimeDist(bin_width, counts)


def build_lifetime_dist(dataset: TraceDataset, bin_width: int) -> EmpiricalLifetimeDist:
    return lifetime_dist_from_lifetimes(dataset.lifetimes, bin_width)


def conditional_failure_prob(dist: EmpiricalLifetimeDist, age: float, lease: float) -> float:
    """Probability a pilot of age ``age`` terminates within the next ``lease``.

    Ratio of the lifetime mass in ``(age, age + lease]`` to the mass beyond
    ``age``; raises :class:`NoSurvivors` when nothing outlived ``age``.
    """
    if lease < 0:
        raise ValueError("lease must be non-negative")
    survivors = dist.total - int(dist._count_le(age))
    if survivors <= 0:
        raise NoSurvivors(f"no observed lifetime exceeds age {age}")
    failing = int(dist._count_le(age + lease)) - int(dist._count_le(age))
    return failing / survivors


def conditional_failure_probs(dist: EmpiricalLifetimeDist, ages: np.ndarray, lease: float) -> np.ndarray:
    """Vectorised :func:`conditional_failure_prob`; NaN where no pilot survived."""
    ages = np.asarray(ages, dtype=np.float64)
    below = dist._count_le(ages)
    survivors = dist.total - below
    failing = dist._count_le(ages + lease) - below
    out = np.full(ages.shape, np.nan)
    ok = survivors > 0
    out[ok] = failing[ok] / survivors[ok]
    return out


def combined_failure(rates: Iterable[float]) -> float:
    """Probability that every replica fails; 1.0 for no replicas."""
    product = 1.0
    for f in rates:
        if not 0.0 <= f <= 1.0:
            raise ValueError(f"failure rate {f} outside [0, 1]")
        product *= f
    return product


def min_replicas(f: float, availability: float) -> int:
    """Smallest ``m`` with ``f**m <= 1 - availability`` (powers by repeated product)."""
    if not 0.0 < availability < 1.0:
        raise ValueError("availability must lie in (0, 1)")
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"failure rate {f} outside [0, 1]")
    if f == 1.0:
        raise Unsatisfiable("a replica that always fails cannot meet any availability")
    target = 1.0 - availability
    m, product = 1, f
    while product > target:
        m += 1
        product *= f
    return m
