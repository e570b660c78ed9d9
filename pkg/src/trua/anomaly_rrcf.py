"""Streaming robust random cut forest over binned failure counts.

Unexpected terminations of a configured class set are binned by end time, the
bin counts are shingled into short vectors, and each shingle is scored by its
forest-averaged collusive displacement.  Bins scoring above a threshold open
a halting window; pilots ending inside a window are dropped from training data
and scheduling is suspended while a window is open.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from trua.kernels import RCTree, derive_seed
from trua.trace_model import TerminationClass, TraceDataset

DEFAULT_CLASSES = frozenset({TerminationClass.NETWORK, TerminationClass.PREEMPTED})


@dataclass(frozen=True)
class FailurePoint:
    bin_start: int
    count: int


@dataclass(frozen=True)
class DetectorConfig:
    num_trees: int = 40
    window_size: int = 256
    shingle_size: int = 4
    bin_width_s: int = 300
    threshold: float = 250.0
    halt_s: int = 900
    classes: frozenset = DEFAULT_CLASSES
    seed: int = 0

    def __post_init__(self):
        if self.num_trees < 1 or self.window_size < 1 or self.shingle_size < 1:
            raise ValueError("num_trees, window_size and shingle_size must be positive")
        if self.bin_width_s <= 0:
            raise ValueError("bin_width_s must be positive")
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")
        if self.halt_s < 0:
            raise ValueError("halt_s must be non-negative")
        object.__setattr__(self, "classes", frozenset(TerminationClass(c) for c in self.classes))

    def to_dict(self) -> dict:
        return {
            "num_trees": self.num_trees,
            "window_size": self.window_size,
            "shingle_size": self.shingle_size,
            "bin_width_s": self.bin_width_s,
            "threshold": self.threshold,
            "halt_s": self.halt_s,
            "classes": sorted(c.value for c in self.classes),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DetectorConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown detector config keys: {sorted(unknown)}")
        kw = dict(doc)
        if "classes" in kw:
            kw["classes"] = frozenset(kw["classes"])
        return cls(**kw)


@dataclass(frozen=True)
class HaltSchedule:
    windows: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "windows", _merge(self.windows))

    def __len__(self) -> int:
        return len(self.windows)

    def __bool__(self) -> bool:
        return bool(self.windows)

    def contains(self, t) -> np.ndarray | bool:
        """Whether ``t`` (scalar or array) lies inside any closed window."""
        if not self.windows:
            return np.zeros(np.shape(t), dtype=bool) if np.ndim(t) else False
        starts = np.array([w[0] for w in self.windows])
        ends = np.array([w[1] for w in self.windows])
        k = np.searchsorted(starts, t, side="right") - 1
        inside = (k >= 0) & (np.asarray(t) <= ends[np.maximum(k, 0)])
        return inside if np.ndim(t) else bool(inside)

    def to_json(self) -> str:
        return json.dumps([list(w) for w in self.windows])

    @classmethod
    def from_json(cls, text: str) -> "HaltSchedule":
        doc = json.loads(text)
        return cls(tuple((int(a), int(b)) for a, b in doc))


def _merge(windows: Iterable[tuple[int, int]]) -> tuple[tuple[int, int], ...]:
    out: list[list[int]] = []
    for start, end in sorted((int(a), int(b)) for a, b in windows):
        if start >= end:
            raise ValueError(f"halt window ({start}, {end}) is empty")
        if out and start <= out[-1][1]:
            out[-1][1] = max(out[-1][1], end)
        else:
            out.append([start, end])
    return tuple((a, b) for a, b in out)


def bin_failures(
    dataset: TraceDataset, classes: Iterable = DEFAULT_CLASSES, bin_width: int = 300
) -> list[FailurePoint]:
    """Count matching terminations per end-time bin.

    Bins are aligned to multiples of ``bin_width`` and span every record's end
    time, so the stream has no gaps even where nothing matched.
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    if not len(dataset):
        return []
    wanted = {TerminationClass(c) for c in classes}
    ends = dataset.ends
    first = (int(ends.min()) // bin_width) * bin_width
    n_bins = (int(ends.max()) - first) // bin_width + 1
    mask = np.fromiter((r.termination_class in wanted for r in dataset.records), dtype=bool, count=len(dataset))
    counts = np.bincount((ends[mask] - first) // bin_width, minlength=n_bins)
    return [FailurePoint(first + i * bin_width, int(c)) for i, c in enumerate(counts)]


class RrcfForest:
    """Sliding-window forest; every tree sees every point."""

    def __init__(self, num_trees: int = 40, window_size: int = 256, shingle_size: int = 4, seed: int = 0):
        if num_trees < 1 or window_size < 1 or shingle_size < 1:
            raise ValueError("num_trees, window_size and shingle_size must be positive")
        self.num_trees = num_trees
        self.window_size = window_size
        self.shingle_size = shingle_size
        self.seed = seed
        self.trees = [RCTree(shingle_size, window_size, derive_seed(seed, k)) for k in range(num_trees)]
        self._live: deque[int] = deque()
        self._next_index = 0

    def __len__(self) -> int:
        return len(self._live)

    def insert_point(self, point: Sequence[float]) -> float:
        """Insert a shingled vector and return its mean collusive displacement."""
        vec = [float(x) for x in point]
        if len(vec) != self.shingle_size:
            raise ValueError(f"expected a {self.shingle_size}-dimensional point, got {len(vec)}")
        if not all(math.isfinite(x) for x in vec):
            raise ValueError("point has non-finite coordinates")
        if len(self._live) >= self.window_size:
            self.forget_oldest()
        index = self._next_index
        self._next_index += 1
        total = 0.0
        for tree in self.trees:
            tree.insert(index, vec)
            total += tree.codisp(index)
        self._live.append(index)
        return total / self.num_trees

    def forget_oldest(self) -> None:
        index = self._live.popleft()
        for tree in self.trees:
            tree.forget(index)


def shingles(values: Sequence[float], size: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if len(values) < size:
        return np.empty((0, size))
    return np.lib.stride_tricks.sliding_window_view(values, size)


def score_stream(stream: Sequence[FailurePoint], config: DetectorConfig) -> np.ndarray:
    """Score every bin; bins before the first full shingle score 0."""
    forest = RrcfForest(config.num_trees, config.window_size, config.shingle_size, config.seed)
    counts = [p.count for p in stream]
    scores = np.zeros(len(counts))
    for i, vec in enumerate(shingles(counts, config.shingle_size)):
        scores[i + config.shingle_size - 1] = forest.insert_point(vec)
    return scores


def schedule_from_scores(
    stream: Sequence[FailurePoint], scores: np.ndarray, threshold: float, bin_width: int, halt: int
) -> HaltSchedule:
    windows = [
        (p.bin_start, p.bin_start + bin_width + halt)
        for p, s in zip(stream, scores)
        if s > threshold
    ]
    return HaltSchedule(tuple(windows))


def detect(stream: Sequence[FailurePoint], config: DetectorConfig) -> HaltSchedule:
    scores = score_stream(stream, config)
    return schedule_from_scores(stream, scores, config.threshold, config.bin_width_s, config.halt_s)


def calibrate_threshold(scores: np.ndarray, percentile: float = 99.9) -> float:
    """Nearest-rank percentile of clean-stream scores.

    Nearest rank never interpolates above the sample, so a stream of at most
    ``100 / (100 - percentile)`` points calibrates to its own maximum and
    raises no alarm on itself.
    """
    scores = np.sort(np.asarray(scores, dtype=np.float64))
    if scores.size == 0:
        raise ValueError("no scores to calibrate from")
    rank = math.ceil(Fraction(str(percentile)) * scores.size / 100)
    return float(scores[max(rank, 1) - 1])


def filter_dataset(dataset: TraceDataset, schedule: HaltSchedule) -> TraceDataset:
    """Drop every record whose end time falls inside a halt window."""
    if not schedule:
        return dataset
    inside = schedule.contains(dataset.ends)
    return dataset.replace_records(r for r, bad in zip(dataset.records, inside) if not bad)


def tree_invariant_violations(tree) -> list[str]:
    """Structural problems in a tree snapshot; empty when the tree is sound.

    Checks parent/child links, that every internal box is exactly the union of
    its children, that cuts separate the children, that counts add up and
    that the number of stored points respects the window.
    """
    snap = tree.export()
    root = snap["root"]
    left, right, parent = snap["left"], snap["right"], snap["parent"]
    lo, hi, count = snap["lo"], snap["hi"], snap["count"]
    problems: list[str] = []
    if root == -1:
        if snap["leaf_of"]:
            problems.append("empty tree still maps indices")
        return problems
    if parent[root] != -1:
        problems.append("root has a parent")
    stack = [root]
    n_points = 0
    seen = set()
    while stack:
        node = stack.pop()
        if node in seen:
            problems.append(f"node {node} reachable twice")
            continue
        seen.add(node)
        if left[node] == -1:
            if not np.array_equal(lo[node], hi[node]):
                problems.append(f"leaf {node} has a non-degenerate box")
            n_points += int(count[node])
            continue
        l, r = int(left[node]), int(right[node])
        for child in (l, r):
            if parent[child] != node:
                problems.append(f"child {child} does not point back to {node}")
        if not (np.array_equal(lo[node], np.minimum(lo[l], lo[r])) and np.array_equal(hi[node], np.maximum(hi[l], hi[r]))):
            problems.append(f"node {node} box is not the union of its children")
        if count[node] != count[l] + count[r]:
            problems.append(f"node {node} count mismatch")
        dim, cut = int(snap["cut_dim"][node]), float(snap["cut_val"][node])
        if not (hi[l][dim] <= cut < lo[r][dim]):
            problems.append(f"node {node} cut does not separate its children")
        stack.extend((l, r))
    if n_points != len(snap["leaf_of"]):
        problems.append(f"leaf multiplicities {n_points} != stored points {len(snap['leaf_of'])}")
    if n_points > tree.capacity:
        problems.append("tree holds more points than its window")
    for index, leaf in snap["leaf_of"].items():
        if leaf not in seen or left[leaf] != -1:
            problems.append(f"index {index} maps to a non-leaf")
    return problems


def leaf_multiset(tree) -> dict[tuple[float, ...], int]:
    snap = tree.export()
    out: dict[tuple[float, ...], int] = {}
    for leaf in set(snap["leaf_of"].values()):
        out[tuple(snap["lo"][leaf].tolist())] = int(snap["count"][leaf])
    return out
