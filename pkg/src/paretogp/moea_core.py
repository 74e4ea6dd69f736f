"""Pareto machinery shared by every algorithm: dominance, fast
non-dominated sorting, crowding distance, tournament comparison, and the
per-run external archive of best-ever non-dominated solutions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .expr import to_string


def dominates(a, b) -> bool:
    """True iff `a` is no worse in both objectives and strictly better in one.

    Accepts any (error, size_norm) pairs, both minimized.
    """
    return a[0] <= b[0] and a[1] <= b[1] and (a[0] < b[0] or a[1] < b[1])


@dataclass
class FrontPartition:
    """Dominance layers; `fronts` holds input indices, ranks are 1-based."""

    fronts: list
    ranks: np.ndarray


def _domination_matrix(pts: np.ndarray) -> np.ndarray:
    e = pts[:, 0]
    s = pts[:, 1]
    no_worse = (e[:, None] <= e[None, :]) & (s[:, None] <= s[None, :])
    strictly = (e[:, None] < e[None, :]) | (s[:, None] < s[None, :])
    return no_worse & strictly


def fast_non_dominated_sort(objectives) -> FrontPartition:
    """Partition objective vectors into dominance fronts.

    Vectorized domination-count peeling; exact, including duplicates
    (identical vectors never dominate each other and share a front).
    """
    pts = np.asarray(objectives, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("expected a non-empty list of objective vectors")
    dom = _domination_matrix(pts)
    n_dominators = dom.sum(axis=0).astype(np.int64)
    ranks = np.zeros(pts.shape[0], dtype=np.int64)
    fronts = []
    current = np.flatnonzero(n_dominators == 0)
    rank = 1
    while current.size:
        fronts.append([int(i) for i in current])
        ranks[current] = rank
        n_dominators[current] = -1
        n_dominators -= dom[current].sum(axis=0)
        current = np.flatnonzero(n_dominators == 0)
        rank += 1
    return FrontPartition(fronts=fronts, ranks=ranks)


def crowding_distance(objectives) -> np.ndarray:
    """Per-individual crowding distance within one front.

    Boundary individuals of each objective get infinity; interior ones
    accumulate (neighbor above - neighbor below) / range. Sorting is stable
    by input index, so on an all-tied objective the first and last inputs
    act as the boundary. Zero-range objectives contribute nothing.
    """
    pts = np.asarray(objectives, dtype=np.float64)
    m = pts.shape[0]
    dist = np.zeros(m)
    for col in range(pts.shape[1]):
        order = np.argsort(pts[:, col], kind="stable")
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        span = pts[order[-1], col] - pts[order[0], col]
        if m > 2 and span > 0:
            gaps = (pts[order[2:], col] - pts[order[:-2], col]) / span
            dist[order[1:-1]] += gaps
    return dist


def tournament_compare(a, b, rng):
    """Lower rank wins; equal ranks fall through to larger crowding; a full
    tie is decided uniformly at random."""
    if a.rank != b.rank:
        return a if a.rank < b.rank else b
    if a.crowding != b.crowding:
        return a if a.crowding > b.crowding else b
    return a if rng.random() < 0.5 else b


@dataclass
class ArchiveEntry:
    expression: str
    error: float
    size: int
    a: float
    b: float
    test_error: float | None = None

    @property
    def size_norm(self) -> float:
        return self.size / 100.0


@dataclass
class Archive:
    """Best-ever non-dominated solutions of one run, training objectives.

    Single-writer: exactly one evolutionary run mutates an archive.
    """

    entries: list = field(default_factory=list)

    def _points(self) -> np.ndarray:
        return np.array([(e.error, e.size_norm) for e in self.entries], dtype=np.float64)

    def insert(self, individual) -> ArchiveEntry | None:
        """Insert unless dominated; drop entries the candidate dominates.

        Returns the new entry, or None when rejected (dominated, or an
        exact duplicate in both objectives and expression text).
        """
        error = individual.error
        size_norm = individual.size_norm
        if self.entries:
            pts = self._points()
            no_worse = (pts[:, 0] <= error) & (pts[:, 1] <= size_norm)
            strictly = (pts[:, 0] < error) | (pts[:, 1] < size_norm)
            if bool(np.any(no_worse & strictly)):
                return None
            expression = to_string(individual.tree)
            equal = (pts[:, 0] == error) & (pts[:, 1] == size_norm)
            for idx in np.flatnonzero(equal):
                if self.entries[idx].expression == expression:
                    return None
            keep_no_worse = (error <= pts[:, 0]) & (size_norm <= pts[:, 1])
            keep_strict = (error < pts[:, 0]) | (size_norm < pts[:, 1])
            dominated = keep_no_worse & keep_strict
            if bool(np.any(dominated)):
                self.entries = [e for e, d in zip(self.entries, dominated) if not d]
        else:
            expression = to_string(individual.tree)
        entry = ArchiveEntry(
            expression=expression,
            error=error,
            size=individual.size,
            a=individual.a,
            b=individual.b,
        )
        self.entries.append(entry)
        return entry

    def training_points(self) -> list[tuple[float, float]]:
        return [(e.error, e.size_norm) for e in self.entries]

    def test_points(self) -> list[tuple[float, float]]:
        missing = [e for e in self.entries if e.test_error is None]
        if missing:
            raise ValueError("archive entries lack test errors")
        return [(e.test_error, e.size_norm) for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)
