"""Rank-based prioritized sampling structures.

A capacity-bounded max-heap keyed by priority stands in for a sorted array:
between rebalances the heap's array position is used as the rank of an
entry, and a full rebalance (descending sort) makes position equal exact
rank. Sampling probability over ranks is P(r) proportional to (1/r)^alpha.

Batches are drawn by stratified inverse-transform sampling: the cumulative
mass over ranks is split into k equal-mass windows, one uniform draw is
taken inside each window, and each draw is mapped through the inverse CDF.
Long-run per-item frequencies therefore converge to the rank distribution
itself while every batch stays spread across the rank range.

Cumulative-mass prefixes are built incrementally as a structure grows:
extending a table appends only the new ranks' masses and re-derives bucket
boundaries by binary search instead of rebuilding the prefix from scratch,
which is where the large construction speedup comes from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterator

import numpy as np


def _mass(rank: int, alpha: float) -> float:
    return rank ** -alpha


def rank_probability(rank: int, n: int, alpha: float = 1.0) -> float:
    """P(rank) = (1/rank)^alpha normalized over ranks 1..n."""
    if not 1 <= rank <= n:
        raise ValueError(f"rank {rank} out of range [1, {n}]")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    total = 0.0
    for r in range(1, n + 1):
        total += _mass(r, alpha)
    return _mass(rank, alpha) / total


class MassPrefix:
    """Growable cumulative-mass array: values[r] = sum of (1/i)^alpha, i<=r.

    Masses are accumulated by one sequential left-to-right loop regardless
    of how growth is split across calls, so a prefix extended in steps is
    bit-identical to one built in a single pass. Single-writer.
    """

    __slots__ = ("alpha", "n", "_buf")

    def __init__(self, alpha: float):
        if alpha < 0:
            raise ValueError("alpha must be >= 0")
        self.alpha = alpha
        self.n = 0
        self._buf = np.zeros(1024)

    def ensure(self, upto: int) -> None:
        if upto <= self.n:
            return
        if upto >= len(self._buf):
            grown = np.zeros(max(upto + 1, 2 * len(self._buf)))
            grown[: self.n + 1] = self._buf[: self.n + 1]
            self._buf = grown
        buf = self._buf
        alpha = self.alpha
        total = float(buf[self.n])
        for r in range(self.n + 1, upto + 1):
            total += r ** -alpha
            buf[r] = total
        self.n = upto

    def values(self, n: int) -> np.ndarray:
        """Read-only view of cumulative masses for ranks 0..n."""
        return self._buf[: n + 1]

    def total(self, n: int) -> float:
        return float(self._buf[n])


@dataclass
class BucketTable:
    """Equal-probability-mass rank segments for a given (n, k, alpha).

    `boundaries` has k+1 entries with boundaries[0] == 1 and
    boundaries[k] == n+1; segment i covers ranks
    [boundaries[i-1], boundaries[i]). Tables grown from one another share
    the underlying prefix; entries at or below an older table's n are never
    rewritten, so older views stay valid.
    """

    n: int
    k: int
    alpha: float
    boundaries: list[int]
    prefix: MassPrefix

    @property
    def total(self) -> float:
        return self.prefix.total(self.n)

    def probability(self, rank: int) -> float:
        """Unconditional sampling probability of `rank`; equals rank_probability."""
        return _mass(rank, self.alpha) / self.total

    def segment(self, i: int) -> tuple[int, int]:
        """Inclusive rank range of segment i (1-based)."""
        return self.boundaries[i - 1], self.boundaries[i] - 1


def compute_boundaries(prefix: MassPrefix, n: int, k: int) -> list[int]:
    """Segment ends: first rank whose cumulative mass reaches i/k of the total.

    Ends are clamped so every segment keeps at least one rank and enough
    ranks remain for the segments after it.
    """
    if k == 1:
        return [1, n + 1]
    values = prefix.values(n)
    idx = np.arange(1, k)
    thresholds = values[n] * (idx / k)
    raw = np.searchsorted(values, thresholds, side="left")
    capped = np.minimum(raw, n - k + idx)
    # strictly increasing ends: e_i = max(capped_i, e_{i-1}+1), e_0 = 0
    ends = np.maximum(np.maximum.accumulate(capped - idx), 0) + idx
    return [1] + (ends + 1).tolist() + [n + 1]


def build_buckets(n: int, k: int, alpha: float = 1.0) -> BucketTable:
    """Build the bucket table for n ranks and k buckets from scratch."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"cannot stratify {n} ranks into {k} buckets")
    prefix = MassPrefix(alpha)
    prefix.ensure(n)
    return BucketTable(n, k, alpha, compute_boundaries(prefix, n, k), prefix)


def extend_buckets_incremental(table: BucketTable, new_n: int) -> BucketTable:
    """Grow a table to new_n ranks, appending only the new masses.

    Boundaries come out identical to build_buckets(new_n, k, alpha); cost is
    proportional to (new_n - n) plus the boundary search.
    """
    if new_n < table.n:
        raise ValueError(f"cannot shrink table from {table.n} to {new_n}")
    if new_n == table.n:
        return table
    table.prefix.ensure(new_n)
    bounds = compute_boundaries(table.prefix, new_n, table.k)
    return BucketTable(new_n, table.k, table.alpha, bounds, table.prefix)


class _Entry:
    __slots__ = ("item", "priority", "seq", "handle")

    def __init__(self, item: Any, priority: float, seq: int, handle: int):
        self.item = item
        self.priority = priority
        self.seq = seq
        self.handle = handle


def _key(entry: _Entry) -> tuple[float, int]:
    # Max-heap order: higher priority first, ties broken older-first.
    return (-entry.priority, entry.seq)


class PriorityHeap:
    """Capacity-bounded max-heap whose array order approximates rank.

    Handles are stable integer ids; eviction at capacity removes the
    minimum-priority entry and invalidates its handle. A full rebalance
    runs automatically every `rebalance_every` pushes (and may be invoked
    explicitly, e.g. at epoch boundaries).
    """

    def __init__(self, capacity: int | None = None, rebalance_every: int = 10_000):
        if capacity is not None and capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.rebalance_every = rebalance_every
        self.push_count = 0
        self._entries: list[_Entry] = []
        self._pos: dict[int, int] = {}
        self._next_handle = 0

    def __len__(self) -> int:
        return len(self._entries)

    def push(self, item: Any, priority: float) -> int:
        """Insert, evicting the current minimum first when at capacity."""
        self._check_priority(priority)
        if self.capacity is not None and len(self._entries) >= self.capacity:
            self._evict_min()
        handle = self._next_handle
        self._next_handle += 1
        self.push_count += 1
        entry = _Entry(item, priority, self.push_count, handle)
        self._entries.append(entry)
        self._pos[handle] = len(self._entries) - 1
        self._sift_up(len(self._entries) - 1)
        if self.rebalance_every and self.push_count % self.rebalance_every == 0:
            self.rebalance()
        return handle

    def update_priority(self, handle: int, priority: float) -> None:
        self._check_priority(priority)
        try:
            idx = self._pos[handle]
        except KeyError:
            raise KeyError(f"stale or unknown heap handle {handle}") from None
        self._entries[idx].priority = priority
        idx = self._sift_up(idx)
        self._sift_down(idx)

    def priority(self, handle: int) -> float:
        return self._entries[self._pos[handle]].priority

    def contains(self, handle: int) -> bool:
        return handle in self._pos

    def rebalance(self) -> None:
        """Sort entries by descending priority so position equals exact rank."""
        self._entries.sort(key=_key)
        self._pos = {e.handle: i for i, e in enumerate(self._entries)}

    def entry_at_rank(self, rank: int) -> tuple[Any, float, int]:
        """(item, priority, handle) at 1-based array position `rank`."""
        if not 1 <= rank <= len(self._entries):
            raise ValueError(f"rank {rank} out of range [1, {len(self._entries)}]")
        e = self._entries[rank - 1]
        return e.item, e.priority, e.handle

    def items_by_rank(self) -> Iterator[tuple[Any, float]]:
        for e in self._entries:
            yield e.item, e.priority

    def heap_property_ok(self) -> bool:
        ents = self._entries
        for i in range(1, len(ents)):
            if _key(ents[(i - 1) // 2]) > _key(ents[i]):
                return False
        return True

    @staticmethod
    def _check_priority(priority: float) -> None:
        if not math.isfinite(priority):
            raise ValueError(f"priority must be finite, got {priority}")
        if priority < 0:
            raise ValueError(f"priority must be >= 0, got {priority}")

    def _evict_min(self) -> None:
        # The minimum of a max-heap lives in the leaf range.
        n = len(self._entries)
        start = n // 2 if n > 1 else 0
        idx = max(range(start, n), key=lambda i: _key(self._entries[i]))
        self._remove_at(idx)

    def _remove_at(self, idx: int) -> None:
        entries = self._entries
        victim = entries[idx]
        last = entries.pop()
        del self._pos[victim.handle]
        if idx < len(entries):
            entries[idx] = last
            self._pos[last.handle] = idx
            idx = self._sift_up(idx)
            self._sift_down(idx)

    def _sift_up(self, idx: int) -> int:
        entries, pos = self._entries, self._pos
        while idx > 0:
            parent = (idx - 1) // 2
            if _key(entries[idx]) < _key(entries[parent]):
                entries[idx], entries[parent] = entries[parent], entries[idx]
                pos[entries[idx].handle] = idx
                pos[entries[parent].handle] = parent
                idx = parent
            else:
                break
        return idx

    def _sift_down(self, idx: int) -> int:
        entries, pos = self._entries, self._pos
        n = len(entries)
        while True:
            left = 2 * idx + 1
            right = left + 1
            best = idx
            if left < n and _key(entries[left]) < _key(entries[best]):
                best = left
            if right < n and _key(entries[right]) < _key(entries[best]):
                best = right
            if best == idx:
                return idx
            entries[idx], entries[best] = entries[best], entries[idx]
            pos[entries[idx].handle] = idx
            pos[entries[best].handle] = best
            idx = best


@dataclass(frozen=True)
class StratifiedSample:
    item: Any
    rank: int
    probability: float
    handle: int


def stratified_ranks(table: BucketTable, rng: np.random.Generator) -> list[int]:
    """One rank per equal-mass window via inverse-transform sampling."""
    k = table.k
    values = table.prefix.values(table.n)
    xs = values[table.n] * ((np.arange(k) + rng.random(k)) / k)
    ranks = np.searchsorted(values, xs, side="right")
    return [min(int(r), table.n) for r in ranks]


def sample_stratified(
    heap: PriorityHeap, table: BucketTable, rng: np.random.Generator
) -> list[StratifiedSample]:
    """Draw one entry per bucket; array position is used as the rank.

    Reported probability is the unconditional rank probability, which is
    what long-run per-item frequencies converge to.
    """
    if table.n != len(heap):
        raise ValueError(f"table built for n={table.n} but heap has {len(heap)} entries")
    if table.k > len(heap):
        raise ValueError("bucket count exceeds heap size")
    out = []
    for r in stratified_ranks(table, rng):
        item, _, handle = heap.entry_at_rank(r)
        out.append(StratifiedSample(item, r, table.probability(r), handle))
    return out
