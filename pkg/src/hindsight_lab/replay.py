"""Replay storage and sampling strategies.

Three strategies live here:

* uniform_her -- transitions stored verbatim, goals relabeled at learning
  time by drawing a future state of the same episode (replay_k controls the
  relabeled fraction of each batch; replay_k = 0 degenerates to vanilla
  uniform replay).
* two_queues -- goals substituted at storage time; copies with the actual
  goal go to one priority queue and alternate-goal copies to a second, and
  batches mix the two at a fixed 1:replay_k quota.
* single_queue -- everything goes to one priority queue and the TD error
  alone decides the actual/alternate mix of a batch.

Storage-time relabeling requires a priority for every copy, so the TD
error is computed against the current Q-function as episodes arrive, and
priorities of sampled copies are refreshed after each learning step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .agent import QFunction, td_error
from .envs import Goal, Trajectory, Transition, REWARD_MODES, reward
from .sampler import (
    BucketTable,
    MassPrefix,
    PriorityHeap,
    StratifiedSample,
    compute_boundaries,
    sample_stratified,
)

STRATEGIES = ("uniform_her", "two_queues", "single_queue")
GOAL_COUNT_MODES = ("uniform_fixed", "non_uniform", "non_uniform_late")


class RelabeledTransition:
    """A stored transition paired with a (possibly substituted) goal.

    The reward is recomputed under that goal; is_alternate records whether
    the goal differs from the episode's actual desired goal. Treated as
    immutable once constructed (plain slots class: these are built in the
    replay hot path).
    """

    __slots__ = ("base", "goal", "reward", "is_alternate")

    def __init__(self, base: Transition, goal: Goal, reward: float, is_alternate: bool):
        self.base = base
        self.goal = goal
        self.reward = reward
        self.is_alternate = is_alternate

    def __repr__(self) -> str:
        return (
            f"RelabeledTransition(goal={self.goal!r}, reward={self.reward!r}, "
            f"is_alternate={self.is_alternate!r}, base={self.base!r})"
        )


def relabel(tr: Transition, goal: Goal, reward_mode: str) -> RelabeledTransition:
    return RelabeledTransition(
        tr, goal, reward(tr.achieved_goal, goal, reward_mode), goal != tr.desired_goal
    )


@dataclass(frozen=True)
class AnnealSchedule:
    """Scalar schedule: constant, linear, or inverse-time decay.

    value(0) == start; value(total_steps) == end; steps outside the range
    clamp to the nearest endpoint.
    """

    kind: str
    start: float
    end: float
    total_steps: int

    def __post_init__(self):
        if self.kind not in ("constant", "linear", "inverse_time"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind != "constant" and self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if self.kind == "inverse_time":
            if self.end <= 0 or self.start <= 0:
                raise ValueError("inverse_time needs start, end > 0")
            if self.end > self.start:
                raise ValueError("inverse_time only decays (end <= start)")

    def value(self, step: int) -> float:
        if self.kind == "constant":
            return self.start
        step = min(max(step, 0), self.total_steps)
        if self.kind == "linear":
            return self.start + (self.end - self.start) * step / self.total_steps
        # inverse_time: start / (1 + c*step), with c making value(total) == end
        c = (self.start / self.end - 1.0) / self.total_steps
        return self.start / (1.0 + c * step)


def anneal(schedule: AnnealSchedule, step: int) -> float:
    return schedule.value(step)


def as_schedule(value: float | AnnealSchedule, total_steps: int) -> AnnealSchedule:
    if isinstance(value, AnnealSchedule):
        return value
    return AnnealSchedule("constant", float(value), float(value), max(total_steps, 1))


@dataclass
class HindsightConfig:
    replay_k: float = 4.0
    strategy: str = "uniform_her"
    goal_count_mode: str = "non_uniform"
    reward_mode: str = "plus_one_zero"
    td_mode: str = "max_action"

    def __post_init__(self):
        if self.replay_k < 0:
            raise ValueError("replay_k must be >= 0")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.goal_count_mode not in GOAL_COUNT_MODES:
            raise ValueError(f"unknown goal_count_mode {self.goal_count_mode!r}")
        if self.reward_mode not in REWARD_MODES:
            raise ValueError(f"unknown reward_mode {self.reward_mode!r}")


class UniformReplayBuffer:
    """FIFO ring buffer of transitions plus their future achieved goals.

    Futures are kept as (per-episode achieved-goal list, offset) pairs so
    storing a transition never copies goal tuples.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._transitions: list[Transition] = []
        self._achieved: list[list[Goal]] = []
        self._offsets: list[int] = []
        self._write = 0

    def __len__(self) -> int:
        return len(self._transitions)

    def store_episode(self, trajectory: Trajectory) -> None:
        """Append all transitions verbatim; goals are substituted only at
        sampling time, so any future state keeps an equal chance of being
        picked later."""
        achieved = [tr.achieved_goal for tr in trajectory.transitions]
        transitions = self._transitions
        if len(transitions) + len(achieved) <= self.capacity:
            for i, tr in enumerate(trajectory.transitions):
                transitions.append(tr)
                self._achieved.append(achieved)
                self._offsets.append(i)
            return
        for i, tr in enumerate(trajectory.transitions):
            if len(transitions) < self.capacity:
                transitions.append(tr)
                self._achieved.append(achieved)
                self._offsets.append(i)
            else:
                w = self._write
                transitions[w] = tr
                self._achieved[w] = achieved
                self._offsets[w] = i
                self._write = (w + 1) % self.capacity

    def get(self, index: int) -> tuple[Transition, tuple[Goal, ...]]:
        tr = self._transitions[index]
        return tr, tuple(self._achieved[index][self._offsets[index] :])


def store_episode_uniform(buffer: UniformReplayBuffer, trajectory: Trajectory) -> None:
    buffer.store_episode(trajectory)


def sample_her(
    buffer: UniformReplayBuffer,
    batch_size: int,
    replay_k: float,
    rng: np.random.Generator,
    reward_mode: str = "plus_one_zero",
) -> list[RelabeledTransition]:
    """Uniform batch with learn-time hindsight relabeling.

    floor(batch * replay_k/(1+replay_k)) positions, chosen uniformly, get
    their goal replaced by the achieved goal of a uniformly drawn future
    state of their own episode; rewards are recomputed under the new goal.
    """
    if len(buffer) == 0:
        raise ValueError("cannot sample from an empty buffer")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    indices = rng.integers(0, len(buffer), size=batch_size).tolist()
    n_alt = int(math.floor(batch_size * (replay_k / (1.0 + replay_k)))) if replay_k > 0 else 0
    relabel_at = frozenset()
    draws: list[float] = []
    if n_alt > 0:
        relabel_at = frozenset(
            int(p) for p in rng.choice(batch_size, size=n_alt, replace=False)
        )
        draws = rng.random(batch_size).tolist()  # one future pick per position
    transitions = buffer._transitions
    achieved = buffer._achieved
    offsets = buffer._offsets
    out = []
    for pos, idx in enumerate(indices):
        tr = transitions[idx]
        goal = tr.desired_goal
        if pos in relabel_at:
            ach = achieved[idx]
            off = offsets[idx]
            goal = ach[off + int(draws[pos] * (len(ach) - off))]
        out.append(relabel(tr, goal, reward_mode))
    return out


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def num_alternate_goals(t: int, T: int, replay_k: float) -> int:
    """Alternate-goal count for the transition at step t of a length-T episode.

    round-half-up of replay_k * (1 - t/T), capped at the T-t distinct future
    states. More alternates go where more futures exist, which equalizes the
    expected multiplicity of each (transition, future-goal) pair.
    """
    if not 1 <= t <= T - 1:
        raise ValueError(f"t must be in [1, {T - 1}], got {t}")
    if replay_k < 0:
        raise ValueError("replay_k must be >= 0")
    return min(_round_half_up(replay_k * (1.0 - t / T)), T - t)


class PrioritizedQueue:
    """Priority heap plus incrementally maintained bucket tables.

    The cumulative-mass prefix is shared across batch sizes; per-k
    boundaries are cached and advanced as the heap grows, so sampling never
    rebuilds the cumulative distribution from scratch.
    """

    def __init__(self, capacity: int, alpha: float = 1.0, rebalance_every: int = 10_000):
        self.heap = PriorityHeap(capacity, rebalance_every=rebalance_every)
        self.alpha = alpha
        self._prefix = MassPrefix(alpha)
        self._bounds: dict[int, tuple[int, list[int]]] = {}  # k -> (n, boundaries)

    def __len__(self) -> int:
        return len(self.heap)

    def push(self, item: RelabeledTransition, priority: float) -> int:
        return self.heap.push(item, priority)

    def update_priority(self, handle: int, priority: float) -> None:
        self.heap.update_priority(handle, priority)

    def rebalance(self) -> None:
        self.heap.rebalance()

    def table_for(self, k: int) -> BucketTable:
        n = len(self.heap)
        if k > n:
            raise ValueError(f"bucket count {k} exceeds queue size {n}")
        self._prefix.ensure(n)
        cached = self._bounds.get(k)
        if cached is not None and cached[0] == n:
            bounds = cached[1]
        else:
            bounds = compute_boundaries(self._prefix, n, k)
            self._bounds[k] = (n, bounds)
        return BucketTable(n, k, self.alpha, bounds, self._prefix)

    def sample(self, k: int, rng: np.random.Generator) -> list[StratifiedSample]:
        return sample_stratified(self.heap, self.table_for(k), rng)


@dataclass(frozen=True)
class ReplaySample:
    """One sampled copy: the transition, its sampling probability relative
    to its own queue, that queue's size (for IS weights), and bookkeeping
    for priority refresh."""

    rt: RelabeledTransition
    probability: float
    queue_size: int
    queue_tag: str  # "actual" | "alternate" | "single"
    handle: int
    rank: int


def two_queue_quota(batch_size: int, replay_k: float) -> int:
    """Actual-goal share of a batch under the 1:replay_k sampling ratio."""
    return max(1, int(math.floor(batch_size / (1.0 + replay_k))))


def sample_two_queues(
    q_actual: PrioritizedQueue,
    q_alternate: PrioritizedQueue,
    batch_size: int,
    replay_k: float,
    rng: np.random.Generator,
) -> list[ReplaySample]:
    """Stratified batch split between the actual and alternate queues 1:replay_k.

    A queue smaller than its share has the share truncated to its size and
    the remainder drawn from the other queue.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n_act = two_queue_quota(batch_size, replay_k)
    if replay_k == 0:
        n_act = batch_size
    n_alt = batch_size - n_act
    if n_act > len(q_actual):
        n_act = len(q_actual)
        n_alt = batch_size - n_act
    if n_alt > len(q_alternate):
        n_alt = len(q_alternate)
        n_act = min(batch_size - n_alt, len(q_actual))
    if n_act + n_alt == 0:
        raise ValueError("both queues are empty")
    out = []
    if n_act > 0:
        size = len(q_actual)
        for s in q_actual.sample(n_act, rng):
            out.append(ReplaySample(s.item, s.probability, size, "actual", s.handle, s.rank))
    if n_alt > 0:
        size = len(q_alternate)
        for s in q_alternate.sample(n_alt, rng):
            out.append(ReplaySample(s.item, s.probability, size, "alternate", s.handle, s.rank))
    return out


def sample_single_queue(
    queue: PrioritizedQueue, batch_size: int, rng: np.random.Generator
) -> list[ReplaySample]:
    """One stratified batch from one queue; no actual/alternate quota."""
    if len(queue) < batch_size:
        raise ValueError(
            f"queue holds {len(queue)} entries, cannot draw a batch of {batch_size}"
        )
    size = len(queue)
    return [
        ReplaySample(s.item, s.probability, size, "single", s.handle, s.rank)
        for s in queue.sample(batch_size, rng)
    ]


class PrioritizedReplay:
    """Storage-time relabeling with priority delta, in one or two queues."""

    def __init__(
        self,
        config: HindsightConfig,
        capacity: int,
        n_actions: int,
        gamma: float,
        alpha: float = 1.0,
        rebalance_every: int = 10_000,
    ):
        if config.strategy not in ("two_queues", "single_queue"):
            raise ValueError(f"prioritized replay cannot use strategy {config.strategy!r}")
        self.config = config
        self.n_actions = n_actions
        self.gamma = gamma
        self.q_actual = PrioritizedQueue(capacity, alpha, rebalance_every)
        self.q_alternate = (
            PrioritizedQueue(capacity, alpha, rebalance_every)
            if config.strategy == "two_queues"
            else None
        )

    def _alternate_goals(
        self,
        tr: Transition,
        futures: Sequence[Goal],
        replay_k: float,
        rng: np.random.Generator,
    ) -> list[Goal]:
        mode = self.config.goal_count_mode
        if mode == "uniform_fixed":
            # Fixed budget per transition, drawn with replacement: duplicate
            # (transition, goal) copies are possible, matching the pathology
            # non-uniform counts were designed to remove.
            count = _round_half_up(replay_k)
            if count == 0 or not futures:
                return []
            picks = rng.integers(0, len(futures), size=count)
            return [futures[int(p)] for p in picks]
        if mode == "non_uniform":
            count = num_alternate_goals(tr.t, tr.T, replay_k)
        else:  # non_uniform_late: budget grows toward the episode tail
            count = min(_round_half_up(replay_k * tr.t / tr.T), tr.T - tr.t)
        if count == 0 or not futures:
            return []
        picks = rng.choice(len(futures), size=count, replace=False)
        return [futures[int(p)] for p in picks]

    def store_episode(
        self,
        trajectory: Trajectory,
        qfun: QFunction,
        rng: np.random.Generator,
        replay_k: float | None = None,
    ) -> None:
        """Relabel and push every transition copy with priority |delta|."""
        rk = self.config.replay_k if replay_k is None else replay_k
        mode = self.config.reward_mode
        for i, tr in enumerate(trajectory.transitions):
            futures = trajectory.future_achieved_goals(i)
            actual = relabel(tr, tr.desired_goal, mode)
            self._push(self.q_actual, actual, qfun)
            alt_queue = self.q_alternate if self.q_alternate is not None else self.q_actual
            for goal in self._alternate_goals(tr, futures, rk, rng):
                self._push(alt_queue, relabel(tr, goal, mode), qfun)

    def _push(self, queue: PrioritizedQueue, rt: RelabeledTransition, qfun: QFunction) -> None:
        delta = td_error(qfun, rt, self.gamma, self.config.td_mode, self.n_actions)
        queue.push(rt, abs(delta))

    def ready(self, batch_size: int, replay_k: float) -> bool:
        if self.config.strategy == "single_queue":
            return len(self.q_actual) >= batch_size
        assert self.q_alternate is not None
        n_act = two_queue_quota(batch_size, replay_k) if replay_k > 0 else batch_size
        return len(self.q_actual) >= n_act and (
            len(self.q_alternate) >= batch_size - n_act
        )

    def sample(
        self, batch_size: int, replay_k: float, rng: np.random.Generator
    ) -> list[ReplaySample]:
        if self.config.strategy == "single_queue":
            return sample_single_queue(self.q_actual, batch_size, rng)
        assert self.q_alternate is not None
        return sample_two_queues(self.q_actual, self.q_alternate, batch_size, replay_k, rng)

    def update_priorities(
        self, samples: Sequence[ReplaySample], new_abs_deltas: Sequence[float]
    ) -> None:
        for sample, delta in zip(samples, new_abs_deltas):
            queue = self.q_alternate if sample.queue_tag == "alternate" else self.q_actual
            assert queue is not None
            if queue.heap.contains(sample.handle):
                queue.update_priority(sample.handle, abs(delta))

    def rebalance(self) -> None:
        self.q_actual.rebalance()
        if self.q_alternate is not None:
            self.q_alternate.rebalance()

    def sizes(self) -> tuple[int, int]:
        return (
            len(self.q_actual),
            len(self.q_alternate) if self.q_alternate is not None else 0,
        )


def importance_weight(p: float, n: int, beta: float) -> float:
    """(1/(n*p))^beta; callers normalize by the batch maximum before use."""
    if p <= 0.0:
        raise ValueError("probability must be > 0")
    if n < 1:
        raise ValueError("buffer size must be >= 1")
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must be in [0, 1]")
    return (1.0 / (n * p)) ** beta


def normalize_weights(weights: Sequence[float]) -> list[float]:
    top = max(weights)
    if top <= 0.0:
        return [1.0 for _ in weights]
    return [w / top for w in weights]


def actual_alternate_ratio(batch: Iterable[RelabeledTransition]) -> float:
    """count(actual) / max(1, count(alternate)) over a batch."""
    n_actual = 0
    n_alternate = 0
    for rt in batch:
        if rt.is_alternate:
            n_alternate += 1
        else:
            n_actual += 1
    if n_actual + n_alternate == 0:
        raise ValueError("batch is empty")
    return n_actual / max(1, n_alternate)
