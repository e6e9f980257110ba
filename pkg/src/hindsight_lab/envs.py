"""Goal-conditioned episodic environments: bit-flip and empty grid.

States are plain tuples (hashable, cheap to compare), the achieved-goal
projection is the identity, and dynamics are pure functions of
(state, action) so environments can be copied or shared freely.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

State = tuple
Goal = tuple
Action = int

REWARD_MODES = ("plus_one_zero", "minus_one_zero")


def goal_achieved(achieved: Goal, desired: Goal) -> bool:
    """Exact-equality achievement predicate (both environments)."""
    return achieved == desired


def reward(achieved: Goal, desired: Goal, mode: str = "plus_one_zero") -> float:
    """Sparse goal-conditioned reward.

    plus_one_zero: +1 on achievement, 0 otherwise.
    minus_one_zero: 0 on achievement, -1 otherwise.
    """
    hit = goal_achieved(achieved, desired)
    if mode == "plus_one_zero":
        return 1.0 if hit else 0.0
    if mode == "minus_one_zero":
        return 0.0 if hit else -1.0
    raise ValueError(f"unknown reward mode {mode!r}")


class Transition:
    """One environment step, tagged with its position in the episode.

    `t` is the 1-based step index and `T` the episode length measured in
    states (so stored transitions satisfy 1 <= t <= T-1). `achieved_goal`
    is the projection of `next_state`. `next_action` is the action taken
    at t+1 when one exists (used by the trajectory-action TD mode).

    Plain slots class (constructed in bulk during collection); treated as
    immutable once an episode is assembled.
    """

    __slots__ = (
        "state",
        "action",
        "next_state",
        "achieved_goal",
        "desired_goal",
        "t",
        "T",
        "done",
        "next_action",
    )

    def __init__(
        self,
        state: State,
        action: Action,
        next_state: State,
        achieved_goal: Goal,
        desired_goal: Goal,
        t: int,
        T: int,
        done: bool,
        next_action: Action | None = None,
    ):
        self.state = state
        self.action = action
        self.next_state = next_state
        self.achieved_goal = achieved_goal
        self.desired_goal = desired_goal
        self.t = t
        self.T = T
        self.done = done
        self.next_action = next_action

    def __repr__(self) -> str:
        return (
            f"Transition(t={self.t}/{self.T}, state={self.state!r}, "
            f"action={self.action!r}, next_state={self.next_state!r}, "
            f"desired_goal={self.desired_goal!r}, done={self.done!r})"
        )


@dataclass
class Trajectory:
    """Contiguous transitions sharing one desired goal."""

    transitions: list[Transition] = field(default_factory=list)

    @property
    def desired_goal(self) -> Goal:
        return self.transitions[0].desired_goal

    @property
    def T(self) -> int:
        """Episode length in states (transitions + 1)."""
        return len(self.transitions) + 1

    @property
    def success(self) -> bool:
        return any(
            goal_achieved(tr.achieved_goal, tr.desired_goal)
            for tr in self.transitions
        )

    def future_achieved_goals(self, index: int) -> tuple[Goal, ...]:
        """Achieved goals of s_{t+1}..s_T for the transition at `index`.

        Includes the transition's own next state, so the tuple is never
        empty for a stored transition.
        """
        return tuple(tr.achieved_goal for tr in self.transitions[index:])


class BitFlipEnv:
    """n-bit flipping task: action i flips bit i, goal space == state space."""

    def __init__(self, n: int, horizon: int):
        if n < 1:
            raise ValueError("n must be >= 1")
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.n = n
        self.horizon = horizon
        self.n_actions = n
        self.name = f"bitflip:{n}"

    def reset(self, rng: np.random.Generator) -> tuple[State, Goal]:
        """Draw start and goal independently uniformly, rejecting start == goal."""
        while True:
            state = tuple(int(b) for b in rng.integers(0, 2, size=self.n))
            goal = tuple(int(b) for b in rng.integers(0, 2, size=self.n))
            if state != goal:
                return state, goal

    def step(self, state: State, action: Action) -> State:
        if not 0 <= action < self.n:
            raise ValueError(f"action {action} out of range [0, {self.n})")
        bits = list(state)
        bits[action] ^= 1
        return tuple(bits)

    def achieved_goal(self, state: State) -> Goal:
        return state

    def all_states(self) -> list[State]:
        states = [()]
        for _ in range(self.n):
            states = [s + (b,) for s in states for b in (0, 1)]
        return states


class GridEnv:
    """k x k empty grid; actions N/S/E/W (0..3) with moves clamped at walls."""

    MOVES = ((0, 1), (0, -1), (1, 0), (-1, 0))  # N, S, E, W as (dx, dy)

    def __init__(self, k: int, horizon: int):
        if k < 2:
            raise ValueError("k must be >= 2")
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.k = k
        self.horizon = horizon
        self.n_actions = 4
        self.name = f"grid:{k}"

    def reset(self, rng: np.random.Generator) -> tuple[State, Goal]:
        while True:
            sx, sy, gx, gy = (int(v) for v in rng.integers(0, self.k, size=4))
            if (sx, sy) != (gx, gy):
                return (sx, sy), (gx, gy)

    def step(self, state: State, action: Action) -> State:
        if not 0 <= action < 4:
            raise ValueError(f"action {action} out of range [0, 4)")
        dx, dy = self.MOVES[action]
        x, y = state
        return (
            min(max(x + dx, 0), self.k - 1),
            min(max(y + dy, 0), self.k - 1),
        )

    def achieved_goal(self, state: State) -> Goal:
        return state

    def all_states(self) -> list[State]:
        return [(x, y) for x in range(self.k) for y in range(self.k)]


Environment = BitFlipEnv | GridEnv


def bitflip_new(n: int, horizon: int) -> BitFlipEnv:
    return BitFlipEnv(n, horizon)


def grid_new(k: int, horizon: int) -> GridEnv:
    return GridEnv(k, horizon)


def make_env(spec: str, horizon: int | None = None) -> Environment:
    """Build an environment from a selection string "bitflip:<n>" or "grid:<k>".

    Default horizons: n for bit-flip, 2k for the grid.
    """
    kind, _, arg = spec.partition(":")
    if not arg:
        raise ValueError(f"environment string {spec!r} needs a size, e.g. 'bitflip:8'")
    try:
        size = int(arg)
    except ValueError:
        raise ValueError(f"environment size {arg!r} is not an integer") from None
    if kind == "bitflip":
        return BitFlipEnv(size, horizon if horizon is not None else size)
    if kind == "grid":
        return GridEnv(size, horizon if horizon is not None else 2 * size)
    raise ValueError(f"unknown environment kind {kind!r} (expected bitflip or grid)")


def run_episode(
    env: Environment,
    policy: Callable[[State, Goal], Action],
    rng: np.random.Generator,
) -> Trajectory:
    """Roll out one episode, terminating early on goal achievement.

    The episode also ends when the step index reaches the horizon; the
    final transition carries done=True either way.
    """
    state, goal = env.reset(rng)
    horizon = env.horizon
    transitions: list[Transition] = []
    t = 0
    while True:
        t += 1
        action = policy(state, goal)
        next_state = env.step(state, action)
        achieved = env.achieved_goal(next_state)
        done = achieved == goal or t >= horizon
        transitions.append(
            Transition(state, action, next_state, achieved, goal, t, 0, done)
        )
        state = next_state
        if done:
            break
    T = len(transitions) + 1
    for i, tr in enumerate(transitions):
        tr.T = T
        if i + 1 < len(transitions):
            tr.next_action = transitions[i + 1].action
    return Trajectory(transitions)


def hamming_policy(state: State, goal: Goal) -> Action:
    """Bit-flip oracle: flip the lowest-index mismatched bit.

    Succeeds within Hamming-distance steps, so it drives the success-rate
    sanity checks; calling it with state == goal is a bug upstream.
    """
    for i, (s, g) in enumerate(zip(state, goal)):
        if s != g:
            return i
    raise ValueError("state already equals goal")


def optimal_actions(state: State, goal: Goal, env: Environment) -> set[Action]:
    """Actions that strictly reduce the distance to the goal."""
    if isinstance(env, BitFlipEnv):
        return {i for i, (s, g) in enumerate(zip(state, goal)) if s != g}
    acts = set()
    x, y = state
    gx, gy = goal
    if gy > y:
        acts.add(0)
    if gy < y:
        acts.add(1)
    if gx > x:
        acts.add(2)
    if gx < x:
        acts.add(3)
    return acts


def format_point(value: Sequence) -> str:
    """CSV-safe rendering of a state or goal tuple, e.g. (0,1,1) -> '0|1|1'."""
    return "|".join(str(v) for v in value)
