"""Tabular goal-conditioned Q-learner.

Q is a plain dict over (state, goal, action); never-updated entries read as
exactly 0 and each update touches exactly one entry, so TD errors (the
priority source for prioritized replay) are exact. The lookup/update
surface is small enough that a differentiable approximator could be
swapped in behind it.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable

import numpy as np

from .envs import Action, Environment, Goal, State, format_point, goal_achieved, run_episode

if TYPE_CHECKING:  # pragma: no cover
    from .replay import RelabeledTransition

TD_MODES = ("max_action", "trajectory_action")


@dataclass
class AgentConfig:
    gamma: float = 0.98
    epsilon: float = 0.2
    learning_rate: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must be in [0, 1]")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be > 0")


class QFunction:
    """Map (state, goal, action) -> value estimate, default 0.

    Stored row-wise per (state, goal) so the max over actions is one dict
    lookup; reads of never-updated entries are exactly 0 and an update
    changes only the addressed entry.
    """

    def __init__(self):
        self.rows: dict[tuple[State, Goal], list[float]] = {}

    def value(self, state: State, goal: Goal, action: Action) -> float:
        row = self.rows.get((state, goal))
        if row is None or action >= len(row):
            return 0.0
        return row[action]

    def add(self, state: State, goal: Goal, action: Action, delta: float) -> None:
        key = (state, goal)
        row = self.rows.get(key)
        if row is None:
            row = [0.0] * (action + 1)
            self.rows[key] = row
        elif action >= len(row):
            row.extend([0.0] * (action + 1 - len(row)))
        row[action] += delta

    def max_value(self, state: State, goal: Goal, n_actions: int) -> float:
        row = self.rows.get((state, goal))
        if row is None:
            return 0.0
        top = max(row)
        if len(row) < n_actions:  # unmaterialized actions read as 0
            top = max(top, 0.0)
        return top

    def argmax(self, state: State, goal: Goal, n_actions: int) -> Action:
        """Greedy action; ties break toward the lowest action index."""
        row = self.rows.get((state, goal))
        if row is None:
            return 0
        best_a = 0
        best_v = row[0] if row else 0.0
        for a in range(1, n_actions):
            v = row[a] if a < len(row) else 0.0
            if v > best_v:
                best_a, best_v = a, v
        return best_a

    def __len__(self) -> int:
        return sum(len(row) for row in self.rows.values())

    def dump_csv(self) -> str:
        """Debug dump: one (state, goal, action, value) row per entry."""
        buf = io.StringIO()
        buf.write("state,goal,action,value\n")
        for (s, g), row in self.rows.items():
            for a, v in enumerate(row):
                buf.write(f"{format_point(s)},{format_point(g)},{a},{v!r}\n")
        return buf.getvalue()


def td_error(
    qfun: QFunction,
    rt: "RelabeledTransition",
    gamma: float,
    td_mode: str = "max_action",
    n_actions: int | None = None,
) -> float:
    """delta = r + gamma * B - Q(s||g, a).

    B bootstraps from the next state: max over actions by default, or the
    trajectory's own next action in trajectory_action mode (falling back
    to the max when the episode ended and no next action exists). B is
    zeroed when the transition is terminal under its goal.
    """
    tr = rt.base
    q_sa = qfun.value(tr.state, rt.goal, tr.action)
    if goal_achieved(tr.achieved_goal, rt.goal):
        bootstrap = 0.0
    elif td_mode == "max_action":
        if n_actions is None:
            raise ValueError("max_action mode needs n_actions")
        bootstrap = qfun.max_value(tr.next_state, rt.goal, n_actions)
    elif td_mode == "trajectory_action":
        if tr.next_action is not None:
            bootstrap = qfun.value(tr.next_state, rt.goal, tr.next_action)
        elif n_actions is not None:
            bootstrap = qfun.max_value(tr.next_state, rt.goal, n_actions)
        else:
            bootstrap = 0.0
    else:
        raise ValueError(f"unknown td mode {td_mode!r}")
    return rt.reward + gamma * bootstrap - q_sa


def epsilon_greedy(
    qfun: QFunction,
    state: State,
    goal: Goal,
    epsilon: float,
    rng: np.random.Generator,
    n_actions: int,
) -> Action:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(0, n_actions))
    return qfun.argmax(state, goal, n_actions)


def update(
    qfun: QFunction,
    batch: Iterable[tuple["RelabeledTransition", float]],
    config: AgentConfig,
    n_actions: int,
    td_mode: str = "max_action",
    refresh: bool = True,
) -> list[float]:
    """Apply weighted TD updates in batch order; return refreshed |delta|.

    Each item's delta is computed against the table as it stands when the
    item is applied. The returned |delta| are recomputed once the whole
    batch has been applied, ready for priority refresh; refresh=False skips
    that second pass and returns the |delta| seen at update time (enough
    for callers that only track an error metric).
    """
    items = list(batch)
    deltas = []
    lr = config.learning_rate
    gamma = config.gamma
    if td_mode == "max_action":
        # inlined td_error + add: this loop dominates training runs
        rows = qfun.rows
        for rt, weight in items:
            tr = rt.base
            goal = rt.goal
            key = (tr.state, goal)
            row = rows.get(key)
            if row is None:
                row = [0.0] * n_actions
                rows[key] = row
            elif len(row) < n_actions:
                row.extend([0.0] * (n_actions - len(row)))
            q_sa = row[tr.action]
            if tr.achieved_goal == goal:
                bootstrap = 0.0
            else:
                nrow = rows.get((tr.next_state, goal))
                bootstrap = max(nrow) if nrow is not None else 0.0
                if bootstrap < 0.0 and (nrow is None or len(nrow) < n_actions):
                    bootstrap = 0.0
            delta = rt.reward + gamma * bootstrap - q_sa
            deltas.append(abs(delta))
            row[tr.action] = q_sa + lr * weight * delta
    else:
        for rt, weight in items:
            delta = td_error(qfun, rt, gamma, td_mode, n_actions)
            deltas.append(abs(delta))
            tr = rt.base
            qfun.add(tr.state, rt.goal, tr.action, lr * weight * delta)
    if not refresh:
        return deltas
    return [
        abs(td_error(qfun, rt, config.gamma, td_mode, n_actions))
        for rt, _ in items
    ]


def evaluate(
    env: Environment, qfun: QFunction, episodes: int, rng: np.random.Generator
) -> float:
    """Fraction of greedy episodes that reach their goal within the horizon."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    hits = 0
    for _ in range(episodes):
        traj = run_episode(
            env, lambda s, g: qfun.argmax(s, g, env.n_actions), rng
        )
        hits += traj.success
    return hits / episodes
