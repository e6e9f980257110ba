"""Hindsight policy gradients and their exact desk-scale oracles.

The estimator reweights trajectories collected while pursuing goal g' so
they can teach the policy about other goals g, using the full-trajectory
probability ratio prod_t pi(a_t|s_t,g) / pi(a_t|s_t,g'). A baseline-
corrected variant subtracts a fitted state-goal value from each reward
term. Everything is checkable on tiny environments: trajectory spaces are
enumerated exactly, performance and its gradient come from enumeration and
central finite differences, and the trust-region-style surrogate (frozen
visitation, ratio-weighted advantages) is evaluated in exact mode together
with the visitation-mismatch gap quantity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .envs import (
    Action,
    Environment,
    Goal,
    State,
    Trajectory,
    Transition,
    goal_achieved,
    reward,
    run_episode,
)
from .rng import substream

GradTable = dict[tuple[State, Goal], np.ndarray]


class PolicyParams:
    """Tabular softmax policy: logits per (state, goal), one row of actions."""

    def __init__(self, n_actions: int, table: dict | None = None):
        self.n_actions = n_actions
        self.table: dict[tuple[State, Goal], np.ndarray] = table if table is not None else {}

    def logits(self, state: State, goal: Goal) -> np.ndarray:
        key = (state, goal)
        row = self.table.get(key)
        if row is None:
            row = np.zeros(self.n_actions)
            self.table[key] = row
        return row

    def probs(self, state: State, goal: Goal) -> np.ndarray:
        """Softmax action distribution; reads do not create table entries."""
        row = self.table.get((state, goal))
        if row is None:
            return np.full(self.n_actions, 1.0 / self.n_actions)
        z = row - row.max()
        e = np.exp(z)
        return e / e.sum()

    def greedy(self, state: State, goal: Goal) -> Action:
        row = self.table.get((state, goal))
        if row is None:
            return 0
        return int(np.argmax(row))  # first max wins: lowest-index tie break

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.n_actions, {k: v.copy() for k, v in self.table.items()})

    def add_scaled(self, grad: GradTable, scale: float) -> None:
        for key, vec in grad.items():
            row = self.logits(*key)
            row += scale * vec


def grad_norm(grad: GradTable) -> float:
    return math.sqrt(sum(float(np.dot(v, v)) for v in grad.values()))


def _grad_axpy(dst: GradTable, src: GradTable, scale: float) -> None:
    for key, vec in src.items():
        row = dst.get(key)
        if row is None:
            dst[key] = scale * vec
        else:
            row += scale * vec


class GoalDistribution:
    """Finite goal support with probabilities summing to 1."""

    def __init__(self, goals: Sequence[Goal], probs: Sequence[float]):
        if len(goals) != len(probs) or not goals:
            raise ValueError("goals and probs must be equal-length and nonempty")
        if any(p < 0 for p in probs):
            raise ValueError("goal probabilities must be nonnegative")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError(f"goal probabilities sum to {sum(probs)!r}, not 1")
        self.goals = list(goals)
        self.probs = [float(p) for p in probs]

    def items(self):
        return zip(self.goals, self.probs)

    def __len__(self) -> int:
        return len(self.goals)

    @classmethod
    def point(cls, goal: Goal) -> "GoalDistribution":
        return cls([goal], [1.0])

    @classmethod
    def uniform(cls, goals: Sequence[Goal]) -> "GoalDistribution":
        n = len(goals)
        return cls(list(goals), [1.0 / n] * n)


class ValueBaseline:
    """Per-(state, goal) value estimate fitted by an exponential moving
    average of observed hindsight returns."""

    def __init__(self, decay: float = 0.99):
        if not 0.0 <= decay < 1.0:
            raise ValueError("decay must be in [0, 1)")
        self.decay = decay
        self.table: dict[tuple[State, Goal], float] = {}

    def value(self, state: State, goal: Goal) -> float:
        return self.table.get((state, goal), 0.0)

    def observe(self, state: State, goal: Goal, ret: float) -> None:
        key = (state, goal)
        old = self.table.get(key)
        if old is None:
            self.table[key] = ret
        else:
            self.table[key] = self.decay * old + (1.0 - self.decay) * ret


def importance_ratio(
    traj: Trajectory, g: Goal, g_prime: Goal, theta: PolicyParams
) -> float:
    """prod over steps of pi(a|s,g) / pi(a|s,g'); softmax keeps it positive."""
    ratio = 1.0
    for tr in traj.transitions:
        num = float(theta.probs(tr.state, g)[tr.action])
        den = float(theta.probs(tr.state, g_prime)[tr.action])
        ratio *= num / den
    return ratio


def _hindsight_terms(
    traj: Trajectory,
    g: Goal,
    baseline: ValueBaseline | None,
    reward_mode: str,
) -> list[float]:
    # terms[j]: reward at state s_{j+2} under g (transition j's arrival state),
    # minus the baseline value there in corrected mode.
    terms = []
    for tr in traj.transitions:
        r = reward(tr.achieved_goal, g, reward_mode)
        if baseline is not None:
            r -= baseline.value(tr.next_state, g)
        terms.append(r)
    return terms


def trajectory_gradient(
    traj: Trajectory,
    goal_dist: GoalDistribution,
    theta: PolicyParams,
    mode: str = "plain",
    baseline: ValueBaseline | None = None,
    reward_mode: str = "plus_one_zero",
    ratio_cap: float | None = None,
) -> GradTable:
    """One trajectory's contribution to the hindsight policy gradient."""
    if mode not in ("plain", "baseline"):
        raise ValueError(f"unknown estimator mode {mode!r}")
    if mode == "baseline" and baseline is None:
        raise ValueError("baseline mode needs a ValueBaseline")
    g_prime = traj.desired_goal
    grad: GradTable = {}
    for g, pg in goal_dist.items():
        if pg == 0.0:
            continue
        ratio = importance_ratio(traj, g, g_prime, theta)
        if ratio_cap is not None:
            ratio = min(ratio, ratio_cap)
        weight = pg * ratio
        terms = _hindsight_terms(
            traj, g, baseline if mode == "baseline" else None, reward_mode
        )
        # suffix[j] = sum of terms j..end: the return collected after step j+1
        suffix = 0.0
        suffixes = [0.0] * len(terms)
        for j in range(len(terms) - 1, -1, -1):
            suffix += terms[j]
            suffixes[j] = suffix
        for j, tr in enumerate(traj.transitions):
            coef = weight * suffixes[j]
            if coef == 0.0:
                continue
            probs = theta.probs(tr.state, g)
            vec = -coef * probs
            vec[tr.action] += coef
            _grad_axpy(grad, {(tr.state, g): vec}, 1.0)
    return grad


def hpg_estimate(
    trajectories: Sequence[Trajectory],
    goal_dist: GoalDistribution,
    theta: PolicyParams,
    mode: str = "plain",
    baseline: ValueBaseline | None = None,
    weights: Sequence[float] | None = None,
    reward_mode: str = "plus_one_zero",
    ratio_cap: float | None = None,
) -> GradTable:
    """Hindsight policy gradient over a batch.

    With the default weights this averages over trajectories; passing the
    enumeration probabilities of the full trajectory space instead yields
    the exact expectation.
    """
    if not trajectories:
        raise ValueError("empty trajectory batch")
    if weights is None:
        weights = [1.0 / len(trajectories)] * len(trajectories)
    total: GradTable = {}
    for traj, w in zip(trajectories, weights):
        contrib = trajectory_gradient(
            traj, goal_dist, theta, mode, baseline, reward_mode, ratio_cap
        )
        _grad_axpy(total, contrib, w)
    return total


class ExactModel:
    """Full enumeration of one (policy, goal) pair on a tiny environment.

    Enumerates every trajectory from `start_state` pursuing `goal` (early
    termination on achievement, hard stop at `horizon` actions) with its
    probability, and exposes expected discounted return, the time-indexed
    state-visitation measure, and time-indexed value/advantage tables.
    """

    def __init__(
        self,
        env: Environment,
        theta: PolicyParams,
        goal: Goal,
        start_state: State,
        horizon: int,
        gamma: float = 1.0,
        reward_mode: str = "plus_one_zero",
        size_limit: int = 10**7,
    ):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        space = env.n_actions**horizon
        if space > size_limit:
            raise ValueError(
                f"trajectory space too large to enumerate: |A|^H = "
                f"{env.n_actions}^{horizon} = {space} > {size_limit}"
            )
        if goal_achieved(env.achieved_goal(start_state), goal):
            raise ValueError("start state already achieves the goal")
        self.env = env
        self.theta = theta
        self.goal = goal
        self.start_state = start_state
        self.horizon = horizon
        self.gamma = gamma
        self.reward_mode = reward_mode
        self.trajectories: list[Trajectory] = []
        self.probabilities: list[float] = []
        self.occupancy: dict[tuple[State, int], float] = {}
        self._v: dict[tuple[State, int], float] = {}
        self._enumerate(start_state, 1, 1.0, [])
        self.eta = self.value(start_state, 1)

    def _enumerate(self, state, t, prob, steps) -> None:
        key = (state, t)
        self.occupancy[key] = self.occupancy.get(key, 0.0) + prob
        probs = self.theta.probs(state, self.goal)
        for a in range(self.env.n_actions):
            p = prob * float(probs[a])
            ns = self.env.step(state, a)
            ach = self.env.achieved_goal(ns)
            done = goal_achieved(ach, self.goal) or t >= self.horizon
            steps.append((state, a, ns, ach, done))
            if done:
                self._record(steps, p)
            else:
                self._enumerate(ns, t + 1, p, steps)
            steps.pop()

    def _record(self, steps, prob) -> None:
        T = len(steps) + 1
        transitions = []
        for i, (s, a, ns, ach, done) in enumerate(steps):
            transitions.append(
                Transition(
                    state=s,
                    action=a,
                    next_state=ns,
                    achieved_goal=ach,
                    desired_goal=self.goal,
                    t=i + 1,
                    T=T,
                    done=done,
                    next_action=steps[i + 1][1] if i + 1 < len(steps) else None,
                )
            )
        self.trajectories.append(Trajectory(transitions))
        self.probabilities.append(prob)

    def value(self, state: State, t: int) -> float:
        """Expected return from an action point (state, t) onward."""
        if t > self.horizon:
            return 0.0
        if goal_achieved(self.env.achieved_goal(state), self.goal):
            return 0.0  # absorbed on arrival
        key = (state, t)
        cached = self._v.get(key)
        if cached is not None:
            return cached
        probs = self.theta.probs(state, self.goal)
        v = 0.0
        for a in range(self.env.n_actions):
            v += float(probs[a]) * self.q_value(state, t, a)
        self._v[key] = v
        return v

    def q_value(self, state: State, t: int, action: Action) -> float:
        ns = self.env.step(state, action)
        ach = self.env.achieved_goal(ns)
        r = reward(ach, self.goal, self.reward_mode)
        if goal_achieved(ach, self.goal):
            return r
        return r + self.gamma * self.value(ns, t + 1)

    def advantage(self, state: State, t: int, action: Action) -> float:
        return self.q_value(state, t, action) - self.value(state, t)

    def eta_from_trajectories(self) -> float:
        """Independent recomputation of eta by summing leaf returns."""
        total = 0.0
        for traj, prob in zip(self.trajectories, self.probabilities):
            g = 0.0
            disc = 1.0
            for tr in traj.transitions:
                g += disc * reward(tr.achieved_goal, self.goal, self.reward_mode)
                disc *= self.gamma
            total += prob * g
        return total


def exact_performance(
    env: Environment,
    theta: PolicyParams,
    goal_dist: GoalDistribution,
    horizon: int,
    gamma: float = 1.0,
    start_state: State | None = None,
    reward_mode: str = "plus_one_zero",
    size_limit: int = 10**7,
) -> float:
    """Exact expected discounted return by full enumeration."""
    if start_state is None:
        raise ValueError("exact_performance needs an explicit start_state")
    space = env.n_actions**horizon * len(goal_dist)
    if space > size_limit:
        raise ValueError(
            f"trajectory space too large: |A|^H * goals = {space} > {size_limit}"
        )
    eta = 0.0
    for g, pg in goal_dist.items():
        if pg == 0.0:
            continue
        model = ExactModel(env, theta, g, start_state, horizon, gamma, reward_mode)
        eta += pg * model.eta
    return eta


def finite_diff_grad(
    f: Callable[[PolicyParams], float], theta: PolicyParams, h: float
) -> GradTable:
    """Central differences of f over every logit coordinate of theta."""
    if h <= 0:
        raise ValueError("h must be > 0")
    work = theta.copy()
    grad: GradTable = {}
    for key in list(work.table.keys()):
        row = work.table[key]
        vec = np.zeros(theta.n_actions)
        for a in range(theta.n_actions):
            orig = row[a]
            row[a] = orig + h
            up = f(work)
            row[a] = orig - h
            down = f(work)
            row[a] = orig
            vec[a] = (up - down) / (2.0 * h)
        grad[key] = vec
    return grad


AdvantageFn = Callable[[State, int, Action, Goal], float]


def exact_advantage_fn(
    env: Environment,
    theta_prime: PolicyParams,
    goals: Sequence[Goal],
    start_state: State,
    horizon: int,
    gamma: float = 1.0,
    reward_mode: str = "plus_one_zero",
) -> AdvantageFn:
    """Advantages of the old policy, one exact model per evaluation goal."""
    models = {
        g: ExactModel(env, theta_prime, g, start_state, horizon, gamma, reward_mode)
        for g in goals
    }

    def advantage(state: State, t: int, action: Action, goal: Goal) -> float:
        try:
            model = models[goal]
        except KeyError:
            raise KeyError(f"no advantage model for goal {goal!r}") from None
        return model.advantage(state, t, action)

    return advantage


def surrogate_L(
    theta: PolicyParams,
    theta_prime: PolicyParams,
    trajectories: Sequence[Trajectory],
    goal_dist: GoalDistribution,
    advantage_fn: AdvantageFn,
    weights: Sequence[float] | None = None,
) -> float:
    """Frozen-visitation surrogate objective.

    States and actions come from trajectories collected under the old
    policy pursuing their own goals; each step is reweighted by
    pi_theta(a|s,g) / pi_theta'(a|s,g') and scored by the old policy's
    advantage under g. Exact mode is reached by passing the enumerated
    trajectory space with its probabilities as weights.
    """
    if not trajectories:
        raise ValueError("empty trajectory batch")
    if weights is None:
        weights = [1.0 / len(trajectories)] * len(trajectories)
    total = 0.0
    for traj, w in zip(trajectories, weights):
        g_prime = traj.desired_goal
        for g, pg in goal_dist.items():
            if pg == 0.0:
                continue
            acc = 0.0
            for tr in traj.transitions:
                num = float(theta.probs(tr.state, g)[tr.action])
                den = float(theta_prime.probs(tr.state, g_prime)[tr.action])
                acc += (num / den) * advantage_fn(tr.state, tr.t, tr.action, g)
            total += w * pg * acc
    return total


def _expected_advantage(
    occupancy: Mapping[tuple[State, int], float],
    theta: PolicyParams,
    goal: Goal,
    model: ExactModel,
) -> float:
    # sum over visited (s, t) of mass * E_{a ~ pi_theta(.|s,goal)} A(s,t,a)
    total = 0.0
    for (state, t), mass in occupancy.items():
        probs = theta.probs(state, goal)
        for a in range(theta.n_actions):
            total += mass * float(probs[a]) * model.advantage(state, t, a)
    return total


def surrogate_gap(
    env: Environment,
    theta: PolicyParams,
    theta_prime: PolicyParams,
    goal_dist: GoalDistribution,
    horizon: int,
    start_state: State,
    g_prime: Goal | None = None,
    gamma: float = 1.0,
    reward_mode: str = "plus_one_zero",
) -> float:
    """Visitation-mismatch term separating the surrogate from true improvement.

    For each goal g: the expected old-policy advantage of the new policy's
    actions, evaluated first under the data-collection visitation (old
    policy pursuing g') and then under the new policy's own visitation.
    Identical parameters and matching goals give exactly zero.
    """
    if g_prime is None:
        if len(goal_dist) != 1:
            raise ValueError("g_prime is required when goal_dist has several goals")
        g_prime = goal_dist.goals[0]
    occ_data = ExactModel(
        env, theta_prime, g_prime, start_state, horizon, gamma, reward_mode
    ).occupancy
    gap = 0.0
    for g, pg in goal_dist.items():
        if pg == 0.0:
            continue
        model_old = ExactModel(env, theta_prime, g, start_state, horizon, gamma, reward_mode)
        occ_new = ExactModel(env, theta, g, start_state, horizon, gamma, reward_mode).occupancy
        term_data = _expected_advantage(occ_data, theta, g, model_old)
        term_new = _expected_advantage(occ_new, theta, g, model_old)
        gap += pg * (term_data - term_new)
    return gap


@dataclass
class HpgConfig:
    batch_episodes: int = 16
    learning_rate: float = 2.0
    iterations: int = 200
    mode: str = "plain"
    baseline_decay: float = 0.99
    eval_episodes: int = 100
    seed: int = 0
    reward_mode: str = "plus_one_zero"
    ratio_cap: float | None = None

    def __post_init__(self):
        if self.batch_episodes < 1 or self.iterations < 0 or self.eval_episodes < 1:
            raise ValueError("counts must be positive")
        if self.mode not in ("plain", "baseline"):
            raise ValueError(f"unknown estimator mode {self.mode!r}")


@dataclass
class HpgIterationRecord:
    iteration: int
    success_rate: float
    grad_norm: float
    est_variance: float


@dataclass
class HpgTrainResult:
    records: list[HpgIterationRecord] = field(default_factory=list)
    theta: PolicyParams | None = None


def evaluate_policy(
    env: Environment, theta: PolicyParams, episodes: int, rng: np.random.Generator
) -> float:
    hits = 0
    for _ in range(episodes):
        traj = run_episode(env, theta.greedy, rng)
        hits += traj.success
    return hits / episodes


def batch_goal_support(trajectories: Sequence[Trajectory]) -> list[Goal]:
    """Original goals of the batch plus every distinct achieved goal."""
    support: dict[Goal, None] = {}
    for traj in trajectories:
        support.setdefault(traj.desired_goal)
    for traj in trajectories:
        for tr in traj.transitions:
            support.setdefault(tr.achieved_goal)
    return list(support)


def train_hpg(env: Environment, config: HpgConfig) -> HpgTrainResult:
    """Ascend the hindsight policy gradient; log greedy success per iteration."""
    rng_collect = substream(config.seed, "hpg_collect")
    theta = PolicyParams(env.n_actions)
    baseline = ValueBaseline(config.baseline_decay) if config.mode == "baseline" else None

    def sample_action(state: State, goal: Goal) -> Action:
        return int(rng_collect.choice(env.n_actions, p=theta.probs(state, goal)))

    result = HpgTrainResult(theta=theta)
    for it in range(1, config.iterations + 1):
        batch = [
            run_episode(env, sample_action, rng_collect)
            for _ in range(config.batch_episodes)
        ]
        goal_dist = GoalDistribution.uniform(batch_goal_support(batch))
        contribs = [
            trajectory_gradient(
                traj, goal_dist, theta, config.mode, baseline,
                config.reward_mode, config.ratio_cap,
            )
            for traj in batch
        ]
        grad: GradTable = {}
        for contrib in contribs:
            _grad_axpy(grad, contrib, 1.0 / len(contribs))
        if baseline is not None:
            _fit_baseline(baseline, batch, goal_dist, config.reward_mode)
        theta.add_scaled(grad, config.learning_rate)
        # fresh stream per evaluation: the same episodes every iteration, so
        # the curve moves only when the policy does
        success = evaluate_policy(
            env, theta, config.eval_episodes, substream(config.seed, "hpg_eval")
        )
        norms = [grad_norm(c) for c in contribs]
        mean_norm = sum(norms) / len(norms)
        variance = sum((x - mean_norm) ** 2 for x in norms) / len(norms)
        result.records.append(
            HpgIterationRecord(it, success, grad_norm(grad), variance)
        )
    return result


def _fit_baseline(
    baseline: ValueBaseline,
    batch: Sequence[Trajectory],
    goal_dist: GoalDistribution,
    reward_mode: str,
) -> None:
    # V(s||g) tracks the return observed after arriving at s under goal g.
    for traj in batch:
        for g, _ in goal_dist.items():
            rewards = [reward(tr.achieved_goal, g, reward_mode) for tr in traj.transitions]
            tail = 0.0
            for j in range(len(rewards) - 1, -1, -1):
                baseline.observe(traj.transitions[j].next_state, g, tail)
                tail += rewards[j]
