"""Experiment runner: JSON-configured training runs, strategy comparisons,
and sampler construction benchmarks, all logged as CSV.

Runs are bit-for-bit reproducible: every random draw flows from named
substreams of the config seed, and the CSV schema contains no wall-clock
fields (wall time is kept on the in-memory records only).
"""

from __future__ import annotations

import io
import math
import statistics
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

from .agent import AgentConfig, QFunction, epsilon_greedy, evaluate, update
from .envs import make_env, run_episode
from .hpg import HpgConfig, train_hpg
from .replay import (
    AnnealSchedule,
    GOAL_COUNT_MODES,
    HindsightConfig,
    PrioritizedReplay,
    ReplaySample,
    UniformReplayBuffer,
    actual_alternate_ratio,
    as_schedule,
    importance_weight,
    normalize_weights,
    sample_her,
)
from .rng import BlockRng, substream
from .sampler import PriorityHeap, build_buckets, extend_buckets_incremental

ALGOS = ("q_vanilla", "her", "hper", "hpg")
EVAL_EPISODES = 100
CSV_HEADER = "epoch,episodes_seen,success_rate,mean_abs_td,actual_alternate_ratio"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    env: str = "bitflip:8"
    algo: str = "her"
    strategy: str | None = None  # hper only: single_queue | two_queues
    replay_k: float | AnnealSchedule = 4.0
    batch_size: int = 64
    n_batches: int = 20
    epochs: int = 50
    episodes_per_epoch: int = 50
    goal_count_mode: str = "non_uniform"
    reward_mode: str = "plus_one_zero"
    td_mode: str = "max_action"
    beta_schedule: AnnealSchedule | None = None  # default: linear 0.4 -> 1.0
    gamma: float = 0.98
    epsilon: float | AnnealSchedule = 0.2
    learning_rate: float = 0.5
    buffer_capacity: int = 200_000
    seed: int = 0
    horizon: int | None = None  # None: env default (n for bitflip, 2k for grid)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.algo not in ALGOS:
            raise ConfigError(f"unknown algo {self.algo!r} (expected one of {ALGOS})")
        if self.algo == "hper":
            if self.strategy not in ("single_queue", "two_queues"):
                raise ConfigError("hper needs strategy single_queue or two_queues")
        elif self.strategy is not None:
            raise ConfigError(f"strategy is only valid for hper, not {self.algo!r}")
        for name in ("batch_size", "n_batches", "episodes_per_epoch", "buffer_capacity"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.goal_count_mode not in GOAL_COUNT_MODES:
            raise ConfigError(f"unknown goal_count_mode {self.goal_count_mode!r}")
        if isinstance(self.replay_k, (int, float)) and self.replay_k < 0:
            raise ConfigError("replay_k must be >= 0")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must be in [0, 1]")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if isinstance(self.epsilon, (int, float)) and not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon must be in [0, 1]")
        make_env(self.env, self.horizon)  # raises on a bad env string

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        kwargs = dict(data)
        for key in ("replay_k", "epsilon", "beta_schedule"):
            if isinstance(kwargs.get(key), dict):
                kwargs[key] = _schedule_from_dict(kwargs[key])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, AnnealSchedule):
                value = {
                    "kind": value.kind,
                    "start": value.start,
                    "end": value.end,
                    "total_steps": value.total_steps,
                }
            out[f.name] = value
        return out


def _schedule_from_dict(data: dict) -> AnnealSchedule:
    allowed = {"kind", "start", "end", "total_steps"}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown schedule fields: {sorted(unknown)}")
    try:
        return AnnealSchedule(
            kind=data["kind"],
            start=float(data["start"]),
            end=float(data["end"]),
            total_steps=int(data.get("total_steps", 1)),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad schedule: {exc}") from None


@dataclass
class EpochRecord:
    epoch: int
    episodes_seen: int
    success_rate: float
    mean_abs_td: float
    actual_alternate_ratio: float
    wall_time_s: float  # kept on the record, never written to CSV


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[EpochRecord] = field(default_factory=list)
    csv_text: str = ""
    csv_path: Path | None = None
    curve_csv: str | None = None  # per-iteration curve, hpg runs only
    q_table_csv: str | None = None


def _fmt(x: float) -> str:
    return format(x, ".12g")


def records_csv(records: Sequence[EpochRecord]) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for r in records:
        buf.write(
            f"{r.epoch},{r.episodes_seen},{_fmt(r.success_rate)},"
            f"{_fmt(r.mean_abs_td)},{_fmt(r.actual_alternate_ratio)}\n"
        )
    return buf.getvalue()


def run_filename(config: ExperimentConfig) -> str:
    env_tag = config.env.replace(":", "-")
    return f"{config.algo}_{env_tag}_seed{config.seed}.csv"


def run_experiment(
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
    stop_threshold: float | None = None,
    on_batch: Callable[[int, int, list[ReplaySample]], None] | None = None,
    dump_q: bool = False,
) -> ExperimentResult:
    """Train under the configured strategy; one EpochRecord per epoch.

    `stop_threshold` ends the run early once the evaluated success rate
    reaches it (the triggering epoch is still recorded). `on_batch` sees
    every prioritized sample batch, for instrumentation.
    """
    config.validate()
    if config.algo == "hpg":
        result = _run_hpg(config)
    else:
        result = _run_replay(config, stop_threshold, on_batch, dump_q)
    result.csv_text = records_csv(result.records)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / run_filename(config)
        path.write_text(result.csv_text)
        result.csv_path = path
        if result.curve_csv is not None:
            (out_dir / (path.stem + "_curve.csv")).write_text(result.curve_csv)
        if result.q_table_csv is not None:
            (out_dir / (path.stem + "_qtable.csv")).write_text(result.q_table_csv)
    return result


def _run_replay(
    config: ExperimentConfig,
    stop_threshold: float | None,
    on_batch: Callable | None,
    dump_q: bool,
) -> ExperimentResult:
    env = make_env(config.env, config.horizon)
    qfun = QFunction()
    agent_cfg = AgentConfig(
        gamma=config.gamma, epsilon=0.0, learning_rate=config.learning_rate
    )
    # block-buffered adapters: collection makes millions of scalar draws
    env_rng = BlockRng(substream(config.seed, "env"))
    sampler_rng = substream(config.seed, "sampler")
    agent_rng = BlockRng(substream(config.seed, "agent"))

    # q_vanilla is exactly the HER path with no relabeling.
    replay_k = 0.0 if config.algo == "q_vanilla" else config.replay_k
    rk_sched = as_schedule(replay_k, config.epochs)
    eps_sched = as_schedule(config.epsilon, config.epochs)
    total_steps = max(config.epochs * config.n_batches, 1)
    beta_sched = config.beta_schedule or AnnealSchedule("linear", 0.4, 1.0, total_steps)

    prioritized: PrioritizedReplay | None = None
    buffer: UniformReplayBuffer | None = None
    if config.algo == "hper":
        hins = HindsightConfig(
            replay_k=rk_sched.value(0),
            strategy=config.strategy or "single_queue",
            goal_count_mode=config.goal_count_mode,
            reward_mode=config.reward_mode,
            td_mode=config.td_mode,
        )
        prioritized = PrioritizedReplay(
            hins, config.buffer_capacity, env.n_actions, config.gamma
        )
    else:
        buffer = UniformReplayBuffer(config.buffer_capacity)

    result = ExperimentResult(config)
    episodes_seen = 0
    global_step = 0
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        rk = rk_sched.value(epoch - 1)
        eps = eps_sched.value(epoch - 1)

        if eps >= 1.0:
            # fully random phase: skip the greedy machinery
            n_actions = env.n_actions

            def behavior(state, goal):
                return int(agent_rng.random() * n_actions)

        else:

            def behavior(state, goal):
                return epsilon_greedy(qfun, state, goal, eps, agent_rng, env.n_actions)

        for _ in range(config.episodes_per_epoch):
            traj = run_episode(env, behavior, env_rng)
            episodes_seen += 1
            if prioritized is not None:
                prioritized.store_episode(traj, qfun, sampler_rng, rk)
            else:
                assert buffer is not None
                buffer.store_episode(traj)
        if prioritized is not None:
            prioritized.rebalance()

        abs_tds: list[float] = []
        ratios: list[float] = []
        for b in range(config.n_batches):
            if prioritized is not None:
                if not prioritized.ready(config.batch_size, rk):
                    break
                samples = prioritized.sample(config.batch_size, rk, sampler_rng)
                beta = beta_sched.value(global_step)
                weights = normalize_weights(
                    [importance_weight(s.probability, s.queue_size, beta) for s in samples]
                )
                new_abs = update(
                    qfun,
                    list(zip((s.rt for s in samples), weights)),
                    agent_cfg,
                    env.n_actions,
                    config.td_mode,
                )
                prioritized.update_priorities(samples, new_abs)
                if config.strategy == "two_queues":
                    n_act = sum(1 for s in samples if s.queue_tag == "actual")
                    ratios.append(n_act / max(1, len(samples) - n_act))
                else:
                    ratios.append(actual_alternate_ratio([s.rt for s in samples]))
                if on_batch is not None:
                    on_batch(epoch, b, samples)
            else:
                assert buffer is not None
                if len(buffer) == 0:
                    break
                rts = sample_her(
                    buffer, config.batch_size, rk, sampler_rng, config.reward_mode
                )
                new_abs = update(
                    qfun,
                    [(rt, 1.0) for rt in rts],
                    agent_cfg,
                    env.n_actions,
                    config.td_mode,
                    refresh=False,  # no priorities to refresh on the uniform path
                )
                ratios.append(actual_alternate_ratio(rts))
            abs_tds.extend(new_abs)
            global_step += 1

        # paired evaluation: the same 100 episodes every epoch
        success = evaluate(env, qfun, EVAL_EPISODES, substream(config.seed, "eval"))
        result.records.append(
            EpochRecord(
                epoch=epoch,
                episodes_seen=episodes_seen,
                success_rate=success,
                mean_abs_td=sum(abs_tds) / len(abs_tds) if abs_tds else 0.0,
                actual_alternate_ratio=sum(ratios) / len(ratios) if ratios else 0.0,
                wall_time_s=time.perf_counter() - t0,
            )
        )
        if stop_threshold is not None and success >= stop_threshold:
            break
    if dump_q:
        result.q_table_csv = qfun.dump_csv()
    return result


def _run_hpg(config: ExperimentConfig) -> ExperimentResult:
    env = make_env(config.env, config.horizon)
    rk = config.replay_k
    if isinstance(rk, AnnealSchedule):
        raise ConfigError("hpg does not use replay_k schedules")
    hpg_cfg = HpgConfig(
        batch_episodes=config.episodes_per_epoch,
        learning_rate=config.learning_rate,
        iterations=config.epochs * config.n_batches,
        mode="plain",
        eval_episodes=EVAL_EPISODES,
        seed=config.seed,
        reward_mode=config.reward_mode,
    )
    trained = train_hpg(env, hpg_cfg)
    result = ExperimentResult(config)
    episodes_seen = 0
    t0 = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        block = trained.records[(epoch - 1) * config.n_batches : epoch * config.n_batches]
        if not block:
            break
        episodes_seen += config.episodes_per_epoch * len(block)
        result.records.append(
            EpochRecord(
                epoch=epoch,
                episodes_seen=episodes_seen,
                success_rate=block[-1].success_rate,
                mean_abs_td=0.0,
                actual_alternate_ratio=0.0,
                wall_time_s=time.perf_counter() - t0,
            )
        )
        t0 = time.perf_counter()
    buf = io.StringIO()
    buf.write("iteration,success_rate,grad_norm,est_variance\n")
    for r in trained.records:
        buf.write(
            f"{r.iteration},{_fmt(r.success_rate)},{_fmt(r.grad_norm)},{_fmt(r.est_variance)}\n"
        )
    result.curve_csv = buf.getvalue()
    return result


@dataclass
class CompareReport:
    threshold: float
    seeds: list[int]
    epochs_a: list[int]  # -1 encodes "never reached"
    epochs_b: list[int]
    median_a: float
    median_b: float
    wins_a: int
    wins_b: int
    ties: int
    differing_fields: list[str]
    csv_text: str


def _epochs_to_threshold(records: Sequence[EpochRecord], threshold: float) -> int:
    for r in records:
        if r.success_rate >= threshold:
            return r.epoch
    return -1


def _median(values: Sequence[int]) -> float:
    as_float = [math.inf if v < 0 else float(v) for v in values]
    med = statistics.median(as_float)
    return -1.0 if math.isinf(med) else med


def compare_strategies(
    config_a: ExperimentConfig,
    config_b: ExperimentConfig,
    seeds: Sequence[int],
    threshold: float,
    out_dir: str | Path | None = None,
    allowed_diff: Sequence[str] | None = None,
) -> CompareReport:
    """Per-seed epochs-to-threshold for two configs; -1 means never reached."""
    if not seeds:
        raise ConfigError("need at least one seed")
    diff = [
        name
        for name, va in config_a.to_dict().items()
        if va != config_b.to_dict()[name]
    ]
    if allowed_diff is not None and not set(diff) <= set(allowed_diff):
        raise ConfigError(
            f"configs differ in {sorted(set(diff) - set(allowed_diff))}, "
            f"beyond the declared fields {sorted(allowed_diff)}"
        )
    epochs_a: list[int] = []
    epochs_b: list[int] = []
    for seed in seeds:
        res_a = run_experiment(replace(config_a, seed=seed), stop_threshold=threshold)
        res_b = run_experiment(replace(config_b, seed=seed), stop_threshold=threshold)
        epochs_a.append(_epochs_to_threshold(res_a.records, threshold))
        epochs_b.append(_epochs_to_threshold(res_b.records, threshold))
    wins_a = wins_b = ties = 0
    for ea, eb in zip(epochs_a, epochs_b):
        fa = math.inf if ea < 0 else ea
        fb = math.inf if eb < 0 else eb
        if fa < fb:
            wins_a += 1
        elif fb < fa:
            wins_b += 1
        else:
            ties += 1
    buf = io.StringIO()
    buf.write("seed,epochs_to_threshold_a,epochs_to_threshold_b\n")
    for seed, ea, eb in zip(seeds, epochs_a, epochs_b):
        buf.write(f"{seed},{ea},{eb}\n")
    report = CompareReport(
        threshold=threshold,
        seeds=list(seeds),
        epochs_a=epochs_a,
        epochs_b=epochs_b,
        median_a=_median(epochs_a),
        median_b=_median(epochs_b),
        wins_a=wins_a,
        wins_b=wins_b,
        ties=ties,
        differing_fields=diff,
        csv_text=buf.getvalue(),
    )
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "comparison.csv").write_text(report.csv_text)
    return report


@dataclass
class BenchReport:
    max_size: int
    batch_size: int
    growth_step: int
    scratch_total_ns: int
    incremental_total_ns: int
    speedup: float
    boundaries_identical: bool
    csv_text: str


def bench_sampler(
    max_size: int,
    batch_size: int,
    growth_step: int,
    alpha: float = 1.0,
    seed: int = 0,
) -> BenchReport:
    """Time bucket-table maintenance while a heap grows.

    At each growth step the table is rebuilt from scratch and also extended
    incrementally; both must agree bit-for-bit, and the report carries the
    cumulative times and their ratio.
    """
    if max_size < 1 or batch_size < 1 or growth_step < 1:
        raise ConfigError("sizes must be positive")
    rng = substream(seed, "bench")
    heap = PriorityHeap(capacity=None, rebalance_every=0)
    rows: list[tuple[int, str, int]] = []
    scratch_total = 0
    incr_total = 0
    identical = True
    incr_table = None
    for n in range(growth_step, max_size + 1, growth_step):
        while len(heap) < n:
            heap.push(None, float(rng.random()))
        if n < batch_size:
            continue  # cannot stratify yet
        t0 = time.perf_counter_ns()
        scratch = build_buckets(n, batch_size, alpha)
        scratch_ns = time.perf_counter_ns() - t0
        t0 = time.perf_counter_ns()
        if incr_table is None:
            incr_table = build_buckets(n, batch_size, alpha)
        else:
            incr_table = extend_buckets_incremental(incr_table, n)
        incr_ns = time.perf_counter_ns() - t0
        if scratch.boundaries != incr_table.boundaries:
            identical = False
        rows.append((n, "scratch", scratch_ns))
        rows.append((n, "incremental", incr_ns))
        scratch_total += scratch_ns
        incr_total += incr_ns
    buf = io.StringIO()
    buf.write("structure_size,build_mode,wall_time_ns\n")
    for size, mode, ns in rows:
        buf.write(f"{size},{mode},{ns}\n")
    return BenchReport(
        max_size=max_size,
        batch_size=batch_size,
        growth_step=growth_step,
        scratch_total_ns=scratch_total,
        incremental_total_ns=incr_total,
        speedup=scratch_total / incr_total if incr_total else float("inf"),
        boundaries_identical=identical,
        csv_text=buf.getvalue(),
    )
