"""Acceptance suite: one test per criterion, each printing a PASS line.

Multi-seed sweeps run in a process pool (runs are fully independent); every
tolerance is pinned here, none deferred. Run with `-s` to see the lines.
"""

from __future__ import annotations

import math
import time
from multiprocessing import Pool, cpu_count

import numpy as np
import pytest

from hindsight_lab.envs import make_env
from hindsight_lab.harness import (
    ExperimentConfig,
    bench_sampler,
    compare_strategies,
    run_experiment,
)
from hindsight_lab.hpg import (
    ExactModel,
    GoalDistribution,
    HpgConfig,
    PolicyParams,
    exact_advantage_fn,
    exact_performance,
    finite_diff_grad,
    grad_norm,
    hpg_estimate,
    surrogate_L,
    surrogate_gap,
    train_hpg,
)
from hindsight_lab.replay import AnnealSchedule, importance_weight
from hindsight_lab.rng import substream
from hindsight_lab.sampler import (
    PriorityHeap,
    build_buckets,
    rank_probability,
    stratified_ranks,
)

WORKERS = max(2, min(4, cpu_count()))

# --- shared experiment configs (hyperparameters pinned for the analogs) ---

BITFLIP10 = dict(
    env="bitflip:10",
    epochs=100,  # within the 150-epoch allowance
    episodes_per_epoch=8000,
    n_batches=150,
    batch_size=1024,
    learning_rate=1.0,
    gamma=0.9,
    epsilon=1.0,  # fully random collection maximizes far-pair coverage
    buffer_capacity=80_000,
)

GRID8 = dict(
    env="grid:8",
    algo="hper",
    epochs=100,
    episodes_per_epoch=150,
    n_batches=75,
    batch_size=128,
    learning_rate=1.0,
    gamma=0.95,
    epsilon=AnnealSchedule("linear", 1.0, 0.25, 30),
    buffer_capacity=700_000,
)


def _report(number: int, name: str, ok: bool, detail: str) -> None:
    print(f"criterion {number:02d} [{name}]: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {number} {name}: {detail}"


def _her_seed(seed: int):
    cfg = ExperimentConfig(algo="her", replay_k=4.0, seed=seed, **BITFLIP10)
    res = run_experiment(cfg, stop_threshold=0.9)
    return max(r.success_rate for r in res.records)


def _vanilla_seed(seed: int):
    cfg = ExperimentConfig(algo="q_vanilla", seed=seed, **BITFLIP10)
    res = run_experiment(cfg)
    return max(r.success_rate for r in res.records)


def _grid_single_queue_seed(seed: int):
    cfg = ExperimentConfig(strategy="single_queue", seed=seed, **GRID8)
    res = run_experiment(cfg, stop_threshold=1.0)
    return max(r.success_rate for r in res.records)


def _grid_compare_seed(args):
    seed, overrides = args
    cfg = ExperimentConfig(seed=seed, **{**GRID8, **overrides})
    res = run_experiment(cfg, stop_threshold=0.95)
    for r in res.records:
        if r.success_rate >= 0.95:
            return r.epoch
    return -1


def _hpg_seed(seed: int):
    env = make_env("bitflip:3")
    cfg = HpgConfig(batch_episodes=16, learning_rate=2.0, iterations=500, seed=seed)
    res = train_hpg(env, cfg)
    for r in res.records:
        if r.success_rate >= 0.9:
            return r.iteration
    return -1


def _as_inf(value: float) -> float:
    return math.inf if value < 0 else value


# ------------------------------------------------------------------ 1


def test_01_importance_sampling_unbiasedness():
    t0 = time.perf_counter()
    rng = substream(1001, "acceptance-is")
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 513))
        probs = rng.random(n) + 1e-3
        probs = probs / probs.sum()
        xs = rng.uniform(-1.0, 1.0, size=n)
        total = 0.0
        for p, x in zip(probs, xs):
            total += p * importance_weight(float(p), n, 1.0) * float(x)
        worst = max(worst, abs(total - xs.mean()))
    elapsed = time.perf_counter() - t0
    _report(
        1,
        "IS unbiasedness",
        worst <= 1e-12 and elapsed < 1.0,
        f"max |error| = {worst:.2e}, {elapsed:.2f}s",
    )


# ------------------------------------------------------------------ 2


def test_02_sampler_distribution():
    t0 = time.perf_counter()
    n, k, draws_target = 128, 32, 200_000
    rng = substream(1002, "acceptance-sampler")
    heap = PriorityHeap()
    for i in range(n):
        heap.push(i, float(rng.random()))
    heap.rebalance()
    table = build_buckets(n, k, 1.0)
    counts = np.zeros(n + 1)
    draws = 0
    while draws < draws_target:
        for r in stratified_ranks(table, rng):
            counts[r] += 1
        draws += k
    freq = counts[1:] / draws
    expected = np.array([rank_probability(r, n, 1.0) for r in range(1, n + 1)])
    l1 = float(np.abs(freq - expected).sum())
    elapsed = time.perf_counter() - t0
    _report(2, "sampler distribution", l1 < 0.02 and elapsed < 10.0,
            f"L1 = {l1:.4f} over {draws} draws, {elapsed:.1f}s")


# ------------------------------------------------------------------ 3


def test_03_incremental_bucket_construction():
    t0 = time.perf_counter()
    report = bench_sampler(max_size=100_000, batch_size=256, growth_step=100)
    elapsed = time.perf_counter() - t0
    ok = report.boundaries_identical and report.speedup >= 100.0 and elapsed < 120.0
    _report(
        3,
        "incremental bucket tables",
        ok,
        f"identical={report.boundaries_identical}, speedup={report.speedup:.0f}x, "
        f"{elapsed:.1f}s",
    )


# ------------------------------------------------------------------ 4


def test_04_her_efficacy_analog():
    t0 = time.perf_counter()
    with Pool(WORKERS) as pool:
        her_best = pool.map(_her_seed, range(5))
        vanilla_best = pool.map(_vanilla_seed, range(5))
    her_median = float(np.median(her_best))
    vanilla_median = float(np.median(vanilla_best))
    elapsed = time.perf_counter() - t0
    ok = her_median >= 0.9 and vanilla_median <= 0.2 and elapsed < 600.0
    _report(
        4,
        "HER efficacy",
        ok,
        f"her median {her_median:.2f} {her_best}, vanilla median "
        f"{vanilla_median:.2f} {vanilla_best}, {elapsed:.0f}s",
    )


# ------------------------------------------------------------------ 5


def test_05_hper_single_queue_grid():
    t0 = time.perf_counter()
    with Pool(WORKERS) as pool:
        best = pool.map(_grid_single_queue_seed, range(5))
    hits = sum(b >= 1.0 for b in best)
    elapsed = time.perf_counter() - t0
    ok = hits >= 4 and elapsed < 600.0
    _report(5, "single_queue reaches 1.0", ok,
            f"{hits}/5 seeds at 1.0, best={best}, {elapsed:.0f}s")


# ------------------------------------------------------------------ 6


def test_06_non_uniform_goal_counts_faster():
    t0 = time.perf_counter()
    seeds = range(5)
    jobs_a = [(s, {"strategy": "single_queue", "goal_count_mode": "non_uniform"}) for s in seeds]
    jobs_b = [(s, {"strategy": "single_queue", "goal_count_mode": "uniform_fixed"}) for s in seeds]
    with Pool(WORKERS) as pool:
        epochs_a = pool.map(_grid_compare_seed, jobs_a)
        epochs_b = pool.map(_grid_compare_seed, jobs_b)
    med_a = float(np.median([_as_inf(e) for e in epochs_a]))
    med_b = float(np.median([_as_inf(e) for e in epochs_b]))
    elapsed = time.perf_counter() - t0
    _report(
        6,
        "non_uniform <= uniform_fixed",
        med_a <= med_b,
        f"median epochs-to-0.95: non_uniform {med_a} {epochs_a} vs "
        f"uniform {med_b} {epochs_b}, {elapsed:.0f}s",
    )


# ------------------------------------------------------------------ 7


def test_07_single_queue_faster_than_two_queues():
    t0 = time.perf_counter()
    seeds = range(5)
    jobs_a = [(s, {"strategy": "single_queue"}) for s in seeds]
    jobs_b = [(s, {"strategy": "two_queues"}) for s in seeds]
    with Pool(WORKERS) as pool:
        epochs_a = pool.map(_grid_compare_seed, jobs_a)
        epochs_b = pool.map(_grid_compare_seed, jobs_b)
    med_a = float(np.median([_as_inf(e) for e in epochs_a]))
    med_b = float(np.median([_as_inf(e) for e in epochs_b]))
    elapsed = time.perf_counter() - t0
    _report(
        7,
        "single_queue <= two_queues",
        med_a <= med_b,
        f"median epochs-to-0.95: single {med_a} {epochs_a} vs "
        f"two {med_b} {epochs_b}, {elapsed:.0f}s",
    )


# ------------------------------------------------------------------ 8


def _seeded_policy(env, goals, scale, seed):
    theta = PolicyParams(env.n_actions)
    rng = substream(seed, "acceptance-theta")
    for s in env.all_states():
        for g in goals:
            theta.logits(s, g)[:] = scale * rng.standard_normal(env.n_actions)
    return theta


def _grad_distance(a, b, n_actions):
    keys = set(a) | set(b)
    total = 0.0
    for key in keys:
        va = a.get(key, np.zeros(n_actions))
        vb = b.get(key, np.zeros(n_actions))
        total += float(np.sum((va - vb) ** 2))
    return math.sqrt(total)


def test_08_hpg_gradient_matches_finite_differences():
    t0 = time.perf_counter()
    env = make_env("bitflip:2", horizon=2)
    start, gp = (0, 0), (0, 1)
    theta = _seeded_policy(env, [gp], 0.6, 1008)
    model = ExactModel(env, theta, gp, start, 2)
    estimate = hpg_estimate(
        model.trajectories, GoalDistribution.point(gp), theta,
        weights=model.probabilities,
    )
    fd = finite_diff_grad(
        lambda t: exact_performance(
            env, t, GoalDistribution.point(gp), 2, 1.0, start_state=start
        ),
        theta,
        1e-5,
    )
    rel = _grad_distance(estimate, fd, env.n_actions) / grad_norm(fd)
    elapsed = time.perf_counter() - t0
    _report(8, "HPG gradient vs finite differences",
            rel <= 1e-4 and elapsed < 5.0, f"relative error {rel:.2e}, {elapsed:.1f}s")


# ------------------------------------------------------------------ 9


def test_09_surrogate_first_order_equivalence_and_gap():
    t0 = time.perf_counter()
    env = make_env("bitflip:2", horizon=3)
    start, gp = (0, 0), (0, 1)
    theta = _seeded_policy(env, [gp], 0.5, 1009)
    model = ExactModel(env, theta, gp, start, 3)
    goal_dist = GoalDistribution.point(gp)
    adv = exact_advantage_fn(env, theta, [gp], start, 3)
    delta_hpg = hpg_estimate(
        model.trajectories, goal_dist, theta, weights=model.probabilities
    )
    fd = finite_diff_grad(
        lambda t: surrogate_L(
            t, theta, model.trajectories, goal_dist, adv,
            weights=model.probabilities,
        ),
        theta,
        1e-5,
    )
    rel = _grad_distance(fd, delta_hpg, env.n_actions) / grad_norm(delta_hpg)
    gap = surrogate_gap(env, theta, theta, goal_dist, 3, start)
    elapsed = time.perf_counter() - t0
    ok = rel <= 1e-4 and abs(gap) <= 1e-10 and elapsed < 10.0
    _report(9, "surrogate first-order + gap", ok,
            f"relative error {rel:.2e}, gap {gap:.2e}, {elapsed:.1f}s")


# ------------------------------------------------------------------ 10


def test_10_hpg_training_analog():
    t0 = time.perf_counter()
    with Pool(WORKERS) as pool:
        iters = pool.map(_hpg_seed, range(5))
    hits = sum(i > 0 for i in iters)
    elapsed = time.perf_counter() - t0
    ok = hits >= 4 and elapsed < 300.0
    _report(10, "HPG training", ok,
            f"{hits}/5 seeds reach 0.9, iterations-to-0.9 {iters}, {elapsed:.0f}s")


# ------------------------------------------------------------------ 11


def test_11_determinism():
    cfg = dict(
        env="bitflip:6", algo="her", epochs=6, episodes_per_epoch=40,
        n_batches=10, batch_size=64, seed=17,
    )
    a = run_experiment(ExperimentConfig(**cfg))
    b = run_experiment(ExperimentConfig(**cfg))
    ok = a.csv_text == b.csv_text and a.csv_text.encode() == b.csv_text.encode()
    _report(11, "byte-identical reruns", ok, f"{len(a.csv_text)} bytes compared")


# ------------------------------------------------------------------ 12


def test_12_degeneracy_and_quota():
    base = dict(
        env="bitflip:6", epochs=6, episodes_per_epoch=40,
        n_batches=10, batch_size=64, seed=23,
    )
    her = run_experiment(ExperimentConfig(algo="her", replay_k=0.0, **base))
    vanilla = run_experiment(ExperimentConfig(algo="q_vanilla", **base))
    identical = her.csv_text == vanilla.csv_text

    compositions = []

    def on_batch(epoch, b, samples):
        tags = [s.queue_tag for s in samples]
        compositions.append((tags.count("actual"), tags.count("alternate")))

    quota_cfg = ExperimentConfig(
        algo="hper", strategy="two_queues", replay_k=4.0,
        env="grid:5", epochs=8, episodes_per_epoch=40,
        n_batches=12, batch_size=60, seed=23,
    )
    run_experiment(quota_cfg, on_batch=on_batch)
    expected = (12, 48)  # floor(60 / (1+4)) = 12
    quota_ok = bool(compositions) and all(c == expected for c in compositions)
    ok = identical and quota_ok
    _report(
        12,
        "replay_k=0 degeneracy + two-queue quota",
        ok,
        f"rk0==vanilla: {identical}; {len(compositions)} batches all at "
        f"{expected}: {quota_ok}",
    )
