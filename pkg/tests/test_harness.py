from __future__ import annotations

import json

import pytest

from hindsight_lab.harness import (
    CSV_HEADER,
    ConfigError,
    ExperimentConfig,
    bench_sampler,
    compare_strategies,
    records_csv,
    run_experiment,
    run_filename,
)
from hindsight_lab.replay import AnnealSchedule


def tiny(**overrides) -> ExperimentConfig:
    base = dict(
        env="bitflip:3",
        algo="her",
        epochs=4,
        episodes_per_epoch=10,
        n_batches=5,
        batch_size=16,
        seed=11,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


# ---------------------------------------------------------------- config


def test_config_validation_messages():
    with pytest.raises(ConfigError, match="algo"):
        tiny(algo="dqn")
    with pytest.raises(ConfigError, match="strategy"):
        tiny(algo="hper")
    with pytest.raises(ConfigError, match="strategy"):
        tiny(algo="her", strategy="two_queues")
    with pytest.raises(ConfigError, match="batch_size"):
        tiny(batch_size=0)
    with pytest.raises(ValueError):
        tiny(env="bitflip")
    with pytest.raises(ConfigError, match="gamma"):
        tiny(gamma=1.5)


def test_config_dict_round_trip():
    cfg = tiny(epsilon=AnnealSchedule("linear", 1.0, 0.2, 10))
    data = cfg.to_dict()
    assert data["epsilon"] == {
        "kind": "linear",
        "start": 1.0,
        "end": 0.2,
        "total_steps": 10,
    }
    again = ExperimentConfig.from_dict(json.loads(json.dumps(data)))
    assert again.to_dict() == data


def test_config_rejects_unknown_fields():
    with pytest.raises(ConfigError, match="unknown config fields"):
        ExperimentConfig.from_dict({"env": "bitflip:3", "algo": "her", "oops": 1})
    with pytest.raises(ConfigError, match="schedule"):
        ExperimentConfig.from_dict(
            {"env": "bitflip:3", "algo": "her", "epsilon": {"kind": "linear"}}
        )


def test_run_filename():
    assert run_filename(tiny()) == "her_bitflip-3_seed11.csv"


# ---------------------------------------------------------------- run_experiment


def test_run_experiment_records_and_csv(tmp_path):
    res = run_experiment(tiny(), out_dir=tmp_path)
    assert len(res.records) == 4
    lines = res.csv_text.splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 5
    assert res.csv_path is not None and res.csv_path.read_text() == res.csv_text
    for r in res.records:
        assert 0.0 <= r.success_rate <= 1.0
        assert r.episodes_seen > 0
        assert r.wall_time_s >= 0.0
    assert "wall_time" not in res.csv_text


def test_zero_epochs_header_only(tmp_path):
    res = run_experiment(tiny(epochs=0), out_dir=tmp_path)
    assert res.records == []
    assert res.csv_text == CSV_HEADER + "\n"
    assert res.csv_path.read_text() == CSV_HEADER + "\n"


def test_byte_identical_reruns():
    a = run_experiment(tiny())
    b = run_experiment(tiny())
    assert a.csv_text == b.csv_text


def test_her_replay_k_zero_equals_vanilla():
    her = run_experiment(tiny(algo="her", replay_k=0.0))
    vanilla = run_experiment(tiny(algo="q_vanilla", replay_k=0.0))
    assert her.csv_text == vanilla.csv_text
    # and the vanilla path ignores whatever replay_k was configured
    vanilla2 = run_experiment(tiny(algo="q_vanilla", replay_k=4.0))
    assert vanilla2.csv_text == vanilla.csv_text


def test_two_queues_quota_every_batch_and_epoch():
    compositions = []

    def on_batch(epoch, b, samples):
        tags = [s.queue_tag for s in samples]
        compositions.append((tags.count("actual"), tags.count("alternate")))

    cfg = tiny(
        algo="hper",
        strategy="two_queues",
        epochs=3,
        episodes_per_epoch=30,
        batch_size=20,
        replay_k=4.0,
    )
    res = run_experiment(cfg, on_batch=on_batch)
    assert compositions, "no prioritized batches were sampled"
    assert all(c == (4, 16) for c in compositions)  # floor(20/5) = 4
    for r in res.records:
        assert r.actual_alternate_ratio == pytest.approx(4 / 16)


def test_single_queue_run_logs_drifting_ratio():
    cfg = tiny(algo="hper", strategy="single_queue", epochs=3, episodes_per_epoch=30)
    res = run_experiment(cfg)
    assert all(r.actual_alternate_ratio >= 0.0 for r in res.records)


def test_stop_threshold_stops_early():
    cfg = tiny(epochs=50, episodes_per_epoch=50, n_batches=20, learning_rate=1.0)
    res = run_experiment(cfg, stop_threshold=0.5)
    assert res.records[-1].success_rate >= 0.5
    assert len(res.records) < 50


def test_hpg_algo_writes_curve():
    cfg = tiny(env="bitflip:2", algo="hpg", epochs=2, n_batches=3, episodes_per_epoch=6)
    res = run_experiment(cfg)
    assert len(res.records) == 2
    assert res.curve_csv is not None
    lines = res.curve_csv.splitlines()
    assert lines[0] == "iteration,success_rate,grad_norm,est_variance"
    assert len(lines) == 7  # epochs * n_batches iterations
    assert res.csv_text == records_csv(res.records)


def test_trajectory_action_td_mode_runs():
    res = run_experiment(tiny(td_mode="trajectory_action"))
    assert len(res.records) == 4


def test_annealed_replay_k_runs():
    cfg = tiny(replay_k=AnnealSchedule("linear", 8.0, 2.0, 4))
    res = run_experiment(cfg)
    assert len(res.records) == 4


# ---------------------------------------------------------------- compare


def test_compare_identical_configs_all_ties():
    cfg = tiny(epochs=3)
    report = compare_strategies(cfg, tiny(epochs=3), seeds=[0, 1, 2], threshold=0.9)
    assert report.epochs_a == report.epochs_b
    assert report.ties == 3 and report.wins_a == 0 and report.wins_b == 0
    assert report.differing_fields == []
    lines = report.csv_text.splitlines()
    assert lines[0] == "seed,epochs_to_threshold_a,epochs_to_threshold_b"
    assert len(lines) == 4


def test_compare_never_reaching_encodes_minus_one(tmp_path):
    cfg = tiny(epochs=2, learning_rate=0.01, epsilon=1.0)
    report = compare_strategies(cfg, cfg, seeds=[5], threshold=0.999, out_dir=tmp_path)
    assert report.epochs_a == [-1] and report.epochs_b == [-1]
    assert report.median_a == -1.0
    assert (tmp_path / "comparison.csv").read_text() == report.csv_text


def test_compare_allowed_diff_enforced():
    cfg_a = tiny()
    cfg_b = tiny(learning_rate=0.25)
    report = compare_strategies(
        cfg_a, cfg_b, seeds=[0], threshold=0.9, allowed_diff=["learning_rate"]
    )
    assert report.differing_fields == ["learning_rate"]
    with pytest.raises(ConfigError, match="beyond the declared fields"):
        compare_strategies(cfg_a, cfg_b, seeds=[0], threshold=0.9, allowed_diff=["seed"])


# ---------------------------------------------------------------- bench


def test_bench_single_step_ratio_near_one():
    report = bench_sampler(512, 64, 512)
    assert report.boundaries_identical
    assert 0.05 < report.speedup < 20.0  # single build in both modes
    lines = report.csv_text.splitlines()
    assert lines[0] == "structure_size,build_mode,wall_time_ns"
    assert len(lines) == 3


def test_bench_equality_and_speedup_small_sweep():
    report = bench_sampler(4000, 64, 50)
    assert report.boundaries_identical
    assert report.speedup > 5.0
    rows = [line.split(",") for line in report.csv_text.splitlines()[1:]]
    sizes = sorted({int(r[0]) for r in rows})
    assert sizes[0] >= 64 and sizes[-1] == 4000


def test_bench_validates_sizes():
    with pytest.raises(ConfigError):
        bench_sampler(0, 10, 10)
