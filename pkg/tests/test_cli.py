from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from hindsight_lab.cli import main

TINY = {
    "env": "bitflip:3",
    "algo": "her",
    "epochs": 3,
    "episodes_per_epoch": 10,
    "n_batches": 4,
    "batch_size": 16,
    "seed": 7,
}


@pytest.fixture
def runner():
    return CliRunner()


def write_config(tmp_path, name="config.json", **overrides):
    path = tmp_path / name
    path.write_text(json.dumps(dict(TINY, **overrides)))
    return path


def test_train_writes_csv(tmp_path, runner):
    cfg = write_config(tmp_path)
    result = runner.invoke(
        main, ["train", "--config", str(cfg), "--out", str(tmp_path / "out")]
    )
    assert result.exit_code == 0, result.output
    csv_path = tmp_path / "out" / "her_bitflip-3_seed7.csv"
    assert csv_path.exists()
    assert csv_path.read_text().startswith("epoch,episodes_seen,success_rate")


def test_train_byte_identical_reruns(tmp_path, runner):
    cfg = write_config(tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        result = runner.invoke(main, ["train", "--config", str(cfg), "--out", str(out)])
        assert result.exit_code == 0, result.output
    name = "her_bitflip-3_seed7.csv"
    assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_train_dump_q(tmp_path, runner):
    cfg = write_config(tmp_path)
    result = runner.invoke(
        main,
        ["train", "--config", str(cfg), "--out", str(tmp_path / "q"), "--dump-q"],
    )
    assert result.exit_code == 0, result.output
    dump = tmp_path / "q" / "her_bitflip-3_seed7_qtable.csv"
    assert dump.read_text().startswith("state,goal,action,value")


def test_train_zero_epochs_header_only(tmp_path, runner):
    cfg = write_config(tmp_path, epochs=0)
    result = runner.invoke(
        main, ["train", "--config", str(cfg), "--out", str(tmp_path / "z")]
    )
    assert result.exit_code == 0, result.output
    text = (tmp_path / "z" / "her_bitflip-3_seed7.csv").read_text()
    assert text == "epoch,episodes_seen,success_rate,mean_abs_td,actual_alternate_ratio\n"


def test_train_bad_config_nonzero_exit(tmp_path, runner):
    cfg = write_config(tmp_path, algo="dqn")
    result = runner.invoke(
        main, ["train", "--config", str(cfg), "--out", str(tmp_path)]
    )
    assert result.exit_code == 1
    assert "error" in result.output


def test_train_unreadable_config(tmp_path, runner):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    result = runner.invoke(main, ["train", "--config", str(path), "--out", str(tmp_path)])
    assert result.exit_code == 1


def test_compare_writes_csv(tmp_path, runner):
    cfg_a = write_config(tmp_path, "a.json", epochs=2)
    cfg_b = write_config(tmp_path, "b.json", epochs=2, learning_rate=0.25)
    result = runner.invoke(
        main,
        [
            "compare",
            "--config-a", str(cfg_a),
            "--config-b", str(cfg_b),
            "--seeds", "0,1",
            "--threshold", "0.9",
            "--out", str(tmp_path / "cmp"),
        ],
    )
    assert result.exit_code == 0, result.output
    text = (tmp_path / "cmp" / "comparison.csv").read_text()
    assert text.splitlines()[0] == "seed,epochs_to_threshold_a,epochs_to_threshold_b"
    assert len(text.splitlines()) == 3
    assert "median" in result.output


def test_compare_bad_seed_list(tmp_path, runner):
    cfg = write_config(tmp_path)
    result = runner.invoke(
        main,
        ["compare", "--config-a", str(cfg), "--config-b", str(cfg), "--seeds", "1,x"],
    )
    assert result.exit_code == 1


def test_bench_command(tmp_path, runner):
    result = runner.invoke(
        main,
        [
            "bench",
            "--max-size", "600",
            "--batch", "32",
            "--step", "200",
            "--out", str(tmp_path / "bench"),
        ],
    )
    assert result.exit_code == 0, result.output
    assert "identical: True" in result.output
    text = (tmp_path / "bench" / "bench.csv").read_text()
    assert text.splitlines()[0] == "structure_size,build_mode,wall_time_ns"


def test_plot_command(tmp_path, runner):
    src = tmp_path / "curve.csv"
    src.write_text("epoch,success_rate\n1,0.2\n2,0.9\n")
    out = tmp_path / "curve.svg"
    result = runner.invoke(main, ["plot", "--in", str(src), "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert out.read_text().count("<polyline") == 1


def test_plot_malformed_nonzero_exit(tmp_path, runner):
    src = tmp_path / "bad.csv"
    src.write_text("epoch,sr\n1,oops\n")
    result = runner.invoke(
        main, ["plot", "--in", str(src), "--out", str(tmp_path / "x.svg")]
    )
    assert result.exit_code == 1
    assert "line 2" in result.output
