"""Thin HTTP client over the lab service.

Every subcommand talks to the service API: against a remote server when
--server is given, otherwise against an in-process instance of the app.
Files (configs, CSVs, SVGs) live on the client side.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    from fastapi.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app())


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    response = client.post(path, json=payload)
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        click.echo(f"error: {detail}", err=True)
        sys.exit(1)
    return response.json()


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        click.echo(f"error: cannot read config {path}: {exc}", err=True)
        sys.exit(1)


@click.group()
def main() -> None:
    """Goal-conditioned RL lab: training runs, comparisons, benchmarks, plots."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", default=".", type=click.Path(file_okay=False))
@click.option("--server", default=None, help="Remote service URL; default in-process.")
@click.option("--dump-q", is_flag=True, help="Also write the final Q table as CSV.")
def train(config_path: str, out_dir: str, server: str | None, dump_q: bool) -> None:
    """Run one training experiment from a JSON config."""
    payload = {"config": _load_json(config_path), "dump_q": dump_q}
    with _client(server) as client:
        data = _post(client, "/train", payload)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / data["filename"]
    csv_path.write_text(data["csv"])
    written = [csv_path]
    if data.get("curve_csv"):
        path = out / (csv_path.stem + "_curve.csv")
        path.write_text(data["curve_csv"])
        written.append(path)
    if data.get("q_table_csv"):
        path = out / (csv_path.stem + "_qtable.csv")
        path.write_text(data["q_table_csv"])
        written.append(path)
    records = data["records"]
    final = records[-1]["success_rate"] if records else float("nan")
    best = max((r["success_rate"] for r in records), default=float("nan"))
    click.echo(f"epochs: {len(records)}  final success: {final:g}  best: {best:g}")
    for path in written:
        click.echo(f"wrote {path}")


@main.command()
@click.option("--config-a", required=True, type=click.Path(exists=True))
@click.option("--config-b", required=True, type=click.Path(exists=True))
@click.option("--seeds", default="0,1,2,3,4", help="Comma-separated seed list.")
@click.option("--threshold", default=0.95, type=float)
@click.option("--out", "out_dir", default=".", type=click.Path(file_okay=False))
@click.option("--server", default=None)
def compare(
    config_a: str,
    config_b: str,
    seeds: str,
    threshold: float,
    out_dir: str,
    server: str | None,
) -> None:
    """Epochs-to-threshold comparison of two configs over shared seeds."""
    try:
        seed_list = [int(s) for s in seeds.split(",") if s.strip()]
    except ValueError:
        click.echo(f"error: bad seed list {seeds!r}", err=True)
        sys.exit(1)
    payload = {
        "config_a": _load_json(config_a),
        "config_b": _load_json(config_b),
        "seeds": seed_list,
        "threshold": threshold,
    }
    with _client(server) as client:
        data = _post(client, "/compare", payload)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "comparison.csv"
    csv_path.write_text(data["csv"])
    click.echo(f"differing fields: {', '.join(data['differing_fields']) or '(none)'}")
    click.echo(
        f"median epochs to {data['threshold']:g}: "
        f"a={data['median_a']:g} b={data['median_b']:g} "
        f"(wins a/b/ties: {data['wins_a']}/{data['wins_b']}/{data['ties']})"
    )
    click.echo(f"wrote {csv_path}")


@main.command()
@click.option("--max-size", required=True, type=int)
@click.option("--batch", "batch_size", required=True, type=int)
@click.option("--step", "growth_step", required=True, type=int)
@click.option("--alpha", default=1.0, type=float)
@click.option("--seed", default=0, type=int)
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False))
@click.option("--server", default=None)
def bench(
    max_size: int,
    batch_size: int,
    growth_step: int,
    alpha: float,
    seed: int,
    out_dir: str | None,
    server: str | None,
) -> None:
    """Benchmark incremental vs from-scratch bucket-table construction."""
    payload = {
        "max_size": max_size,
        "batch_size": batch_size,
        "growth_step": growth_step,
        "alpha": alpha,
        "seed": seed,
    }
    with _client(server) as client:
        data = _post(client, "/bench", payload)
    click.echo(
        f"scratch {data['scratch_total_ns'] / 1e9:.3f}s  "
        f"incremental {data['incremental_total_ns'] / 1e9:.3f}s  "
        f"speedup {data['speedup']:.1f}x  "
        f"identical: {data['boundaries_identical']}"
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "bench.csv"
        csv_path.write_text(data["csv"])
        click.echo(f"wrote {csv_path}")
    if not data["boundaries_identical"]:
        click.echo("error: incremental and scratch tables diverged", err=True)
        sys.exit(1)


@main.command()
@click.option("--in", "in_csv", required=True, type=click.Path(exists=True))
@click.option("--out", "out_svg", required=True, type=click.Path())
@click.option("--server", default=None)
def plot(in_csv: str, out_svg: str, server: str | None) -> None:
    """Render a wide CSV (x column + series columns) as an SVG line chart."""
    with _client(server) as client:
        data = _post(client, "/plot", {"csv": Path(in_csv).read_text()})
    Path(out_svg).write_text(data["svg"])
    click.echo(f"wrote {out_svg}")


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
def serve(host: str, port: int) -> None:
    """Run the lab service."""
    import uvicorn

    uvicorn.run("hindsight_lab.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
