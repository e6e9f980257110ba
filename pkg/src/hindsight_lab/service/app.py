"""FastAPI application exposing train/compare/bench/plot."""

from __future__ import annotations

from dataclasses import asdict

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..harness import (
    ConfigError,
    bench_sampler,
    compare_strategies,
    run_experiment,
    run_filename,
)
from ..plotting import PlotError, render_csv
from .schemas import (
    BenchRequest,
    BenchResponse,
    CompareRequest,
    CompareResponse,
    EpochRecordOut,
    PlotRequest,
    PlotResponse,
    TrainRequest,
    TrainResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(title="hindsight-lab", version=__version__)

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/train", response_model=TrainResponse)
    def train(req: TrainRequest) -> TrainResponse:
        try:
            config = req.config.to_config()
            result = run_experiment(
                config, stop_threshold=req.stop_threshold, dump_q=req.dump_q
            )
        except (ConfigError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return TrainResponse(
            filename=run_filename(config),
            records=[EpochRecordOut(**asdict(r)) for r in result.records],
            csv=result.csv_text,
            curve_csv=result.curve_csv,
            q_table_csv=result.q_table_csv,
        )

    @app.post("/compare", response_model=CompareResponse)
    def compare(req: CompareRequest) -> CompareResponse:
        try:
            report = compare_strategies(
                req.config_a.to_config(),
                req.config_b.to_config(),
                req.seeds,
                req.threshold,
            )
        except (ConfigError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return CompareResponse(
            threshold=report.threshold,
            seeds=report.seeds,
            epochs_a=report.epochs_a,
            epochs_b=report.epochs_b,
            median_a=report.median_a,
            median_b=report.median_b,
            wins_a=report.wins_a,
            wins_b=report.wins_b,
            ties=report.ties,
            differing_fields=report.differing_fields,
            csv=report.csv_text,
        )

    @app.post("/bench", response_model=BenchResponse)
    def bench(req: BenchRequest) -> BenchResponse:
        try:
            report = bench_sampler(
                req.max_size, req.batch_size, req.growth_step, req.alpha, req.seed
            )
        except (ConfigError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return BenchResponse(
            max_size=report.max_size,
            batch_size=report.batch_size,
            growth_step=report.growth_step,
            scratch_total_ns=report.scratch_total_ns,
            incremental_total_ns=report.incremental_total_ns,
            speedup=report.speedup,
            boundaries_identical=report.boundaries_identical,
            csv=report.csv_text,
        )

    @app.post("/plot", response_model=PlotResponse)
    def plot(req: PlotRequest) -> PlotResponse:
        try:
            svg = render_csv(req.csv)
        except PlotError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return PlotResponse(svg=svg)

    return app


app = create_app()
