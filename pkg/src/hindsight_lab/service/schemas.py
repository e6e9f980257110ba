"""Request/response models. Config keys mirror ExperimentConfig exactly."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict

from ..harness import ExperimentConfig
from ..replay import AnnealSchedule


class ScheduleSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["constant", "linear", "inverse_time"]
    start: float
    end: float
    total_steps: int = 1

    def to_schedule(self) -> AnnealSchedule:
        return AnnealSchedule(self.kind, self.start, self.end, self.total_steps)


class ExperimentConfigSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    env: str = "bitflip:8"
    algo: Literal["q_vanilla", "her", "hper", "hpg"] = "her"
    strategy: Literal["single_queue", "two_queues"] | None = None
    replay_k: float | ScheduleSpec = 4.0
    batch_size: int = 64
    n_batches: int = 20
    epochs: int = 50
    episodes_per_epoch: int = 50
    goal_count_mode: Literal["uniform_fixed", "non_uniform", "non_uniform_late"] = (
        "non_uniform"
    )
    reward_mode: Literal["plus_one_zero", "minus_one_zero"] = "plus_one_zero"
    td_mode: Literal["max_action", "trajectory_action"] = "max_action"
    beta_schedule: ScheduleSpec | None = None
    gamma: float = 0.98
    epsilon: float | ScheduleSpec = 0.2
    learning_rate: float = 0.5
    buffer_capacity: int = 200_000
    seed: int = 0
    horizon: int | None = None

    def to_config(self) -> ExperimentConfig:
        data = self.model_dump()
        for key in ("replay_k", "epsilon", "beta_schedule"):
            value = getattr(self, key)
            if isinstance(value, ScheduleSpec):
                data[key] = value.to_schedule()
        return ExperimentConfig(**data)


class TrainRequest(BaseModel):
    config: ExperimentConfigSpec
    dump_q: bool = False
    stop_threshold: float | None = None


class EpochRecordOut(BaseModel):
    epoch: int
    episodes_seen: int
    success_rate: float
    mean_abs_td: float
    actual_alternate_ratio: float
    wall_time_s: float


class TrainResponse(BaseModel):
    filename: str
    records: list[EpochRecordOut]
    csv: str
    curve_csv: str | None = None
    q_table_csv: str | None = None


class CompareRequest(BaseModel):
    config_a: ExperimentConfigSpec
    config_b: ExperimentConfigSpec
    seeds: list[int]
    threshold: float = 0.95


class CompareResponse(BaseModel):
    threshold: float
    seeds: list[int]
    epochs_a: list[int]
    epochs_b: list[int]
    median_a: float
    median_b: float
    wins_a: int
    wins_b: int
    ties: int
    differing_fields: list[str]
    csv: str


class BenchRequest(BaseModel):
    max_size: int
    batch_size: int
    growth_step: int
    alpha: float = 1.0
    seed: int = 0


class BenchResponse(BaseModel):
    max_size: int
    batch_size: int
    growth_step: int
    scratch_total_ns: int
    incremental_total_ns: int
    speedup: float
    boundaries_identical: bool
    csv: str


class PlotRequest(BaseModel):
    csv: str


class PlotResponse(BaseModel):
    svg: str
