"""
cdeh/schemas/experiment.py
One invocation of the harness: mode, config, sweep, seeds and output location
"""

from __future__ import annotations

from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SweepAxis = Literal["K", "P_MAX", "N", "M"]
INTEGER_AXES = {"K", "N", "M"}


class ExperimentSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: Literal["train", "eval", "sweep"]
    config_path: Optional[Path] = None
    sweep_axis: Optional[SweepAxis] = None
    sweep_values: List[float] = Field(default_factory=list)
    out: Path = Path("runs/latest")
    seeds: Optional[List[int]] = Field(None, min_length=1, description="defaults to RNG_SEED of the config")
    checkpoint: Optional[Path] = None
    episodes: Optional[int] = Field(None, ge=1, description="overrides EPISODES (train) or EVAL_EPISODES")
    policies: Optional[List[str]] = None

    @field_validator("sweep_values")
    @classmethod
    def sort_values(cls, v: List[float]) -> List[float]:
        return sorted(v)

    @field_validator("seeds")
    @classmethod
    def unique_seeds(cls, v: Optional[List[int]]) -> Optional[List[int]]:
        if v is not None and len(set(v)) != len(v):
            raise ValueError("seeds must be distinct")
        return v

    @model_validator(mode="after")
    def check_sweep(self) -> "ExperimentSpec":
        if self.mode == "sweep":
            if self.sweep_axis is None or not self.sweep_values:
                raise ValueError("sweep mode needs --sweep-axis and --sweep-values")
            if self.sweep_axis in INTEGER_AXES and any(float(v) != int(v) or v < 1 for v in self.sweep_values):
                raise ValueError(f"{self.sweep_axis} values must be positive integers")
            if len(set(self.sweep_values)) != len(self.sweep_values):
                raise ValueError("sweep values must be distinct")
        return self

    def axis_value(self, value: float):
        """Typed value for the sweep axis"""
        return int(value) if self.sweep_axis in INTEGER_AXES else float(value)
