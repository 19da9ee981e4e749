"""
cdeh/schemas/records.py
Rows and manifests written to disk; field order is CSV column order
"""

from __future__ import annotations

from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class Provenance(BaseModel):
    build: str
    config_hash: str


# =============================================================================
# CSV ROWS
# =============================================================================

class TrainingLogRow(Provenance):
    seed: int
    episode: int
    episode_return: float
    mean_delay: float
    violations: int
    critic1_loss: Optional[float] = None
    critic2_loss: Optional[float] = None
    actor_loss: Optional[float] = None
    q_loss: Optional[float] = None
    epsilon: float
    explore_noise: float
    wall_time: float


class MetricsRow(Provenance):
    policy: str
    sweep_variable: str = "none"
    value: Optional[float] = None
    mean_delay: float
    std_delay: float
    violation_rate: float
    episodes: int
    seed: int


class TraceRow(Provenance):
    policy: str
    sweep_variable: str = "none"
    value: Optional[float] = None
    seed: int
    episode: int
    t: int
    user_delays: str = Field(..., description="semicolon-separated seconds, user order")
    reward: float
    violations: int
    order_index: int


# =============================================================================
# SIDECAR MANIFEST
# =============================================================================

class RunManifest(Provenance):
    mode: str
    seeds: List[int]
    created_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
    resolved_config: Dict[str, Any]
    artifacts: List[str] = Field(default_factory=list)
    extra: Dict[str, Any] = Field(default_factory=dict)
