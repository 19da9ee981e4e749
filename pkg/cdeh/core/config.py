"""
cdeh/core/config.py
Configuration management using Pydantic Settings (v2)
A single flat KEY=VALUE file feeds three typed settings classes;
CDEH_-prefixed environment variables override file values
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple, Type, Union

from dotenv import dotenv_values
from loguru import logger
from pydantic import Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, NoDecode, SettingsConfigDict
from scipy.constants import speed_of_light

from cdeh.utils.exceptions import ConfigError

Pair = Annotated[Tuple[float, float], NoDecode]
NameList = Annotated[List[str], NoDecode]


def _parse_comma_separated_list(v: Union[str, List[Any], Tuple[Any, ...]]) -> Any:
    """
    Parses comma-separated strings (or JSON lists) from the config file.
    Example: "2,10" -> ["2", "10"]; "[2, 10]" -> [2, 10]
    """
    if isinstance(v, str):
        text = v.strip()
        if text.startswith("["):
            return json.loads(text)
        return [item.strip() for item in text.split(",") if item.strip()]
    return v


class _FlatSettings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="CDEH_",
        case_sensitive=True,
        extra="forbid",
        frozen=True,
    )

    @classmethod
    def settings_customise_sources(
        cls, settings_cls, init_settings, env_settings, dotenv_settings, file_secret_settings
    ):
        # environment beats the file, the file beats defaults
        return (env_settings, init_settings)


# =============================================================================
# SYSTEM (channel, rsma, mec, env)
# =============================================================================

class SystemConfig(_FlatSettings):
    # =================================================================
    # Dimensions
    # =================================================================
    M: int = Field(20, ge=1, description="BS antennas")
    N: int = Field(5, ge=1, description="ground users")
    K: int = Field(50, ge=1, description="IRS elements")
    T: int = Field(50, ge=1, description="slots per episode")

    # =================================================================
    # Radio
    # =================================================================
    SLOT_DURATION: float = Field(0.1, gt=0, description="tau, seconds")
    BANDWIDTH: float = Field(400e3, gt=0)
    NOISE_POWER_DBM: float = -70.0
    P_MAX: float = Field(5.0, gt=0, description="watts per user")
    CARRIER_FREQUENCY: float = Field(2.4e9, gt=0)
    RICIAN_KAPPA: float = Field(10.0, ge=0)
    LOSS_LOS_DB: float = 0.0
    LOSS_NLOS_DB: float = 20.0
    ANTENNA_SEPARATION: Optional[float] = Field(None, gt=0, description="defaults to half-wavelength")

    # =================================================================
    # Geometry (planar, metres)
    # =================================================================
    BS_POS: Pair = (0.0, 0.0)
    IRS_POS: Pair = (100.0, 0.0)
    GU_RING_CENTER: Pair = (150.0, 0.0)
    GU_RING_RADII: Pair = (2.0, 10.0)

    # =================================================================
    # Tasks & compute
    # =================================================================
    TASK_BITS_RANGE: Pair = (400.0, 1600.0)
    F_GU: float = Field(1e8, gt=0, description="cycles/s per user")
    F_MEC: float = Field(5e9, gt=0)
    C_GU: float = Field(1000.0, gt=0, description="cycles/bit")
    C_MEC: float = Field(1000.0, gt=0)
    RHO_POLICY: Literal["proportional", "equal", "action"] = "proportional"
    POWER_ACTION: bool = False

    # =================================================================
    # MDP
    # =================================================================
    DEADLINE_PENALTY: float = Field(1.0, ge=0)
    STATE_SCALE_DRAWS: int = Field(1000, ge=1)
    MAX_ENUMERATED_USERS: int = Field(7, ge=1)
    RNG_SEED: int = 0

    @field_validator("BS_POS", "IRS_POS", "GU_RING_CENTER", "GU_RING_RADII", "TASK_BITS_RANGE", mode="before")
    @classmethod
    def parse_pairs(cls, v):
        return _parse_comma_separated_list(v)

    @model_validator(mode="after")
    def check_ranges(self) -> "SystemConfig":
        r_min, r_max = self.GU_RING_RADII
        if not 0 <= r_min <= r_max:
            raise ValueError(f"GU_RING_RADII must satisfy 0 <= r_min <= r_max, got {self.GU_RING_RADII}")
        b_min, b_max = self.TASK_BITS_RANGE
        if not 0 < b_min <= b_max:
            raise ValueError(f"TASK_BITS_RANGE must satisfy 0 < min <= max, got {self.TASK_BITS_RANGE}")
        if self.N > self.MAX_ENUMERATED_USERS:
            raise ValueError(
                f"N={self.N} exceeds MAX_ENUMERATED_USERS={self.MAX_ENUMERATED_USERS} "
                f"(the decoding-order head has N! outputs)"
            )
        return self

    # =================================================================
    # Derived quantities
    # =================================================================
    @property
    def noise_power(self) -> float:
        """sigma^2 in watts"""
        return 10.0 ** ((self.NOISE_POWER_DBM - 30.0) / 10.0)

    @property
    def wavelength(self) -> float:
        return speed_of_light / self.CARRIER_FREQUENCY

    @property
    def antenna_separation(self) -> float:
        return self.ANTENNA_SEPARATION if self.ANTENNA_SEPARATION is not None else self.wavelength / 2.0

    @property
    def delay_cap(self) -> float:
        return 10.0 * self.SLOT_DURATION

    @property
    def order_count(self) -> int:
        return math.factorial(self.N)

    @property
    def action_dim(self) -> int:
        """Length of the raw continuous action vector"""
        dim = 3 * self.N + self.K + 2 * self.M * self.N
        if self.POWER_ACTION:
            dim += self.N
        if self.RHO_POLICY == "action":
            dim += self.N
        return dim


# =============================================================================
# LEARNERS (nn, agents, training)
# =============================================================================

class AgentConfig(_FlatSettings):
    # Replay & optimisation
    BUFFER_CAPACITY: int = Field(100_000, ge=1)
    BATCH_SIZE: int = Field(64, ge=1)
    ACTOR_LR: float = Field(3e-4, ge=0)
    CRITIC_LR: float = Field(3e-4, ge=0)
    Q_LR: float = Field(3e-4, ge=0)
    DISCOUNT: float = Field(0.99, ge=0, le=1, description="gamma_disc")
    SOFT_UPDATE: float = Field(0.005, ge=0, le=1, description="tau_soft")

    # TD3
    POLICY_DELAY: int = Field(2, ge=1)
    EXPLORE_NOISE_START: float = Field(0.1, ge=0)
    EXPLORE_NOISE_END: float = Field(0.02, ge=0)
    TARGET_NOISE: float = Field(0.2, ge=0)
    TARGET_NOISE_CLIP: float = Field(0.5, ge=0)

    # DQN
    EPSILON_START: float = Field(1.0, ge=0, le=1)
    EPSILON_END: float = Field(0.05, ge=0, le=1)
    EPSILON_DECAY_FRACTION: float = Field(0.3, gt=0, le=1)

    # DQN-only grid: every continuous coordinate becomes one Q branch
    DISCRETE_LEVELS: int = Field(4, ge=2, description="levels per scalar coordinate")
    PHASE_LEVELS: int = Field(8, ge=2, description="levels per IRS phase")

    # Networks
    FEATURE_LENGTH: int = Field(64, ge=1, description="D")
    DENSE_WIDTH: int = Field(128, ge=1, description="H1")
    HEAD_WIDTH: int = Field(128, ge=1, description="H2")
    BN_MOMENTUM: float = Field(0.1, gt=0, le=1)
    NETWORK_ARCHITECTURE: Literal["cnn_densenet", "cnn_fcn", "fcn_densenet", "fcn"] = "cnn_densenet"
    NETWORK_DTYPE: Literal["float32", "float64"] = "float32"

    # Schedule
    EPISODES: int = Field(2000, ge=1, description="E_max")
    # dqn_only: a branching Q-network picks every variable and TD3 is not built
    ORDER_LEARNER: Literal["dqn", "exhaustive", "dqn_only"] = "dqn"
    CHECKPOINT_EVERY: int = Field(100, ge=1)
    LOG_EVERY: int = Field(50, ge=1)


# =============================================================================
# EXPERIMENT HARNESS (baselines, cli)
# =============================================================================

class ExperimentConfig(_FlatSettings):
    POLICIES: NameList = ["cdeh", "reverse_decode", "random_phase", "full_local", "full_offload"]
    EVAL_EPISODES: int = Field(100, ge=1)
    WORKERS: int = Field(1, ge=1)
    EMIT_TRACES: bool = False
    FIXED_POLICY_SEED: int = 12345

    @field_validator("POLICIES", mode="before")
    @classmethod
    def parse_policies(cls, v):
        return _parse_comma_separated_list(v)


SETTINGS_CLASSES: Tuple[Type[_FlatSettings], ...] = (SystemConfig, AgentConfig, ExperimentConfig)


@dataclass(frozen=True)
class ConfigBundle:
    """Everything one run needs, resolved"""

    system: SystemConfig
    agent: AgentConfig
    experiment: ExperimentConfig

    def resolved(self) -> Dict[str, Any]:
        flat: Dict[str, Any] = {}
        for part in (self.system, self.agent, self.experiment):
            for key, value in part.model_dump(mode="json").items():
                flat[key] = value
        return flat

    def with_overrides(self, **overrides: Any) -> "ConfigBundle":
        """
        Re-validated copy with some flat keys replaced.
        CDEH_ environment variables still win over these overrides, as they do over the file.
        """
        unknown = set(overrides) - {k for cls in SETTINGS_CLASSES for k in cls.model_fields}
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}")
        shadowed = sorted(k for k in overrides if f"CDEH_{k}" in os.environ)
        if shadowed:
            logger.warning(f"Overrides for {shadowed} are shadowed by CDEH_ environment variables")
        parts = []
        for part in (self.system, self.agent, self.experiment):
            data = part.model_dump()
            data.update({k: v for k, v in overrides.items() if k in type(part).model_fields})
            try:
                parts.append(type(part)(**data))
            except ValidationError as exc:
                raise _config_error(exc) from exc
        return ConfigBundle(*parts)


# =============================================================================
# LOADING
# =============================================================================

def _config_error(
    exc: ValidationError, path: Optional[Path] = None, lines: Optional[Dict[str, int]] = None
) -> ConfigError:
    error = exc.errors()[0]
    key = str(error["loc"][0]) if error["loc"] else None
    where = f"{key}: " if key else ""
    line = (lines or {}).get(key) if key else None
    return ConfigError(f"{where}{error['msg']}", path, line)


_KEY_LINE = re.compile(r"^\s*(?:export\s+)?([A-Za-z_][A-Za-z0-9_]*)\s*=")


def _key_lines(path: Path) -> Dict[str, int]:
    lines: Dict[str, int] = {}
    for number, text in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        match = _KEY_LINE.match(text)
        if match:
            lines[match.group(1)] = number
    return lines


def load_config(path: Optional[Path] = None) -> ConfigBundle:
    """
    Load a flat KEY=VALUE config file into the three settings classes.
    Errors are reported as ConfigError with the offending file line.
    """
    values: Dict[str, Optional[str]] = {}
    lines: Dict[str, int] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError("config file not found", path)
        values = dotenv_values(path)
        lines = _key_lines(path)

    routed: Dict[Type[_FlatSettings], Dict[str, str]] = {cls: {} for cls in SETTINGS_CLASSES}
    for key, value in values.items():
        owner = next((cls for cls in SETTINGS_CLASSES if key in cls.model_fields), None)
        if owner is None:
            raise ConfigError(f"unknown key {key!r}", path, lines.get(key))
        if value is None or value.strip() == "":
            raise ConfigError(f"missing value for {key!r}", path, lines.get(key))
        routed[owner][key] = value

    parts = []
    for cls in SETTINGS_CLASSES:
        try:
            parts.append(cls(**routed[cls]))
        except ValidationError as exc:
            raise _config_error(exc, path, lines) from exc
    return ConfigBundle(*parts)


@lru_cache()
def get_settings() -> ConfigBundle:
    """
    Cached default configuration (no file) – safe for multiple imports
    """
    return load_config(None)
