"""
tests/conftest.py
Shared fixtures: tiny desk-scale configurations that train and evaluate in seconds
"""

from pathlib import Path

import numpy as np
import pytest

from cdeh.core.config import ConfigBundle, get_settings
from cdeh.services import channel_service, mec_service

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"

TINY = dict(
    M=4, N=3, K=8, T=3,
    STATE_SCALE_DRAWS=5,
    FEATURE_LENGTH=4, DENSE_WIDTH=8, HEAD_WIDTH=8,
    BATCH_SIZE=4, BUFFER_CAPACITY=64,
    EPISODES=2, CHECKPOINT_EVERY=1, LOG_EVERY=1,
    EVAL_EPISODES=2,
)

TINY_ENV_FILE = """\
M=4
N=3
K=8
T=3
STATE_SCALE_DRAWS=5
FEATURE_LENGTH=4
DENSE_WIDTH=8
HEAD_WIDTH=8
BATCH_SIZE=4
EPISODES=1
CHECKPOINT_EVERY=1
EVAL_EPISODES=2
"""


@pytest.fixture
def bundle() -> ConfigBundle:
    return get_settings().with_overrides(**TINY)


@pytest.fixture
def system(bundle):
    return bundle.system


@pytest.fixture
def float64_bundle(bundle) -> ConfigBundle:
    return bundle.with_overrides(NETWORK_DTYPE="float64")


@pytest.fixture
def slot(system):
    """One channel realization and task batch at fixed placement"""
    rng = np.random.default_rng(7)
    positions = channel_service.place_users(system, rng)
    cs = channel_service.sample_channels(system, positions, channel_service.FadingGenerators.from_seed(7))
    return cs, mec_service.sample_tasks(system, rng)


@pytest.fixture
def tiny_config_file(tmp_path) -> Path:
    path = tmp_path / "tiny.env"
    path.write_text(TINY_ENV_FILE, encoding="utf-8")
    return path
