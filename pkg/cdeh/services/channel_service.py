"""
cdeh/services/channel_service.py
Stochastic wireless environment per slot: GU placement, free-space path loss,
Rayleigh/Rician small-scale fading and the IRS-assisted composite channel
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.constants import speed_of_light

from cdeh.core.config import SystemConfig
from cdeh.models.channel import ChannelState, IrsPhase
from cdeh.utils.exceptions import DomainError, StructuralError


@dataclass(frozen=True)
class FadingGenerators:
    """Independent streams per link so that changing K never perturbs h_dir"""

    direct: np.random.Generator
    reflected: np.random.Generator
    irs_bs: np.random.Generator

    @classmethod
    def from_seed(cls, seed: Union[int, np.random.SeedSequence]) -> "FadingGenerators":
        seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        return cls(*(np.random.default_rng(child) for child in seq.spawn(3)))


def _complex_normal(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """CN(0, 1) entries"""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


# =============================================================================
# GEOMETRY
# =============================================================================

def place_users(cfg: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    """N positions uniform in area over the annulus around GU_RING_CENTER"""
    r_min, r_max = cfg.GU_RING_RADII
    u = rng.uniform(size=cfg.N)
    radius = np.sqrt(r_min**2 + u * (r_max**2 - r_min**2))
    angle = rng.uniform(0.0, 2.0 * np.pi, size=cfg.N)
    center = np.asarray(cfg.GU_RING_CENTER, dtype=float)
    return center + np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)


def path_loss_db(distance, f_c: float, extra_loss: float = 0.0):
    """Free-space loss in dB plus a link-specific extra loss"""
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise DomainError(f"path loss needs a positive distance, got {distance}")
    loss = 20.0 * np.log10(d) + 20.0 * np.log10(f_c) + 20.0 * np.log10(4.0 * np.pi / speed_of_light) + extra_loss
    return float(loss) if np.ndim(loss) == 0 else loss


def db_to_amplitude(loss_db) -> np.ndarray:
    return np.sqrt(10.0 ** (-np.asarray(loss_db, dtype=float) / 10.0))


def steering_vector(length: int, cosine: float, f_c: float, d_0: float) -> np.ndarray:
    """Uniform linear array response [1, e^{-j2pi f_c d_0 cos / c}, ...]"""
    phase_step = 2.0 * np.pi * f_c * d_0 * cosine / speed_of_light
    return np.exp(-1j * phase_step * np.arange(length))


# =============================================================================
# FADING
# =============================================================================

def sample_channels(
    cfg: SystemConfig,
    positions: np.ndarray,
    rng: Union[np.random.Generator, FadingGenerators],
) -> ChannelState:
    streams = rng if isinstance(rng, FadingGenerators) else FadingGenerators(rng, rng, rng)
    m, n, k = cfg.M, cfg.N, cfg.K
    bs = np.asarray(cfg.BS_POS, dtype=float)
    irs = np.asarray(cfg.IRS_POS, dtype=float)
    f_c, d_0, kappa = cfg.CARRIER_FREQUENCY, cfg.antenna_separation, cfg.RICIAN_KAPPA

    d_bs = np.linalg.norm(positions - bs, axis=1)
    d_irs = np.linalg.norm(positions - irs, axis=1)
    d_irs_bs = float(np.linalg.norm(irs - bs))

    amp_dir = db_to_amplitude(path_loss_db(d_bs, f_c, cfg.LOSS_NLOS_DB))
    amp_irs = db_to_amplitude(path_loss_db(d_irs, f_c, cfg.LOSS_LOS_DB))
    amp_g = float(db_to_amplitude(path_loss_db(d_irs_bs, f_c, cfg.LOSS_LOS_DB)))

    los_weight = np.sqrt(kappa / (1.0 + kappa))
    nlos_weight = np.sqrt(1.0 / (1.0 + kappa))

    # GU -> BS: Rayleigh
    h_dir = amp_dir[None, :] * _complex_normal(streams.direct, (m, n))

    # GU -> IRS: Rician, departure cosine per user
    cos_dep = (irs[0] - positions[:, 0]) / d_irs
    los_irs = np.stack([steering_vector(k, c, f_c, d_0) for c in cos_dep], axis=1)
    h_irs = amp_irs[None, :] * (los_weight * los_irs + nlos_weight * _complex_normal(streams.reflected, (k, n)))

    # IRS -> BS: Rician
    cos_arr = (irs[0] - bs[0]) / d_irs_bs
    los_g = np.outer(steering_vector(m, cos_arr, f_c, d_0), steering_vector(k, cos_arr, f_c, d_0))
    g = amp_g * (los_weight * los_g + nlos_weight * _complex_normal(streams.irs_bs, (m, k)))

    return ChannelState(h_dir=h_dir, h_irs=h_irs, g=g, gu_positions=np.asarray(positions, dtype=float))


# =============================================================================
# COMPOSITION
# =============================================================================

def composite_channel(cs: ChannelState, phase: IrsPhase) -> np.ndarray:
    """H[:, n] = G diag(e^{j theta}) h_irs[:, n] + h_dir[:, n]"""
    _, _, k = cs.dims
    if phase.theta.shape[0] != k:
        raise StructuralError(f"IRS phase has {phase.theta.shape[0]} elements, channel has K={k}")
    return cs.g @ (phase.coefficients[:, None] * cs.h_irs) + cs.h_dir
