import numpy as np
import pytest
from scipy.constants import speed_of_light

from cdeh.models.channel import ChannelMask, ChannelState, IrsPhase
from cdeh.services import channel_service
from cdeh.services.channel_service import (
    FadingGenerators,
    composite_channel,
    db_to_amplitude,
    path_loss_db,
    place_users,
    sample_channels,
    steering_vector,
)
from cdeh.utils.exceptions import DomainError, StructuralError


def _random_state(rng, m, n, k):
    def cn(*shape):
        return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

    return ChannelState(h_dir=cn(m, n), h_irs=cn(k, n), g=cn(m, k), gu_positions=np.zeros((n, 2)))


# =============================================================================
# PLACEMENT
# =============================================================================

def test_degenerate_annulus_places_everyone_on_the_ring(system):
    cfg = system.model_copy(update={"GU_RING_RADII": (5.0, 5.0)})
    positions = place_users(cfg, np.random.default_rng(0))
    distances = np.linalg.norm(positions - np.asarray(cfg.GU_RING_CENTER), axis=1)
    np.testing.assert_allclose(distances, 5.0, rtol=1e-12)


def test_placement_is_uniform_in_area(system):
    rng = np.random.default_rng(1)
    center = np.asarray(system.GU_RING_CENTER)
    distances = np.concatenate([
        np.linalg.norm(place_users(system, rng) - center, axis=1) for _ in range(34_000)
    ])
    r_min, r_max = system.GU_RING_RADII
    analytic = (2.0 / 3.0) * (r_max**3 - r_min**3) / (r_max**2 - r_min**2)
    assert distances.min() >= r_min and distances.max() <= r_max
    assert distances.mean() == pytest.approx(analytic, rel=0.01)


def test_placement_is_deterministic(system):
    a = place_users(system, np.random.default_rng(42))
    b = place_users(system, np.random.default_rng(42))
    np.testing.assert_array_equal(a, b)


# =============================================================================
# PATH LOSS / STEERING
# =============================================================================

def test_path_loss_unit_gain_construction():
    assert path_loss_db(1.0, speed_of_light / (4 * np.pi)) == pytest.approx(0.0, abs=1e-9)


def test_path_loss_reference_value():
    assert path_loss_db(100.0, 2.4e9, 20.0) == pytest.approx(100.05, abs=0.01)


def test_path_loss_doubling_distance():
    delta = path_loss_db(200.0, 2.4e9) - path_loss_db(100.0, 2.4e9)
    assert delta == pytest.approx(20 * np.log10(2), abs=1e-9)


@pytest.mark.parametrize("distance", [0.0, -3.0])
def test_path_loss_rejects_non_positive_distance(distance):
    with pytest.raises(DomainError):
        path_loss_db(distance, 2.4e9)


def test_steering_at_zero_cosine_is_all_ones():
    np.testing.assert_allclose(steering_vector(3, 0.0, 2.4e9, 0.0625), np.ones(3))


# =============================================================================
# FADING
# =============================================================================

def test_pure_line_of_sight_has_unit_modulus_steering(system):
    cfg = system.model_copy(update={"RICIAN_KAPPA": 1e12})
    rng = np.random.default_rng(3)
    positions = place_users(cfg, rng)
    cs = sample_channels(cfg, positions, rng)
    d_irs = np.linalg.norm(positions - np.asarray(cfg.IRS_POS), axis=1)
    amp = db_to_amplitude(path_loss_db(d_irs, cfg.CARRIER_FREQUENCY, cfg.LOSS_LOS_DB))
    np.testing.assert_allclose(np.abs(cs.h_irs), np.broadcast_to(amp, cs.h_irs.shape), rtol=1e-3)


def test_rayleigh_reflected_link_variance(system):
    cfg = system.model_copy(update={"RICIAN_KAPPA": 0.0, "K": 50})
    rng = np.random.default_rng(4)
    positions = place_users(cfg, rng)
    fading = FadingGenerators.from_seed(4)
    power = np.zeros(cfg.N)
    draws = 2000
    for _ in range(draws):
        power += np.mean(np.abs(sample_channels(cfg, positions, fading).h_irs) ** 2, axis=0)
    d_irs = np.linalg.norm(positions - np.asarray(cfg.IRS_POS), axis=1)
    gain = db_to_amplitude(path_loss_db(d_irs, cfg.CARRIER_FREQUENCY, cfg.LOSS_LOS_DB)) ** 2
    np.testing.assert_allclose(power / draws, gain, rtol=0.05)


def test_same_seed_gives_bit_identical_channels(system):
    positions = place_users(system, np.random.default_rng(0))
    a = sample_channels(system, positions, FadingGenerators.from_seed(11))
    b = sample_channels(system, positions, FadingGenerators.from_seed(11))
    for x, y in ((a.h_dir, b.h_dir), (a.h_irs, b.h_irs), (a.g, b.g)):
        assert x.tobytes() == y.tobytes()


def test_direct_link_does_not_depend_on_irs_size(system):
    positions = place_users(system, np.random.default_rng(0))
    small = sample_channels(system, positions, FadingGenerators.from_seed(5))
    large = sample_channels(system.model_copy(update={"K": 32}), positions, FadingGenerators.from_seed(5))
    np.testing.assert_array_equal(small.h_dir, large.h_dir)
    assert large.dims == (system.M, system.N, 32)


def test_channel_shapes_must_agree():
    with pytest.raises(StructuralError):
        ChannelState(h_dir=np.zeros((2, 3)), h_irs=np.zeros((4, 3)), g=np.zeros((2, 5)), gu_positions=np.zeros((3, 2)))


# =============================================================================
# COMPOSITE CHANNEL
# =============================================================================

def test_no_reflected_path_leaves_direct_channel():
    cs = _random_state(np.random.default_rng(0), 3, 2, 4)
    cs = ChannelState(cs.h_dir, cs.h_irs, np.zeros_like(cs.g), cs.gu_positions)
    phase = IrsPhase(np.random.default_rng(1).uniform(0, 2 * np.pi, 4))
    np.testing.assert_array_equal(composite_channel(cs, phase), cs.h_dir)


def test_single_element_irs():
    cs = _random_state(np.random.default_rng(2), 3, 2, 1)
    cs = ChannelState(np.zeros_like(cs.h_dir), cs.h_irs, cs.g, cs.gu_positions)
    h = composite_channel(cs, IrsPhase.zeros(1))
    for n in range(2):
        np.testing.assert_allclose(h[:, n], cs.g[:, 0] * cs.h_irs[0, n])


def test_composite_matches_hand_expansion():
    rng = np.random.default_rng(3)
    cs = _random_state(rng, 2, 2, 2)
    theta = rng.uniform(0, 2 * np.pi, 2)
    h = composite_channel(cs, IrsPhase(theta))
    for m in range(2):
        for n in range(2):
            expected = cs.h_dir[m, n]
            for k in range(2):
                expected += cs.g[m, k] * np.exp(1j * theta[k]) * cs.h_irs[k, n]
            assert h[m, n] == pytest.approx(expected, rel=1e-12)


def test_composite_rejects_wrong_phase_length():
    cs = _random_state(np.random.default_rng(0), 2, 2, 3)
    with pytest.raises(StructuralError):
        composite_channel(cs, IrsPhase.zeros(4))


def test_masks_partition_the_composite_channel():
    cs = _random_state(np.random.default_rng(6), 3, 2, 5)
    phase = IrsPhase(np.random.default_rng(7).uniform(0, 2 * np.pi, 5))
    full = composite_channel(cs, phase)
    only_irs = composite_channel(cs.masked(ChannelMask.ONLY_IRS), phase)
    direct = composite_channel(cs.masked(ChannelMask.DIRECT), phase)
    np.testing.assert_allclose(only_irs + direct, full, rtol=1e-12)
    np.testing.assert_array_equal(direct, cs.h_dir)


def test_phase_is_wrapped_to_one_turn():
    phase = IrsPhase(np.array([-np.pi / 2, 2 * np.pi, 5 * np.pi]))
    assert np.all((phase.theta >= 0) & (phase.theta < 2 * np.pi))
    np.testing.assert_allclose(np.abs(phase.coefficients), 1.0)


def test_amplitude_helper():
    assert channel_service.db_to_amplitude(20.0) == pytest.approx(0.1)
