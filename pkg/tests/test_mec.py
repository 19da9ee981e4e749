import numpy as np
import pytest

from cdeh.models.task import OffloadDecision
from cdeh.models.transmission import RatePair
from cdeh.services.mec_service import (
    edge_shares,
    local_delay,
    mec_delay,
    offload_volumes,
    sample_tasks,
    total_delay,
    trans_delay,
)
from cdeh.utils.exceptions import DomainError, StructuralError

CAP = 1.0


def _rates(r_pub, r_pri):
    r_pub, r_pri = np.asarray(r_pub, dtype=float), np.asarray(r_pri, dtype=float)
    return RatePair(r_pub=r_pub, r_pri=r_pri, rho_pub=np.zeros_like(r_pub), rho_pri=np.zeros_like(r_pri))


def test_full_offload_has_no_local_delay():
    assert local_delay(np.array([1000.0]), np.array([1.0]), 1e8, 1000.0)[0] == 0.0


def test_local_delay_arithmetic():
    assert local_delay(np.array([1000.0]), np.array([0.0]), 1e8, 1000.0)[0] == pytest.approx(0.01)


def test_local_delay_needs_a_positive_cpu():
    with pytest.raises(DomainError):
        local_delay(np.array([1000.0]), np.array([0.0]), 0.0, 1000.0)


@pytest.mark.parametrize(
    "beta, eta, expected",
    [(1.0, 1.0, (1000.0, 0.0)), (1.0, 0.5, (500.0, 500.0)), (0.0, 0.3, (0.0, 0.0))],
)
def test_offload_volumes(beta, eta, expected):
    pub, pri = offload_volumes(np.array([1000.0]), np.array([beta]), np.array([eta]))
    assert (pub[0], pri[0]) == pytest.approx(expected)


def test_transmission_delay_one_second():
    t = trans_delay(np.array([400e3]), np.array([0.0]), _rates([400e3], [1.0]), CAP)
    assert t[0] == pytest.approx(1.0)


def test_nothing_to_send_takes_no_time():
    t = trans_delay(np.zeros(3), np.zeros(3), _rates([0.0, 1.0, 0.0], [0.0, 0.0, 5.0]), CAP)
    np.testing.assert_array_equal(t, np.zeros(3))


def test_infeasible_transmission_is_capped():
    t = trans_delay(np.array([1.0]), np.array([0.0]), _rates([0.0], [0.0]), CAP)
    assert t[0] == CAP


def test_edge_compute_delay():
    bits = np.array([1000.0])
    assert mec_delay(bits, np.array([0.0]), np.array([0.2]), 5e9, 1000.0, CAP)[0] == 0.0
    assert mec_delay(bits, np.array([1.0]), np.array([0.2]), 5e9, 1000.0, CAP)[0] == pytest.approx(0.001)


def test_zero_edge_share_with_work_is_capped():
    assert mec_delay(np.array([1000.0]), np.array([1.0]), np.array([0.0]), 5e9, 1000.0, CAP)[0] == CAP


def test_edge_shares_cannot_exceed_the_server():
    with pytest.raises(DomainError):
        OffloadDecision(beta=np.ones(2), eta=np.ones(2), rho_mec=np.array([0.7, 0.6]))
    with pytest.raises(DomainError):
        OffloadDecision(beta=np.array([1.2]), eta=np.ones(1), rho_mec=np.ones(1))
    with pytest.raises(StructuralError):
        OffloadDecision(beta=np.ones(2), eta=np.ones(3), rho_mec=np.full(2, 0.5))


def test_slow_but_feasible_delays_are_not_capped():
    t = trans_delay(np.array([10.0]), np.array([0.0]), _rates([1.0], [1.0]), CAP)
    assert t[0] == pytest.approx(10.0)
    t_mec = mec_delay(np.array([1000.0]), np.array([1.0]), np.array([1e-6]), 5e9, 1000.0, CAP)
    assert t_mec[0] == pytest.approx(200.0)


def test_transmission_delay_never_grows_with_rate():
    rng = np.random.default_rng(3)
    pub, pri = rng.uniform(0, 2e3, 5), rng.uniform(0, 2e3, 5)
    r_pub, r_pri = rng.uniform(1.0, 1e4, 5), rng.uniform(1.0, 1e4, 5)
    base = trans_delay(pub, pri, _rates(r_pub, r_pri), CAP)
    for factor in (1.0 + 1e-6, 1.5, 10.0):
        assert np.all(trans_delay(pub, pri, _rates(r_pub * factor, r_pri), CAP) <= base)
        assert np.all(trans_delay(pub, pri, _rates(r_pub, r_pri * factor), CAP) <= base)
    # zero rate is the slowest end of the range
    stalled = trans_delay(pub, pri, _rates(np.zeros(5), r_pri), 1e9)
    assert np.all(stalled >= base)


def test_edge_delay_scales_inversely_with_server_speed():
    rng = np.random.default_rng(0)
    bits, beta = rng.uniform(400, 1600, 4), rng.uniform(0, 1, 4)
    shares = edge_shares(bits, beta, "proportional")
    slow = mec_delay(bits, beta, shares, 5e9, 1000.0, CAP)
    fast = mec_delay(bits, beta, shares, 2.5 * 5e9, 1000.0, CAP)
    np.testing.assert_allclose(fast, slow / 2.5, rtol=1e-12)


def test_total_delay_is_the_slower_branch():
    report = total_delay(np.array([2.0]), np.array([0.6]), np.array([0.4]), 0.1)
    assert report.t_total[0] == 2.0
    assert report.avg == 2.0
    assert report.deadline_violations == 1


def test_total_delay_extremes():
    rng = np.random.default_rng(1)
    bits = rng.uniform(400, 1600, 3)
    t_local = local_delay(bits, np.zeros(3), 1e8, 1000.0)
    zeros = np.zeros(3)
    np.testing.assert_array_equal(total_delay(t_local, zeros, zeros, 0.1).t_total, t_local)

    t_trans, t_mec = rng.uniform(0, 0.05, 3), rng.uniform(0, 0.05, 3)
    offload = total_delay(local_delay(bits, np.ones(3), 1e8, 1000.0), t_trans, t_mec, 0.1)
    np.testing.assert_array_equal(offload.t_total, t_trans + t_mec)
    assert offload.deadline_violations == 0


def test_total_delay_shapes_must_agree():
    with pytest.raises(StructuralError):
        total_delay(np.zeros(2), np.zeros(3), np.zeros(2), 0.1)


def test_edge_share_policies():
    bits, beta = np.array([1000.0, 500.0, 500.0]), np.array([1.0, 1.0, 0.0])
    np.testing.assert_allclose(edge_shares(bits, beta, "proportional"), [2 / 3, 1 / 3, 0.0])
    np.testing.assert_allclose(edge_shares(bits, beta, "equal"), np.full(3, 1 / 3))
    np.testing.assert_allclose(edge_shares(bits, beta, "action", np.array([1.0, 1.0, 0.0])), [0.5, 0.5, 0.0])
    np.testing.assert_allclose(edge_shares(bits, beta, "action", np.array([0.2, 0.1, 0.1])), [0.2, 0.1, 0.1])
    np.testing.assert_allclose(edge_shares(bits, np.zeros(3), "proportional"), np.full(3, 1 / 3))


def test_sampled_tasks_stay_in_range(system):
    tasks = sample_tasks(system, np.random.default_rng(0))
    low, high = system.TASK_BITS_RANGE
    assert tasks.bits.shape == (system.N,)
    assert np.all((tasks.bits >= low) & (tasks.bits <= high))
