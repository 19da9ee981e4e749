import numpy as np
import pytest
from scipy import stats

from cdeh.agents.td3_agent import Td3Losses
from cdeh.core.config import get_settings
from cdeh.repositories.artifact_repository import ArtifactRepository
from cdeh.schemas.policy import resolve_policy
from cdeh.schemas.records import TrainingLogRow
from cdeh.services.baseline_service import evaluate_policy
from cdeh.services.training_service import CHECKPOINT_DIR, TRAINING_LOG, CdehTrainer, train_cdeh
from cdeh.utils.exceptions import NonFiniteLossError
from tests.conftest import TINY


def _log(out_dir):
    return ArtifactRepository(out_dir).read_rows(TRAINING_LOG, TrainingLogRow)


def test_one_episode_writes_one_row_and_one_checkpoint(bundle, tmp_path):
    trainer = train_cdeh(bundle, seed=0, out_dir=tmp_path, episodes=1)
    rows = _log(tmp_path)
    assert [row.episode for row in rows] == [1]
    assert np.isfinite(rows[0].episode_return) and rows[0].episode_return <= 0.0
    assert [p.name for p in trainer.checkpoints.episodes()] == ["episode-000001"]
    meta = trainer.checkpoints.load(trainer.checkpoints.latest()).meta
    assert meta["episode"] == 1 and meta["total_steps"] == bundle.system.T
    assert meta["resolved_config"]["K"] == bundle.system.K


def test_training_resumes_from_the_latest_checkpoint(bundle, tmp_path):
    train_cdeh(bundle, seed=0, out_dir=tmp_path, episodes=1)
    trainer = train_cdeh(bundle, seed=0, out_dir=tmp_path, episodes=2)
    assert trainer.episode == 2
    assert trainer.total_steps == 2 * bundle.system.T
    assert [row.episode for row in _log(tmp_path)] == [1, 2]
    assert [p.name for p in trainer.checkpoints.episodes()] == ["episode-000001", "episode-000002"]


def test_resume_restores_counters_and_weights(bundle, tmp_path):
    first = train_cdeh(bundle, seed=0, out_dir=tmp_path, episodes=2)
    fresh = CdehTrainer(bundle, seed=0, out_dir=tmp_path)
    fresh.resume(fresh.checkpoints.latest())
    assert fresh.td3.updates == first.td3.updates
    assert fresh.dqn.updates == first.dqn.updates
    for name, net in first.networks().items():
        restored = dict(fresh.networks()[name].params.arrays())
        for key, value in net.params.arrays():
            assert restored[key].tobytes() == value.tobytes()
    assert fresh.td3.actor_opt.t == first.td3.actor_opt.t


def test_fresh_run_discards_an_old_log(bundle, tmp_path):
    train_cdeh(bundle, seed=0, out_dir=tmp_path, episodes=1)
    train_cdeh(bundle, seed=0, out_dir=tmp_path, episodes=1, resume=False)
    assert [row.episode for row in _log(tmp_path)] == [1]


def test_non_finite_loss_stops_with_a_diagnostic_checkpoint(bundle, tmp_path, monkeypatch):
    eager = bundle.with_overrides(BATCH_SIZE=1)
    trainer = CdehTrainer(eager, seed=0, out_dir=tmp_path)
    monkeypatch.setattr(trainer.td3, "update", lambda batch: Td3Losses(critic1=float("nan"), critic2=0.0))
    with pytest.raises(NonFiniteLossError) as caught:
        trainer.train(1)
    assert caught.value.exit_code == 5
    assert caught.value.checkpoint.name.startswith("diagnostic-")
    assert caught.value.checkpoint.parent == tmp_path / CHECKPOINT_DIR
    assert trainer.checkpoints.latest() is None


def test_exhaustive_order_learner_trains_without_a_q_network(bundle):
    searching = bundle.with_overrides(ORDER_LEARNER="exhaustive")
    trainer = CdehTrainer(searching, seed=1)
    rows = trainer.train(2)
    assert trainer.dqn is None
    assert "qnet" not in trainer.networks()
    assert [row.q_loss for row in rows] == [None, None]
    assert rows[-1].critic1_loss is not None


def test_same_seed_same_training_log(bundle):
    def losses():
        return [(r.episode_return, r.critic1_loss) for r in CdehTrainer(bundle, seed=4).train(2)]

    assert losses() == losses()


def test_exploration_decays_over_training(bundle):
    trainer = CdehTrainer(bundle.with_overrides(EPSILON_DECAY_FRACTION=0.5), seed=0)
    rows = trainer.train(2)
    assert rows[-1].epsilon < rows[0].epsilon <= 1.0
    assert rows[-1].explore_noise < rows[0].explore_noise


def test_grid_learner_trains_without_td3(bundle, tmp_path):
    grid = bundle.with_overrides(ORDER_LEARNER="dqn_only")
    trainer = train_cdeh(grid, seed=0, out_dir=tmp_path, episodes=2)
    assert trainer.td3 is None and trainer.dqn is None
    assert set(trainer.networks()) == {"branching_qnet", "branching_qnet_target"}
    rows = _log(tmp_path)
    assert rows[0].critic1_loss is None and rows[-1].actor_loss is None
    assert np.isfinite(rows[-1].q_loss)

    fresh = CdehTrainer(grid, seed=0, out_dir=tmp_path)
    fresh.resume(fresh.checkpoints.latest())
    assert fresh.branching.updates == trainer.branching.updates > 0
    assert fresh.branching.optimizer.t == trainer.branching.optimizer.t


# =============================================================================
# DESK-SCALE LEARNING (slow)
# =============================================================================

@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    """One trained desk-scale checkpoint shared by the slow comparisons"""
    bundle = get_settings().with_overrides(
        **{**TINY, "T": 10, "EPISODES": 150, "BATCH_SIZE": 32, "CHECKPOINT_EVERY": 150, "LOG_EVERY": 50}
    )
    out_dir = tmp_path_factory.mktemp("desk")
    train_cdeh(bundle, seed=0, out_dir=out_dir)
    return bundle, out_dir


def _evaluate(desk, name):
    bundle, out_dir = desk
    return evaluate_policy(resolve_policy(name), bundle, episodes=30, seed=100, checkpoint=out_dir)


@pytest.mark.slow
def test_trained_policy_beats_random_actions(desk):
    learned = _evaluate(desk, "cdeh")
    random = _evaluate(desk, "random")
    assert stats.ttest_ind(learned.episode_delays, random.episode_delays, alternative="less").pvalue < 0.01


@pytest.mark.slow
def test_learned_order_is_close_to_the_best_order(desk):
    assert _evaluate(desk, "cdeh").mean_delay <= 1.10 * _evaluate(desk, "exhaustive_decode").mean_delay


@pytest.mark.slow
def test_rate_splitting_is_no_slower_than_noma(desk):
    assert _evaluate(desk, "cdeh").mean_delay <= _evaluate(desk, "noma").mean_delay
