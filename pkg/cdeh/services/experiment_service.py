"""
cdeh/services/experiment_service.py
Orchestrates train / eval / sweep runs: per-seed training, policy evaluation
over a bounded worker pool, CSV tables and the sidecar manifest
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from loguru import logger

from cdeh.core.config import ConfigBundle
from cdeh.repositories.artifact_repository import ArtifactRepository
from cdeh.schemas.experiment import ExperimentSpec
from cdeh.schemas.policy import PolicySpec, resolve_policy
from cdeh.schemas.records import MetricsRow, RunManifest, TraceRow
from cdeh.services.baseline_service import evaluate_policy
from cdeh.services.training_service import CHECKPOINT_DIR, TRAINING_LOG, train_cdeh
from cdeh.utils.exceptions import ConfigError
from cdeh.utils.provenance import build_version, config_hash

METRICS = "metrics.csv"
TRACES = "traces.csv"
MANIFEST = "manifest.json"

RowKey = Tuple[str, str, Optional[float], int]


@dataclass
class RunSummary:
    out: Path
    artifacts: List[Path] = field(default_factory=list)
    rows: List[MetricsRow] = field(default_factory=list)


@dataclass(frozen=True)
class EvalTask:
    policy: PolicySpec
    bundle: ConfigBundle
    episodes: int
    seed: int
    checkpoint: Optional[Path]
    sweep_variable: str = "none"
    value: Optional[float] = None
    emit_traces: bool = False


@dataclass(frozen=True)
class TrainTask:
    bundle: ConfigBundle
    seed: int
    out_dir: Path
    episodes: Optional[int] = None


def _row_key(policy: str, sweep_variable: str, value: Optional[float], seed: int) -> RowKey:
    return policy, sweep_variable, value, seed


def _sort_key(row: MetricsRow):
    return row.policy, row.sweep_variable, -1.0 if row.value is None else row.value, row.seed


# =============================================================================
# WORKER ENTRY POINTS (top-level so they pickle)
# =============================================================================

def run_eval_task(task: EvalTask) -> Tuple[MetricsRow, List[TraceRow]]:
    result = evaluate_policy(
        task.policy, task.bundle, task.episodes, task.seed, task.checkpoint, keep_slots=task.emit_traces
    )
    build, digest = build_version(), config_hash(task.bundle.resolved())
    row = MetricsRow(
        build=build,
        config_hash=digest,
        policy=task.policy.name,
        sweep_variable=task.sweep_variable,
        value=task.value,
        mean_delay=result.mean_delay,
        std_delay=result.std_delay,
        violation_rate=result.violation_rate,
        episodes=task.episodes,
        seed=task.seed,
    )
    traces = [
        TraceRow(
            build=build,
            config_hash=digest,
            policy=task.policy.name,
            sweep_variable=task.sweep_variable,
            value=task.value,
            seed=task.seed,
            episode=slot.episode,
            t=slot.t,
            user_delays=";".join(repr(float(d)) for d in slot.user_delays),
            reward=slot.reward,
            violations=slot.violations,
            order_index=slot.order_index,
        )
        for slot in result.slots
    ]
    return row, traces


def run_train_task(task: TrainTask) -> Path:
    train_cdeh(task.bundle, task.seed, task.out_dir, task.episodes)
    return task.out_dir


def _map(fn: Callable, tasks: Sequence[Any], workers: int) -> List[Any]:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


# =============================================================================
# SERVICE
# =============================================================================

class ExperimentService:
    def __init__(self, spec: ExperimentSpec, bundle: ConfigBundle):
        if spec.seeds is None:
            spec = spec.model_copy(update={"seeds": [bundle.system.RNG_SEED]})
        self.spec = spec
        self.bundle = bundle
        self.artifacts = ArtifactRepository(spec.out)
        self.workers = bundle.experiment.WORKERS

    def run(self) -> RunSummary:
        try:
            self.artifacts.ensure_root()
        except OSError as exc:
            raise ConfigError(f"output directory {self.spec.out} is not writable: {exc}") from exc
        logger.info(f"Running {self.spec.mode} over seeds {self.spec.seeds}")
        summary = {"train": self.train, "eval": self.evaluate, "sweep": self.sweep}[self.spec.mode]()
        self._write_manifest(summary)
        return summary

    # ===================================================================
    # MODES
    # ===================================================================

    def _seed_dir(self, root: Path, seed: int) -> Path:
        return root / f"seed-{seed}"

    def train(self) -> RunSummary:
        tasks = [
            TrainTask(self.bundle, seed, self._seed_dir(self.spec.out, seed), self.spec.episodes)
            for seed in self.spec.seeds
        ]
        dirs = _map(run_train_task, tasks, self.workers)
        artifacts = [d / TRAINING_LOG for d in dirs] + [d / CHECKPOINT_DIR for d in dirs]
        return RunSummary(out=self.spec.out, artifacts=artifacts)

    def _policies(self) -> List[PolicySpec]:
        names = self.spec.policies or self.bundle.experiment.POLICIES
        return [resolve_policy(name) for name in names]

    def _eval_episodes(self) -> int:
        return self.spec.episodes or self.bundle.experiment.EVAL_EPISODES

    def evaluate(self) -> RunSummary:
        tasks = [
            EvalTask(policy, self.bundle, self._eval_episodes(), seed, self.spec.checkpoint,
                     emit_traces=self.bundle.experiment.EMIT_TRACES)
            for policy in self._policies()
            for seed in self.spec.seeds
        ]
        return self._run_eval_tasks(tasks)

    def sweep(self) -> RunSummary:
        axis = self.spec.sweep_axis
        policies = self._policies()
        needs_training = any(p.needs_checkpoint for p in policies)
        reuse_checkpoint = self.spec.checkpoint is not None and axis == "P_MAX"

        points = [(value, self.bundle.with_overrides(**{axis: self.spec.axis_value(value)}))
                  for value in self.spec.sweep_values]

        checkpoints: Dict[Tuple[float, int], Optional[Path]] = {}
        train_tasks = []
        for value, bundle in points:
            for seed in self.spec.seeds:
                if not needs_training:
                    checkpoints[(value, seed)] = None
                elif reuse_checkpoint:
                    checkpoints[(value, seed)] = self.spec.checkpoint
                else:
                    # network shapes follow the swept dimension, so each point trains its own learners
                    out_dir = self._seed_dir(self.spec.out / "sweep" / f"{axis}={value:g}", seed)
                    checkpoints[(value, seed)] = out_dir
                    train_tasks.append(TrainTask(bundle, seed, out_dir))
        if train_tasks:
            logger.info(f"Training {len(train_tasks)} sweep point(s) along {axis}")
            _map(run_train_task, train_tasks, self.workers)

        tasks = [
            EvalTask(policy, bundle, self._eval_episodes(), seed, checkpoints[(value, seed)],
                     sweep_variable=axis, value=float(value), emit_traces=self.bundle.experiment.EMIT_TRACES)
            for value, bundle in points
            for policy in policies
            for seed in self.spec.seeds
        ]
        return self._run_eval_tasks(tasks)

    # ===================================================================
    # SHARED
    # ===================================================================

    def _run_eval_tasks(self, tasks: List[EvalTask]) -> RunSummary:
        existing = self.artifacts.read_rows(METRICS, MetricsRow)
        done = {_row_key(r.policy, r.sweep_variable, r.value, r.seed) for r in existing}
        pending = [t for t in tasks if _row_key(t.policy.name, t.sweep_variable, t.value, t.seed) not in done]
        if len(pending) < len(tasks):
            logger.info(f"Resuming: {len(tasks) - len(pending)} of {len(tasks)} evaluations already recorded")

        rows = list(existing)
        traces: List[TraceRow] = []
        for row, trace in _map(run_eval_task, pending, self.workers):
            rows.append(row)
            traces.extend(trace)
            # checkpoint progress so an interrupted run resumes here
            self.artifacts.append_rows(METRICS, [row], MetricsRow)

        rows.sort(key=_sort_key)
        artifacts = [self.artifacts.write_rows(METRICS, rows, MetricsRow)]
        if traces:
            traces.sort(key=lambda r: (r.policy, r.sweep_variable, r.value or 0.0, r.seed, r.episode, r.t))
            artifacts.append(self.artifacts.append_rows(TRACES, traces, TraceRow))
        return RunSummary(out=self.spec.out, artifacts=artifacts, rows=rows)

    def _write_manifest(self, summary: RunSummary) -> None:
        resolved = self.bundle.resolved()
        manifest = RunManifest(
            build=build_version(),
            config_hash=config_hash(resolved),
            mode=self.spec.mode,
            seeds=list(self.spec.seeds),
            resolved_config=resolved,
            artifacts=[str(p) for p in summary.artifacts],
            extra={
                "config_path": str(self.spec.config_path) if self.spec.config_path else None,
                "sweep_axis": self.spec.sweep_axis,
                "sweep_values": list(self.spec.sweep_values),
                "policies": self.spec.policies or list(self.bundle.experiment.POLICIES),
                "checkpoint": str(self.spec.checkpoint) if self.spec.checkpoint else None,
            },
        )
        summary.artifacts.append(self.artifacts.write_manifest(MANIFEST, manifest))


def run_experiment(spec: ExperimentSpec, bundle: ConfigBundle) -> RunSummary:
    return ExperimentService(spec, bundle).run()
