"""Training run orchestration: shared state, actor-learner processes or threads, evaluation, outputs."""

import hashlib
import logging
import os
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, List, Optional, Tuple

import numpy as np

from ..config import settings
from ..dependencies import (
    build_layout,
    build_optimizers,
    build_shared_statistics,
    get_dtype,
    get_environment,
)
from ..exceptions import RuntimeFault
from ..models.mlp import NetworkLayout, init_params
from ..schemas import Algo, Backend, MetricRecord, RunConfig
from ..services.actor_learner import LearnerContext, ThreadStats, run_actor_learner
from ..services.checkpoint_service import checkpoint_save
from ..services.evaluation_service import Evaluator
from ..services.optimizers import LearningRateSchedule
from ..services.shared_state import GlobalCounter, SharedParams, TargetSnapshot, mp_context, new_target_snapshot
from ..utils.logging_setup import configure_logging
from ..utils.metrics_writer import MetricsWriter

logger = logging.getLogger(__name__)

Clock = Callable[[], float]


def stub_clock() -> float:
    """Logical clock of deterministic mode"""
    return 0.0


def run_id_for(config: RunConfig) -> str:
    return hashlib.sha256(config.render().encode("utf-8")).hexdigest()[:12]


@dataclass
class TrainResult:
    """Outcome of one training run"""
    config: RunConfig
    layout: NetworkLayout
    final_record: MetricRecord
    records: List[MetricRecord]
    checkpoint_path: Optional[str]
    thread_stats: List[ThreadStats]
    global_frames: int
    elapsed_seconds: float
    theta: np.ndarray
    theta_v: np.ndarray
    time_to_reference: Optional[float] = None
    frames_to_reference: Optional[int] = None
    errors: List[str] = field(default_factory=list)

    @property
    def frames_per_second(self) -> float:
        if self.elapsed_seconds <= 0:
            return 0.0
        return self.global_frames / self.elapsed_seconds

    @property
    def reached_reference(self) -> bool:
        return self.time_to_reference is not None


class _ReferenceTracker:
    """Remembers when evaluation first reached the reference score"""

    def __init__(self, reference_score: Optional[float], stop_event: Any, stop_at_reference: bool):
        self.reference_score = reference_score
        self.stop_event = stop_event
        self.stop_at_reference = stop_at_reference
        self.time: Optional[float] = None
        self.frames: Optional[int] = None

    def observe(self, record: MetricRecord) -> None:
        if self.reference_score is None or self.time is not None:
            return
        if record.eval_mean_score >= self.reference_score:
            self.time = record.wall_clock_seconds
            self.frames = record.global_frames
            logger.info(f"Reference score {self.reference_score} reached at T={record.global_frames}")
            if self.stop_at_reference:
                self.stop_event.set()


class _PeriodicCheckpointer:
    def __init__(self, out_dir: str, layout: NetworkLayout, params: SharedParams, interval: int):
        self.out_dir = out_dir
        self.layout = layout
        self.params = params
        self.interval = interval
        self._next = interval
        self._lock = threading.Lock()

    def maybe_save(self, T: int) -> None:
        if self.interval <= 0 or T < self._next:
            return
        with self._lock:
            if T < self._next:
                return
            self._next = (T // self.interval + 1) * self.interval
        theta, theta_v = self.params.snapshot()
        checkpoint_save(os.path.join(self.out_dir, f"ckpt-{T}.ckpt"), self.layout, theta, theta_v)


def _learner_process(
    config: RunConfig,
    context: LearnerContext,
    statistics: List[Any],
    thread_id: int,
    results: Any,
) -> None:
    """Entry point of one actor-learner process; its ThreadStats goes back through `results`"""
    if not logging.getLogger().handlers:
        configure_logging(settings.LOG_LEVEL, settings.log_format)
    try:
        optimizers = build_optimizers(config, context.params, statistics)
        env = get_environment(config.env)
    except Exception as e:
        context.stop_event.set()
        results.put(ThreadStats(thread_id=thread_id, error=f"thread {thread_id} fault: {e}"))
        return
    results.put(run_actor_learner(config.algo, context, env, config.hp, optimizers, thread_id, config.seed))


class TrainingController:
    """Builds the shared state of one run and drives its actor-learners"""

    def __init__(
        self,
        config: RunConfig,
        clock: Clock = time.monotonic,
        reference_score: Optional[float] = None,
        stop_at_reference: bool = False,
        poll_seconds: float = 0.05,
    ):
        self.config = config
        self.clock = stub_clock if config.deterministic else clock
        self.reference_score = reference_score
        self.stop_at_reference = stop_at_reference
        self.poll_seconds = poll_seconds
        self.use_processes = config.backend == Backend.PROCESS and not config.deterministic

    def _build_state(self) -> Tuple[NetworkLayout, SharedParams, Optional[TargetSnapshot]]:
        config = self.config
        sample_env = get_environment(config.env)
        layout = build_layout(config, sample_env)
        dtype = get_dtype(config.network.precision)
        theta, theta_v = init_params(layout, np.random.default_rng(config.seed), dtype=dtype)
        params = SharedParams(theta, theta_v if theta_v.size else None, process_shared=self.use_processes)
        target = None
        if config.algo in (Algo.Q1, Algo.SARSA1, Algo.QN):
            target = new_target_snapshot(theta, process_shared=self.use_processes)
        return layout, params, target

    def _run_threads(self, context: LearnerContext, statistics: List[Any], stats: List[Optional[ThreadStats]]) -> None:
        config = self.config

        def body(thread_id: int) -> None:
            stats[thread_id] = run_actor_learner(
                config.algo,
                context,
                get_environment(config.env),
                config.hp,
                build_optimizers(config, context.params, statistics),
                thread_id,
                config.seed,
            )

        if config.deterministic:
            body(0)
            return
        threads = [
            threading.Thread(target=body, args=(i,), name=f"actor-learner-{i}")
            for i in range(config.threads)
        ]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()

    def _run_processes(
        self,
        context: LearnerContext,
        statistics: List[Any],
        stats: List[Optional[ThreadStats]],
        checkpointer: _PeriodicCheckpointer,
        evaluator: Evaluator,
    ) -> None:
        """Start one process per actor-learner, collect their stats, and checkpoint while they run"""
        ctx = mp_context()
        results = ctx.Queue()
        workers = [
            ctx.Process(
                target=_learner_process,
                args=(self.config, context, statistics, i, results),
                name=f"actor-learner-{i}",
            )
            for i in range(self.config.threads)
        ]
        for worker in workers:
            worker.start()
        # evaluator thread only after the fork
        evaluator.start()

        pending = set(range(len(workers)))
        while pending:
            try:
                result: ThreadStats = results.get(timeout=self.poll_seconds)
                stats[result.thread_id] = result
                pending.discard(result.thread_id)
            except queue.Empty:
                if any(workers[i].exitcode not in (None, 0) for i in pending):
                    context.stop_event.set()
                if not any(worker.is_alive() for worker in workers) and results.empty():
                    break
            checkpointer.maybe_save(context.counter.value)

        for worker in workers:
            worker.join()
        for i in pending:
            stats[i] = ThreadStats(thread_id=i, error=f"thread {i} process exited with code {workers[i].exitcode}")

    def run(self) -> TrainResult:
        config = self.config
        out_dir = config.out_dir
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "config.yaml"), "w", encoding="utf-8") as f:
            f.write(config.render())

        layout, params, target = self._build_state()
        counter = GlobalCounter(process_shared=self.use_processes)
        stop_event = mp_context().Event() if self.use_processes else threading.Event()
        schedule = LearningRateSchedule(config.optimizer.lr, config.total_frames, config.optimizer.anneal_lr)
        run_id = run_id_for(config)
        tracker = _ReferenceTracker(self.reference_score, stop_event, self.stop_at_reference)
        checkpointer = _PeriodicCheckpointer(out_dir, layout, params, config.checkpoint_interval)

        backend = "inline" if config.deterministic else config.backend.value
        logger.info(
            f"Run {run_id}: {config.algo.value} on {config.env.id.value}, {config.threads} {backend} learner(s), "
            f"{config.total_frames} frames, theta {layout.theta_size} + theta_v {layout.theta_v_size}"
        )

        writer = MetricsWriter(out_dir)

        def sink(record: MetricRecord) -> None:
            writer.write(record)
            tracker.observe(record)

        started = self.clock()
        evaluator = Evaluator(
            params=params,
            counter=counter,
            layout=layout,
            env=get_environment(config.env),
            lr_schedule=schedule,
            eval_interval=config.eval_interval,
            episodes=config.eval_episodes,
            seed=config.seed,
            run_id=run_id,
            thread_count=config.threads,
            clock=self.clock,
            sink=sink,
        )

        if config.deterministic:
            def on_update(T: int) -> None:
                evaluator.maybe_evaluate(T)
                checkpointer.maybe_save(T)
        elif self.use_processes:
            on_update = None
        else:
            on_update = checkpointer.maybe_save if config.checkpoint_interval > 0 else None

        context = LearnerContext(
            layout=layout,
            params=params,
            counter=counter,
            total_frames=config.total_frames,
            lr_schedule=schedule,
            target=target,
            stop_event=stop_event,
            on_update=on_update,
        )
        statistics = build_shared_statistics(config, params)
        stats: List[Optional[ThreadStats]] = [None] * config.threads

        if config.deterministic:
            self._run_threads(context, statistics, stats)
        else:
            try:
                if self.use_processes:
                    self._run_processes(context, statistics, stats, checkpointer, evaluator)
                else:
                    evaluator.start()
                    self._run_threads(context, statistics, stats)
            finally:
                evaluator.stop()

        errors = [s.error for s in stats if s is not None and s.error]
        final_record = evaluator.record(counter.value)
        elapsed = self.clock() - started
        writer.close()

        theta, theta_v = params.snapshot()
        checkpoint_path = checkpoint_save(os.path.join(out_dir, "final.ckpt"), layout, theta, theta_v)

        if errors:
            logger.error(f"Run {run_id} stopped by a learner fault; partial outputs flushed to {out_dir}")
            raise RuntimeFault("; ".join(errors))

        logger.info(
            f"Run {run_id} done at T={counter.value}: eval {final_record.eval_mean_score:.4f} "
            f"+- {final_record.eval_std:.4f}"
        )
        return TrainResult(
            config=config,
            layout=layout,
            final_record=final_record,
            records=list(evaluator.records),
            checkpoint_path=checkpoint_path,
            thread_stats=[s for s in stats if s is not None],
            global_frames=counter.value,
            elapsed_seconds=elapsed,
            theta=theta,
            theta_v=theta_v,
            time_to_reference=tracker.time,
            frames_to_reference=tracker.frames,
            errors=errors,
        )


def train(
    config: RunConfig,
    clock: Clock = time.monotonic,
    reference_score: Optional[float] = None,
    stop_at_reference: bool = False,
) -> TrainResult:
    """
    Run one training job and write config.yaml, metrics.jsonl, metrics.prom and
    final.ckpt into config.out_dir

    Args:
        config: Run configuration
        clock: Wall-clock source; replaced by a stub returning 0.0 in deterministic mode
        reference_score: Record the first evaluation time/frames reaching this score
        stop_at_reference: Stop all learners once the reference is reached

    Raises:
        ConfigurationError: invalid or incompatible configuration
        RuntimeFault: a learner thread failed; partial outputs are still written
    """
    return TrainingController(config, clock, reference_score, stop_at_reference).run()
