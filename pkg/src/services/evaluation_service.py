"""Greedy evaluation of parameter vectors and the periodic evaluator."""

import logging
import threading
from typing import Callable, List, Optional, Tuple

import numpy as np

from ..interfaces.environment import EnvironmentInterface
from ..models.mlp import NetworkLayout, forward
from ..schemas import EvaluationResult, HeadKind, MetricRecord
from .checkpoint_service import checkpoint_load
from .optimizers import LearningRateSchedule
from .shared_state import GlobalCounter, SharedParams

logger = logging.getLogger(__name__)


def greedy_policy_action(theta: np.ndarray, theta_v: np.ndarray, layout: NetworkLayout, obs: np.ndarray):
    """argmax Q, argmax pi, or the Gaussian mean"""
    spec = layout.policy
    if spec.head_kind == HeadKind.Q_VALUES:
        return int(np.argmax(forward(theta, spec, obs)[0].q_values))
    if spec.head_kind == HeadKind.POLICY_VALUE_SHARED:
        return int(np.argmax(forward(theta, spec, obs, theta_v)[0].probs))
    return np.asarray(forward(theta, spec, obs)[0].mu, dtype=np.float64)


def evaluate_params(
    theta: np.ndarray,
    theta_v: np.ndarray,
    layout: NetworkLayout,
    env: EnvironmentInterface,
    episodes: int,
    seed: int,
) -> EvaluationResult:
    """
    Run `episodes` greedy episodes and report the undiscounted score

    Episode reset seeds come from default_rng(seed), so the same parameters and
    seed give the same result.
    """
    rng = np.random.default_rng(seed)
    scores: List[float] = []
    for _ in range(episodes):
        obs = env.reset(seed=int(rng.integers(2**31)))
        score = 0.0
        while True:
            result = env.step(greedy_policy_action(theta, theta_v, layout, obs))
            score += result.reward
            if result.terminal:
                break
            obs = result.next_observation
        scores.append(score)

    values = np.asarray(scores, dtype=np.float64)
    return EvaluationResult(mean=float(values.mean()), std=float(values.std()), episodes=episodes, scores=scores)


def evaluate(
    checkpoint_path: str,
    layout: NetworkLayout,
    env: EnvironmentInterface,
    episodes: int,
    seed: int,
) -> EvaluationResult:
    """Greedy evaluation of a checkpoint; the layout must match the one it was written for"""
    checkpoint = checkpoint_load(checkpoint_path, layout)
    result = evaluate_params(checkpoint.theta, checkpoint.theta_v, layout, env, episodes, seed)
    logger.info(f"Evaluated {checkpoint_path}: mean {result.mean:.4f} +- {result.std:.4f} over {episodes} episodes")
    return result


class Evaluator:
    """
    Evaluates parameter snapshots each time T crosses a multiple of eval_interval

    Used inline from the learner's update hook in deterministic mode, or from its
    own polling thread otherwise. Records go to `sink` in strictly increasing
    frame order.
    """

    def __init__(
        self,
        params: SharedParams,
        counter: GlobalCounter,
        layout: NetworkLayout,
        env: EnvironmentInterface,
        lr_schedule: LearningRateSchedule,
        eval_interval: int,
        episodes: int,
        seed: int,
        run_id: str,
        thread_count: int,
        clock: Callable[[], float],
        sink: Optional[Callable[[MetricRecord], None]] = None,
        poll_seconds: float = 0.01,
    ):
        self.params = params
        self.counter = counter
        self.layout = layout
        self.env = env
        self.lr_schedule = lr_schedule
        self.eval_interval = eval_interval
        self.episodes = episodes
        self.seed = seed
        self.run_id = run_id
        self.thread_count = thread_count
        self.clock = clock
        self.sink = sink
        self.poll_seconds = poll_seconds

        self.records: List[MetricRecord] = []
        self._start_time = clock()
        self._next_boundary = eval_interval
        self._done = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._lock = threading.Lock()

    @property
    def last_frames(self) -> int:
        return self.records[-1].global_frames if self.records else -1

    def record(self, T: int) -> MetricRecord:
        """Evaluate the current parameters and emit one record at frame T"""
        with self._lock:
            if self.records and T <= self.last_frames:
                return self.records[-1]
            theta, theta_v = self.params.snapshot()
            result = evaluate_params(theta, theta_v, self.layout, self.env, self.episodes, self.seed)
            record = MetricRecord(
                run_id=self.run_id,
                wall_clock_seconds=self.clock() - self._start_time,
                global_frames=T,
                eval_mean_score=result.mean,
                eval_std=result.std,
                current_eta=self.lr_schedule.eta(T),
                thread_count=self.thread_count,
            )
            self.records.append(record)
            self._next_boundary = (T // self.eval_interval + 1) * self.eval_interval
            if self.sink is not None:
                self.sink(record)
            logger.info(f"Eval at T={T}: mean {result.mean:.4f} +- {result.std:.4f}")
            return record

    def maybe_evaluate(self, T: int) -> Optional[MetricRecord]:
        if T >= self._next_boundary:
            return self.record(T)
        return None

    def _poll(self) -> None:
        while not self._done.wait(self.poll_seconds):
            self.maybe_evaluate(self.counter.value)

    def start(self) -> None:
        self._thread = threading.Thread(target=self._poll, name="evaluator", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._done.set()
        if self._thread is not None:
            self._thread.join()
            self._thread = None


def random_baseline(
    env: EnvironmentInterface,
    episodes: int,
    seed: int,
) -> Tuple[float, float]:
    """Mean and std of the score of a uniformly random policy, on the same reset seeds as evaluate_params"""
    rng = np.random.default_rng(seed)
    action_rng = np.random.default_rng([seed, 1])
    scores = []
    for _ in range(episodes):
        env.reset(seed=int(rng.integers(2**31)))
        score = 0.0
        while True:
            if env.continuous:
                action = action_rng.uniform(-1.0, 1.0, size=env.action_size)
            else:
                action = int(action_rng.integers(env.action_size))
            result = env.step(action)
            score += result.reward
            if result.terminal:
                break
        scores.append(score)
    values = np.asarray(scores, dtype=np.float64)
    return float(values.mean()), float(values.std())
