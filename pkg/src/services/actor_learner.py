"""Actor-learner thread bodies for one-step Q, one-step Sarsa, n-step Q and A3C.

Each thread owns its environment, generator, gradient buffer, exploration state
and (unless shared) optimizer accumulators. Threads meet only in the shared
parameters, the target snapshot, the frame counter and shared RMSProp statistics.
"""

import logging
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, List, Optional

import numpy as np

from ..exceptions import EnvironmentFault
from ..interfaces.environment import EnvironmentInterface, EnvStep
from ..interfaces.optimizer import OptimizerInterface
from ..models.mlp import GradientBuffer, NetworkLayout, forward
from ..schemas import Algo, HyperParamsConfig
from .exploration import ExplorationPolicy, epsilon_at, sample_epsilon_final, select_epsilon_greedy
from .gradients import (
    Trajectory,
    a3c_continuous_gradients,
    a3c_gradients,
    accumulate_q_gradient,
    n_step_q_gradients,
)
from .optimizers import LearningRateSchedule, clip_by_global_norm
from .shared_state import GlobalCounter, SharedParams, TargetSnapshot, refresh_target, snapshot_params
from .targets import one_step_q_target, one_step_sarsa_target

logger = logging.getLogger(__name__)


@dataclass
class LearnerContext:
    """Objects shared by every actor-learner of one run"""
    layout: NetworkLayout
    params: SharedParams
    counter: GlobalCounter
    total_frames: int
    lr_schedule: LearningRateSchedule
    target: Optional[TargetSnapshot] = None
    # threading.Event, or a multiprocessing Event when learners are processes
    stop_event: Any = field(default_factory=threading.Event)
    on_update: Optional[Callable[[int], None]] = None

    def should_stop(self) -> bool:
        return self.stop_event.is_set() or self.counter.value >= self.total_frames


@dataclass
class ThreadStats:
    """What one actor-learner did"""
    thread_id: int
    steps: int = 0
    updates: int = 0
    episodes: int = 0
    episode_returns: List[float] = field(default_factory=list)
    epsilon_final: Optional[float] = None
    error: Optional[str] = None


def thread_rng(seed: int, thread_id: int) -> np.random.Generator:
    return np.random.default_rng([seed, thread_id])


class _Episode:
    """Environment wrapper tracking the running return and converting faults"""

    def __init__(self, env: EnvironmentInterface, rng: np.random.Generator, stats: ThreadStats):
        self.env = env
        self.rng = rng
        self.stats = stats
        self.score = 0.0
        self.observation = self.reset()

    def reset(self) -> np.ndarray:
        try:
            self.observation = self.env.reset(seed=int(self.rng.integers(2**31)))
        except Exception as e:
            raise EnvironmentFault(f"reset failed: {e}") from e
        self.score = 0.0
        return self.observation

    def step(self, action) -> EnvStep:
        try:
            result = self.env.step(action)
        except Exception as e:
            raise EnvironmentFault(f"step failed: {e}") from e
        self.score += result.reward
        self.stats.steps += 1
        if result.terminal:
            self.stats.episodes += 1
            self.stats.episode_returns.append(self.score)
        return result


def _apply(
    context: LearnerContext,
    optimizers: List[OptimizerInterface],
    buffer: GradientBuffer,
    hp: HyperParamsConfig,
    T: int,
    stats: ThreadStats,
) -> None:
    if hp.clip_norm is not None:
        clip_by_global_norm([buffer.theta, buffer.theta_v], hp.clip_norm)
    eta = context.lr_schedule.eta(T)
    optimizers[0].step(context.params.theta, buffer.theta, eta=eta)
    if buffer.theta_v.size:
        optimizers[1].step(context.params.theta_v, buffer.theta_v, eta=eta)
    buffer.clear()
    stats.updates += 1
    if context.on_update is not None:
        context.on_update(T)


def _new_exploration(hp: HyperParamsConfig, rng: np.random.Generator, thread_id: int) -> ExplorationPolicy:
    return ExplorationPolicy(
        epsilon_final=sample_epsilon_final(rng, hp.epsilon_support),
        anneal_frames=hp.anneal_frames,
        thread_id=thread_id,
    )


def _run_one_step(
    algo: Algo,
    context: LearnerContext,
    episode: _Episode,
    hp: HyperParamsConfig,
    optimizers: List[OptimizerInterface],
    rng: np.random.Generator,
    stats: ThreadStats,
) -> None:
    spec = context.layout.policy
    dtype = context.params.theta.dtype
    buffer = GradientBuffer.zeros(context.layout, dtype=dtype)
    exploration = _new_exploration(hp, rng, stats.thread_id)
    stats.epsilon_final = exploration.epsilon_final
    sarsa = algo == Algo.SARSA1
    pending_action: Optional[int] = None
    t = 0

    while not context.should_stop():
        theta = snapshot_params(context.params.theta)
        obs = episode.observation
        if pending_action is None:
            q = forward(theta, spec, obs)[0].q_values
            action = select_epsilon_greedy(q, epsilon_at(exploration, context.counter.value), rng)
        else:
            action = pending_action
            pending_action = None

        result = episode.step(action)
        theta_minus = context.target.theta_minus

        if result.terminal:
            y = float(result.reward)
        elif sarsa:
            q_live = forward(theta, spec, result.next_observation)[0].q_values
            pending_action = select_epsilon_greedy(q_live, epsilon_at(exploration, context.counter.value), rng)
            q_next = forward(theta_minus, spec, result.next_observation)[0].q_values
            y = one_step_sarsa_target(result.reward, q_next[pending_action], False, hp.gamma)
        else:
            q_next = forward(theta_minus, spec, result.next_observation)[0].q_values
            y = one_step_q_target(result.reward, q_next, False, hp.gamma)

        accumulate_q_gradient(buffer, theta, spec, obs, action, y)
        T = context.counter.increment(1)
        t += 1
        refresh_target(context.params.theta, context.target, T, hp.target_interval)

        if t % hp.async_update_interval == 0 or result.terminal:
            _apply(context, optimizers, buffer, hp, T, stats)

        if result.terminal:
            episode.reset()
            if hp.resample_epsilon_per_episode:
                exploration = _new_exploration(hp, rng, stats.thread_id)
                stats.epsilon_final = exploration.epsilon_final
        else:
            episode.observation = result.next_observation


def _sample_discrete(probs: np.ndarray, rng: np.random.Generator) -> int:
    p = np.asarray(probs, dtype=np.float64)
    return int(rng.choice(p.shape[0], p=p / p.sum()))


def _run_n_step(
    algo: Algo,
    context: LearnerContext,
    episode: _Episode,
    hp: HyperParamsConfig,
    optimizers: List[OptimizerInterface],
    rng: np.random.Generator,
    stats: ThreadStats,
) -> None:
    layout = context.layout
    spec = layout.policy
    dtype = context.params.theta.dtype
    buffer = GradientBuffer.zeros(layout, dtype=dtype)
    exploration = None
    if algo == Algo.QN:
        exploration = _new_exploration(hp, rng, stats.thread_id)
        stats.epsilon_final = exploration.epsilon_final

    while not context.should_stop():
        theta, theta_v = context.params.snapshot()
        crossing_T: Optional[int] = None
        observations, actions, rewards = [], [], []
        result = None
        T = context.counter.value

        for _ in range(hp.t_max):
            if observations and context.should_stop():
                break
            obs = episode.observation
            if algo == Algo.QN:
                q = forward(theta, spec, obs)[0].q_values
                action = select_epsilon_greedy(q, epsilon_at(exploration, T), rng)
            elif algo == Algo.A3C:
                out = forward(theta, spec, obs, theta_v)[0]
                action = _sample_discrete(out.probs, rng)
            else:
                out = forward(theta, spec, obs)[0]
                action = rng.normal(out.mu.astype(np.float64), np.sqrt(out.sigma2))

            result = episode.step(action)
            observations.append(obs)
            actions.append(action)
            rewards.append(result.reward)
            T = context.counter.increment(1)
            if context.target is not None and T % hp.target_interval == 0:
                crossing_T = T
            if result.terminal:
                break
            episode.observation = result.next_observation

        traj = Trajectory(
            observations=observations,
            actions=actions,
            rewards=rewards,
            terminal=result.terminal,
            final_observation=None if result.terminal else result.next_observation,
        )

        if algo == Algo.QN:
            n_step_q_gradients(traj, theta, context.target.theta_minus, spec, hp.gamma, buffer=buffer)
        elif algo == Algo.A3C:
            a3c_gradients(traj, theta, theta_v, spec, hp.beta, hp.gamma, buffer=buffer)
        else:
            a3c_continuous_gradients(
                traj, theta, theta_v, spec, layout.value, hp.continuous_beta, hp.gamma, buffer=buffer
            )

        _apply(context, optimizers, buffer, hp, T, stats)
        if crossing_T is not None:
            refresh_target(context.params.theta, context.target, crossing_T, hp.target_interval)

        if result.terminal:
            episode.reset()
            if exploration is not None and hp.resample_epsilon_per_episode:
                exploration = _new_exploration(hp, rng, stats.thread_id)
                stats.epsilon_final = exploration.epsilon_final


def run_actor_learner(
    algo: Algo,
    context: LearnerContext,
    env: EnvironmentInterface,
    hp: HyperParamsConfig,
    optimizers: List[OptimizerInterface],
    thread_id: int,
    seed: int,
) -> ThreadStats:
    """
    Body of one actor-learner thread

    Runs until the global counter reaches context.total_frames or the stop flag
    is set. A fault is recorded in the returned stats and raises the stop flag so
    the other threads wind down; it is not re-raised here.

    Args:
        algo: Which algorithm to run
        context: Shared parameters, target, counter, schedule and stop flag
        env: Environment instance owned by this thread
        hp: Hyperparameters
        optimizers: [theta optimizer, theta_v optimizer (A3C only)]
        thread_id: Index of this thread
        seed: Run seed; the thread generator is derived from (seed, thread_id)

    Returns:
        ThreadStats
    """
    algo = Algo(algo)
    stats = ThreadStats(thread_id=thread_id)
    rng = thread_rng(seed, thread_id)
    logger.info(f"Actor-learner {thread_id} starting ({algo.value})")

    try:
        if context.should_stop():
            return stats
        episode = _Episode(env, rng, stats)
        if algo in (Algo.Q1, Algo.SARSA1):
            _run_one_step(algo, context, episode, hp, optimizers, rng, stats)
        else:
            _run_n_step(algo, context, episode, hp, optimizers, rng, stats)
    except Exception as e:
        kind = "environment fault" if isinstance(e, EnvironmentFault) else "fault"
        stats.error = f"thread {thread_id} {kind}: {e}"
        logger.exception(f"Actor-learner {thread_id} stopped by {kind}")
        context.stop_event.set()
    finally:
        logger.info(
            f"Actor-learner {thread_id} finished: {stats.steps} steps, "
            f"{stats.updates} updates, {stats.episodes} episodes"
        )
    return stats
