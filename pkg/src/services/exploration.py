"""Per-thread exploration: sampled final epsilon, linear annealing, epsilon-greedy."""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import ConfigurationError
from ..schemas import DEFAULT_EPSILON_SUPPORT


def sample_epsilon_final(
    rng: np.random.Generator,
    support: Sequence[Tuple[float, float]] = DEFAULT_EPSILON_SUPPORT,
    size: Optional[int] = None,
) -> Union[float, np.ndarray]:
    """
    Draw epsilon_final from a discrete distribution

    Args:
        rng: Thread generator
        support: (epsilon, probability) pairs; probabilities must sum to 1
        size: Number of draws; None returns a single float

    Returns:
        One value, or an array of size values
    """
    values = np.array([eps for eps, _ in support], dtype=np.float64)
    probs = np.array([p for _, p in support], dtype=np.float64)
    if values.size == 0:
        raise ConfigurationError("epsilon support is empty")
    if abs(probs.sum() - 1.0) > 1e-9:
        raise ConfigurationError(f"epsilon probabilities sum to {probs.sum()}, expected 1")

    idx = rng.choice(values.size, size=size, p=probs)
    if size is None:
        return float(values[idx])
    return values[idx]


@dataclass
class ExplorationPolicy:
    """epsilon annealed linearly from 1 to epsilon_final over anneal_frames"""
    epsilon_final: float
    anneal_frames: int
    thread_id: int = 0

    def __post_init__(self):
        if not 0.0 < self.epsilon_final <= 1.0:
            raise ConfigurationError(f"epsilon_final must lie in (0, 1], got {self.epsilon_final}")
        if self.anneal_frames < 1:
            raise ConfigurationError(f"anneal_frames must be >= 1, got {self.anneal_frames}")


def epsilon_at(policy: ExplorationPolicy, frame: int) -> float:
    progress = min(1.0, frame / policy.anneal_frames)
    return 1.0 + (policy.epsilon_final - 1.0) * progress


def greedy_action(q: np.ndarray, rng: np.random.Generator) -> int:
    """argmax with a uniform draw among tied maxima"""
    ties = np.flatnonzero(q == np.max(q))
    if ties.size == 1:
        return int(ties[0])
    return int(ties[rng.integers(ties.size)])


def select_epsilon_greedy(q: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Uniform random action with probability epsilon, greedy otherwise"""
    if rng.random() < epsilon:
        return int(rng.integers(len(q)))
    return greedy_action(q, rng)
