"""TD targets and forward-view n-step returns."""

from typing import Sequence

import numpy as np

from ..exceptions import ConfigurationError


def one_step_q_target(r: float, q_next: np.ndarray, terminal: bool, gamma: float) -> float:
    """y = r for terminal s', else r + gamma * max_a' Q(s', a'; theta^-)"""
    q_next = np.asarray(q_next)
    if q_next.size == 0:
        raise ConfigurationError("q_next must not be empty")
    if terminal:
        return float(r)
    return float(r) + gamma * float(np.max(q_next))


def one_step_sarsa_target(r: float, q_next_taken: float, terminal: bool, gamma: float) -> float:
    """y = r for terminal s', else r + gamma * Q(s', a'; theta^-) for the action a' actually taken"""
    if terminal:
        return float(r)
    return float(r) + gamma * float(q_next_taken)


def n_step_returns(rewards: Sequence[float], bootstrap: float, gamma: float) -> np.ndarray:
    """
    Longest available n-step return for every step of a rollout

    R_i = r_i + gamma * R_{i+1} with R_L = bootstrap, evaluated backwards.

    Returns:
        Returns in time order, float64
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.size == 0:
        raise ConfigurationError("rewards must not be empty")

    returns = np.empty_like(rewards)
    R = float(bootstrap)
    for i in range(rewards.size - 1, -1, -1):
        R = rewards[i] + gamma * R
        returns[i] = R
    return returns
