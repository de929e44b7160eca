"""Deterministic chain MDP used as the dynamic-programming oracle environment."""

from typing import Optional, Union

import numpy as np

from ..exceptions import ConfigurationError
from ..interfaces.environment import EnvironmentInterface, EnvStep, TabularMDP

LEFT = 0
RIGHT = 1


class ChainMDP(EnvironmentInterface):
    """
    States 0..n-1, start at 0. LEFT moves to max(0, s-1), RIGHT to s+1.
    Entering state n-1 pays +1 and ends the episode; every other step pays 0.
    Hitting the episode cap also ends the episode.
    """

    def __init__(self, n_states: int = 5, episode_cap: int = 50):
        if n_states < 2:
            raise ConfigurationError(f"ChainMDP needs at least 2 states, got {n_states}")
        self.n_states = n_states
        self.episode_cap = episode_cap
        self.state = 0
        self.steps = 0

    @property
    def observation_size(self) -> int:
        return self.n_states

    @property
    def action_size(self) -> int:
        return 2

    @property
    def reward_bound(self) -> float:
        return 1.0

    def observe(self, state: Optional[int] = None) -> np.ndarray:
        obs = np.zeros(self.n_states, dtype=np.float64)
        obs[self.state if state is None else state] = 1.0
        return obs

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        self.state = 0
        self.steps = 0
        return self.observe()

    def _move(self, state: int, action: int) -> int:
        if action == LEFT:
            return max(0, state - 1)
        return state + 1

    def step(self, action: Union[int, np.ndarray]) -> EnvStep:
        action = int(action)
        if action not in (LEFT, RIGHT):
            raise ConfigurationError(f"ChainMDP action must be 0 or 1, got {action}")

        self.state = self._move(self.state, action)
        self.steps += 1
        goal = self.state == self.n_states - 1
        reward = 1.0 if goal else 0.0
        terminal = goal or self.steps >= self.episode_cap
        return EnvStep(next_observation=self.observe(), reward=reward, terminal=terminal)

    def to_tabular(self) -> TabularMDP:
        n = self.n_states
        transitions = np.zeros((n, 2, n))
        rewards = np.zeros((n, 2))
        terminal = np.zeros(n, dtype=bool)
        terminal[n - 1] = True
        for s in range(n - 1):
            for a in (LEFT, RIGHT):
                s_next = self._move(s, a)
                transitions[s, a, s_next] = 1.0
                rewards[s, a] = 1.0 if s_next == n - 1 else 0.0
        # the goal is absorbing
        transitions[n - 1, :, n - 1] = 1.0
        return TabularMDP(transitions=transitions, rewards=rewards, terminal=terminal)
