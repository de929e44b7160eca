"""One-dimensional point mass driven toward a target by a continuous force."""

from typing import Optional, Union

import numpy as np

from ..interfaces.environment import EnvironmentInterface, EnvStep

POSITION_LIMIT = 2.0
TARGET_LIMIT = 1.0


class PointMass1D(EnvironmentInterface):
    """
    velocity += force * dt; position += velocity * dt, with force clamped to [-1, 1].
    The mass stops at the walls +-POSITION_LIMIT. Reward is -(position - target)^2 * dt,
    so a single step costs at most (POSITION_LIMIT + TARGET_LIMIT)^2 * dt.

    Observation: (position, velocity, target).
    """

    continuous = True

    def __init__(self, episode_cap: int = 200, dt: float = 0.1):
        self.episode_cap = episode_cap
        self.dt = dt
        self._rng = np.random.default_rng()
        self.position = 0.0
        self.velocity = 0.0
        self.target = 0.0
        self.steps = 0

    @property
    def observation_size(self) -> int:
        return 3

    @property
    def action_size(self) -> int:
        return 1

    @property
    def reward_bound(self) -> float:
        return (POSITION_LIMIT + TARGET_LIMIT) ** 2 * self.dt

    def observe(self) -> np.ndarray:
        return np.array([self.position, self.velocity, self.target], dtype=np.float64)

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self.position = float(self._rng.uniform(-TARGET_LIMIT, TARGET_LIMIT))
        self.target = float(self._rng.uniform(-TARGET_LIMIT, TARGET_LIMIT))
        self.velocity = 0.0
        self.steps = 0
        return self.observe()

    def set_state(self, position: float, velocity: float, target: float) -> np.ndarray:
        self.position, self.velocity, self.target = float(position), float(velocity), float(target)
        self.steps = 0
        return self.observe()

    def step(self, action: Union[int, np.ndarray]) -> EnvStep:
        force = float(np.clip(np.asarray(action, dtype=np.float64).reshape(-1)[0], -1.0, 1.0))
        self.velocity += force * self.dt
        self.position += self.velocity * self.dt
        if abs(self.position) > POSITION_LIMIT:
            self.position = float(np.clip(self.position, -POSITION_LIMIT, POSITION_LIMIT))
            self.velocity = 0.0

        self.steps += 1
        reward = -((self.position - self.target) ** 2) * self.dt
        terminal = self.steps >= self.episode_cap
        return EnvStep(next_observation=self.observe(), reward=reward, terminal=terminal)
