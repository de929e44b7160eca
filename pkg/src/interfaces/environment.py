"""Environment interface"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ..exceptions import UnsupportedError


@dataclass
class EnvStep:
    """Result of one environment transition"""
    next_observation: np.ndarray
    reward: float
    terminal: bool


@dataclass
class TabularMDP:
    """
    Finite MDP in dense form

    transitions[s, a, s'] are probabilities, rewards[s, a] expected rewards;
    terminal[s] marks absorbing states whose value is fixed at 0.
    """
    transitions: np.ndarray
    rewards: np.ndarray
    terminal: np.ndarray

    @property
    def n_states(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_actions(self) -> int:
        return self.rewards.shape[1]


class EnvironmentInterface(ABC):
    """Uniform step/reset interface; one instance per actor-learner thread"""

    #: True for environments whose actions are real vectors
    continuous: bool = False

    @property
    @abstractmethod
    def observation_size(self) -> int:
        """Length of every observation vector"""
        pass

    @property
    @abstractmethod
    def action_size(self) -> int:
        """Number of discrete actions, or the action dimension when continuous"""
        pass

    @property
    @abstractmethod
    def reward_bound(self) -> float:
        """Upper bound on |reward| for a single step"""
        pass

    @abstractmethod
    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        """
        Put the environment in a start state

        Args:
            seed: Seed for any randomness of the start state; None keeps the current stream

        Returns:
            Initial observation
        """
        pass

    @abstractmethod
    def step(self, action: Union[int, np.ndarray]) -> EnvStep:
        """
        Apply an action

        Args:
            action: Discrete action index, or a real vector for continuous environments

        Returns:
            EnvStep with the next observation, reward and terminal flag
        """
        pass

    def to_tabular(self) -> TabularMDP:
        """Enumerate the environment as a finite MDP for dynamic programming"""
        raise UnsupportedError(f"{type(self).__name__} cannot be enumerated")
