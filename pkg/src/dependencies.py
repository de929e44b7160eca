"""Factories for environments, network layouts and optimizers"""

from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np

from .config import settings
from .environments import ChainMDP, GridMaze, PointMass1D
from .exceptions import ConfigurationError
from .interfaces.environment import EnvironmentInterface
from .interfaces.optimizer import OptimizerInterface
from .models.mlp import MLPSpec, NetworkLayout
from .schemas import Algo, EnvConfig, EnvId, HeadKind, OptimizerKind, Precision, RunConfig
from .services.optimizers import make_optimizer
from .services.shared_state import SharedParams, SharedVector


def get_environment(env_config: EnvConfig) -> EnvironmentInterface:
    """Build a fresh environment; every thread and evaluator gets its own"""
    cap = env_config.episode_cap
    if env_config.id == EnvId.CHAIN:
        return ChainMDP(n_states=env_config.n_states, episode_cap=cap or 50)
    if env_config.id == EnvId.GRID_MAZE:
        return GridMaze(
            width=env_config.width,
            height=env_config.height,
            n_apples=env_config.n_apples,
            episode_cap=cap or 500,
            layout_seed=env_config.layout_seed,
        )
    if env_config.id == EnvId.POINT_MASS:
        return PointMass1D(episode_cap=cap or 200)
    raise ConfigurationError(f"Unknown environment: {env_config.id}")


@lru_cache()
def get_network_layout(algo: Algo, n_inputs: int, n_outputs: int, hidden: Tuple[int, ...]) -> NetworkLayout:
    """Network layout for an algorithm on an environment of the given dimensions"""
    sizes = [n_inputs, *hidden, n_outputs]
    if algo in (Algo.Q1, Algo.SARSA1, Algo.QN):
        return NetworkLayout(policy=MLPSpec(sizes, HeadKind.Q_VALUES))
    if algo == Algo.A3C:
        return NetworkLayout(policy=MLPSpec(sizes, HeadKind.POLICY_VALUE_SHARED))
    if algo == Algo.A3C_CONTINUOUS:
        return NetworkLayout(
            policy=MLPSpec(sizes, HeadKind.GAUSSIAN_POLICY),
            value=MLPSpec([n_inputs, *hidden, 1], HeadKind.Q_VALUES),
        )
    raise ConfigurationError(f"Unknown algorithm: {algo}")


def build_layout(config: RunConfig, env: EnvironmentInterface) -> NetworkLayout:
    """Check algorithm/environment compatibility and size the network"""
    continuous_algo = config.algo == Algo.A3C_CONTINUOUS
    if env.continuous != continuous_algo:
        kind = "continuous" if env.continuous else "discrete"
        raise ConfigurationError(f"{config.algo.value} cannot run on the {kind} environment {config.env.id.value}")
    return get_network_layout(config.algo, env.observation_size, env.action_size, tuple(config.network.hidden))


def get_dtype(precision: Optional[Precision] = None) -> np.dtype:
    return np.dtype((precision or Precision(settings.PRECISION)).value)


def build_optimizers(
    config: RunConfig,
    params: SharedParams,
    statistics: List[Optional[SharedVector]],
) -> List[OptimizerInterface]:
    """
    One optimizer handle per parameter vector for one thread

    `statistics` holds the run-wide g vectors; shared RMSProp handles of every
    thread point at the same ones.
    """
    kind = config.optimizer.kind
    dtype = params.theta.dtype
    handles = [make_optimizer(kind, config.optimizer, len(params.theta), dtype, statistics=statistics[0])]
    if params.has_value_params:
        handles.append(
            make_optimizer(kind, config.optimizer, len(params.theta_v), dtype, statistics=statistics[1])
        )
    return handles


def build_shared_statistics(config: RunConfig, params: SharedParams) -> List[Optional[SharedVector]]:
    """Run-wide g vectors for shared RMSProp, in the same memory kind as the parameters"""
    if config.optimizer.kind != OptimizerKind.SHARED_RMSPROP:
        return [None, None]
    dtype = params.theta.dtype
    shared = params.process_shared
    return [
        SharedVector.zeros(len(params.theta), dtype=dtype, process_shared=shared),
        SharedVector.zeros(len(params.theta_v), dtype=dtype, process_shared=shared),
    ]
