"""Value iteration over a finite MDP; the oracle for tabular acceptance checks."""

import logging
from typing import Union

import numpy as np

from ..exceptions import ConfigurationError, UnsupportedError
from ..interfaces.environment import EnvironmentInterface, TabularMDP

logger = logging.getLogger(__name__)


def value_iteration(
    mdp_spec: Union[TabularMDP, EnvironmentInterface],
    gamma: float,
    tol: float = 1e-10,
    max_iterations: int = 1_000_000,
) -> np.ndarray:
    """
    Optimal action values Q*(s, a)

    Iterates Q <- R + gamma * P V until the max-norm Bellman residual is at most tol.
    Terminal states have value 0 and their rows of Q are 0.

    Args:
        mdp_spec: A TabularMDP, or an environment that can enumerate itself
        gamma: Discount in (0, 1]
        tol: Residual tolerance
        max_iterations: Safety cap; hitting it raises

    Returns:
        Q table of shape (n_states, n_actions)
    """
    if isinstance(mdp_spec, EnvironmentInterface):
        mdp = mdp_spec.to_tabular()
    elif isinstance(mdp_spec, TabularMDP):
        mdp = mdp_spec
    else:
        raise UnsupportedError(f"Cannot enumerate {type(mdp_spec).__name__}")

    if not 0.0 < gamma <= 1.0:
        raise ConfigurationError(f"gamma must lie in (0, 1], got {gamma}")

    live = ~mdp.terminal
    q = np.zeros((mdp.n_states, mdp.n_actions))
    for iteration in range(max_iterations):
        v = np.where(live, q.max(axis=1), 0.0)
        q_new = mdp.rewards + gamma * (mdp.transitions @ v)
        q_new[~live] = 0.0
        residual = float(np.max(np.abs(q_new - q)))
        q = q_new
        if residual <= tol:
            logger.debug(f"Value iteration converged after {iteration + 1} sweeps (residual {residual:.3e})")
            return q

    raise ConfigurationError(f"Value iteration did not reach tol={tol} in {max_iterations} sweeps")
