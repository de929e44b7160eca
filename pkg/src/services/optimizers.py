"""Asynchronous optimization rules: momentum SGD, RMSProp and Shared RMSProp.

Momentum SGD and RMSProp keep their accumulator private to the owning thread.
Shared RMSProp keeps g in a SharedVector updated without a global lock; the g
pass and the theta pass are two separate striped passes.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from ..exceptions import ConfigurationError
from ..interfaces.optimizer import OptimizerInterface, OptimizerState
from ..schemas import OptimizerConfig, OptimizerKind
from .shared_state import SharedVector, apply_update

logger = logging.getLogger(__name__)


class MomentumSGD(OptimizerInterface):
    """m = alpha m + (1 - alpha) grad; theta -= eta m"""

    def __init__(self, state: OptimizerState):
        self.state = state

    def step(self, shared: SharedVector, accumulated_grad: np.ndarray, eta: Optional[float] = None) -> None:
        eta = self.state.eta if eta is None else eta
        m = self.state.accumulator
        grad = np.asarray(accumulated_grad, dtype=m.dtype)
        m[:] = self.state.alpha * m + (1 - self.state.alpha) * grad
        apply_update(shared, -eta * m)


class RMSProp(OptimizerInterface):
    """Non-centered RMSProp with a thread-private g"""

    def __init__(self, state: OptimizerState):
        self.state = state

    def step(self, shared: SharedVector, accumulated_grad: np.ndarray, eta: Optional[float] = None) -> None:
        eta = self.state.eta if eta is None else eta
        g = self.state.accumulator
        grad = np.asarray(accumulated_grad, dtype=g.dtype)
        g[:] = self.state.alpha * g + (1 - self.state.alpha) * grad * grad
        apply_update(shared, -eta * grad / np.sqrt(g + self.state.epsilon_reg))


class SharedRMSProp(OptimizerInterface):
    """RMSProp whose g is one vector shared by every thread"""

    def __init__(self, state: OptimizerState, statistics: SharedVector):
        self.state = state
        self.statistics = statistics

    def step(self, shared: SharedVector, accumulated_grad: np.ndarray, eta: Optional[float] = None) -> None:
        eta = self.state.eta if eta is None else eta
        alpha = self.state.alpha
        grad = np.asarray(accumulated_grad, dtype=self.statistics.dtype)

        def _decay(view: np.ndarray, stripe: slice) -> None:
            part = grad[stripe]
            view[:] = alpha * view + (1 - alpha) * part * part

        self.statistics.update(_decay)
        g = self.statistics.values
        apply_update(shared, -eta * grad / np.sqrt(g + self.state.epsilon_reg))


def make_optimizer(
    kind: OptimizerKind,
    config: OptimizerConfig,
    shape: int,
    dtype=np.float32,
    statistics: Optional[SharedVector] = None,
) -> OptimizerInterface:
    """
    Build a zero-initialized optimizer handle

    Args:
        kind: Which rule
        config: Learning rate, decays and regularizer
        shape: Length of the parameter vector it will update
        dtype: Accumulator dtype
        statistics: Process-wide g for shared RMSProp; every handle given the
            same SharedVector sees the others' updates. A fresh one is created
            when omitted.

    Returns:
        Optimizer handle
    """
    try:
        kind = OptimizerKind(kind)
    except ValueError:
        raise ConfigurationError(f"Unknown optimizer kind: {kind}")

    if kind == OptimizerKind.SGD:
        state = OptimizerState(kind, np.zeros(shape, dtype=dtype), config.momentum, config.lr, config.epsilon)
        return MomentumSGD(state)

    if kind == OptimizerKind.RMSPROP:
        state = OptimizerState(kind, np.zeros(shape, dtype=dtype), config.alpha, config.lr, config.epsilon)
        return RMSProp(state)

    if statistics is None:
        statistics = SharedVector.zeros(shape, dtype=dtype)
    elif len(statistics) != shape:
        raise ConfigurationError(f"shared statistics length {len(statistics)} does not match {shape}")
    state = OptimizerState(kind, statistics.values, config.alpha, config.lr, config.epsilon)
    return SharedRMSProp(state, statistics)


def momentum_sgd_step(
    optimizer: MomentumSGD, shared: SharedVector, accumulated_grad: np.ndarray, eta: Optional[float] = None
) -> None:
    if not isinstance(optimizer, MomentumSGD):
        raise ConfigurationError(f"expected a momentum SGD handle, got {type(optimizer).__name__}")
    optimizer.step(shared, accumulated_grad, eta=eta)


def rmsprop_step(
    optimizer: OptimizerInterface, shared: SharedVector, accumulated_grad: np.ndarray, eta: Optional[float] = None
) -> None:
    """One RMSProp step with either a private or a shared g"""
    if not isinstance(optimizer, (RMSProp, SharedRMSProp)):
        raise ConfigurationError(f"expected an RMSProp handle, got {type(optimizer).__name__}")
    optimizer.step(shared, accumulated_grad, eta=eta)


@dataclass
class LearningRateSchedule:
    """eta(T) = eta0 * max(0, 1 - T / total_steps)"""
    eta0: float
    total_steps: int
    anneal: bool = True

    def eta(self, T: int) -> float:
        if not self.anneal:
            return self.eta0
        if self.total_steps <= 0:
            return 0.0
        return self.eta0 * max(0.0, 1.0 - T / self.total_steps)


def clip_by_global_norm(grads: Iterable[np.ndarray], max_norm: Optional[float]) -> float:
    """
    Scale the arrays in place so their joint L2 norm is at most max_norm

    Returns:
        The norm before clipping
    """
    grads = list(grads)
    norm = float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads)))
    if max_norm is not None and norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm
