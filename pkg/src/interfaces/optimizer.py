"""Optimizer interface"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np

from ..schemas import OptimizerKind

if TYPE_CHECKING:
    from ..services.shared_state import SharedVector


@dataclass
class OptimizerState:
    """Accumulator and constants of one optimizer handle"""
    kind: OptimizerKind
    accumulator: np.ndarray
    alpha: float
    eta: float
    epsilon_reg: float = 0.1


class OptimizerInterface(ABC):
    """Applies an accumulated gradient to a shared parameter vector"""

    state: OptimizerState

    @abstractmethod
    def step(self, shared: "SharedVector", accumulated_grad: np.ndarray, eta: Optional[float] = None) -> None:
        """
        Perform one asynchronous update of the shared vector

        Args:
            shared: Shared parameters receiving the update
            accumulated_grad: Gradient summed over the batch, same length as shared
            eta: Learning rate for this step; defaults to state.eta
        """
        pass
