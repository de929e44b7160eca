"""Interfaces for replaceable components"""

from .environment import EnvironmentInterface, EnvStep, TabularMDP
from .optimizer import OptimizerInterface, OptimizerState

__all__ = [
    'EnvironmentInterface',
    'EnvStep',
    'TabularMDP',
    'OptimizerInterface',
    'OptimizerState',
]
