"""Desk-scale environments"""

from .chain import ChainMDP
from .grid_maze import GridMaze
from .point_mass import PointMass1D
from .value_iteration import value_iteration

__all__ = [
    'ChainMDP',
    'GridMaze',
    'PointMass1D',
    'value_iteration',
]
