"""Models package - flat-parameter MLPs and their output heads."""

from .mlp import (
    ForwardCache,
    GradientBuffer,
    HeadOutputs,
    MLPSpec,
    NetworkLayout,
    OutputGrads,
    backward_accumulate,
    forward,
    init_params,
)

__all__ = [
    "MLPSpec",
    "NetworkLayout",
    "init_params",
    "forward",
    "backward_accumulate",
    "ForwardCache",
    "HeadOutputs",
    "OutputGrads",
    "GradientBuffer",
]
