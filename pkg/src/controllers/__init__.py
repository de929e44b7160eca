"""Controllers package - run orchestration layer."""

from .experiment_controller import bench_scaling, compare_optimizers, compute_speedups, summarize_top_k, sweep
from .training_controller import TrainingController, TrainResult, train

__all__ = [
    "TrainingController",
    "TrainResult",
    "train",
    "sweep",
    "bench_scaling",
    "compute_speedups",
    "compare_optimizers",
    "summarize_top_k",
]
