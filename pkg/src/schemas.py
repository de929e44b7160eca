"""Pydantic schemas for run configuration, metrics and reports."""

import os
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .config import settings
from .exceptions import ConfigurationError


class Algo(str, Enum):
    """Actor-learner algorithm."""
    Q1 = "q1"
    SARSA1 = "sarsa1"
    QN = "qn"
    A3C = "a3c"
    A3C_CONTINUOUS = "a3c_continuous"


class HeadKind(str, Enum):
    """Network output head."""
    Q_VALUES = "q_values"
    POLICY_VALUE_SHARED = "policy_value_shared"
    GAUSSIAN_POLICY = "gaussian_policy"


class OptimizerKind(str, Enum):
    """Asynchronous optimization rule."""
    SGD = "sgd"
    RMSPROP = "rmsprop"
    SHARED_RMSPROP = "shared-rmsprop"


class EnvId(str, Enum):
    """Desk-scale environment."""
    CHAIN = "chain"
    GRID_MAZE = "grid_maze"
    POINT_MASS = "point_mass"


class Precision(str, Enum):
    FLOAT32 = "float32"
    FLOAT64 = "float64"


class Backend(str, Enum):
    """Where actor-learners run: OS processes over shared memory, or threads of one process"""
    PROCESS = "process"
    THREAD = "thread"


DEFAULT_EPSILON_SUPPORT: List[Tuple[float, float]] = [(0.1, 0.4), (0.01, 0.3), (0.5, 0.3)]


class HyperParamsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    gamma: float = Field(0.99, gt=0.0, le=1.0)
    t_max: int = Field(5, ge=1)
    async_update_interval: int = Field(5, ge=1, description="I_AsyncUpdate for one-step methods")
    target_interval: int = Field(40000, ge=1, description="I_target in frames")
    beta: float = Field(0.01, ge=0.0, description="Entropy weight, discrete A3C")
    continuous_beta: float = Field(1e-4, ge=0.0, description="Entropy weight, continuous A3C")
    epsilon_support: List[Tuple[float, float]] = Field(
        default_factory=lambda: list(DEFAULT_EPSILON_SUPPORT),
        description="(epsilon_final, probability) pairs",
    )
    anneal_frames: int = Field(4_000_000, ge=1)
    resample_epsilon_per_episode: bool = False
    clip_norm: Optional[float] = Field(None, gt=0.0)

    @field_validator("epsilon_support")
    @classmethod
    def _check_support(cls, value: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
        if not value:
            raise ValueError("epsilon_support must not be empty")
        for eps, prob in value:
            if not 0.0 < eps <= 1.0:
                raise ValueError(f"epsilon values must lie in (0, 1], got {eps}")
            if prob < 0.0:
                raise ValueError(f"probabilities must be non-negative, got {prob}")
        return [(float(e), float(p)) for e, p in value]


class OptimizerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: OptimizerKind = OptimizerKind.SHARED_RMSPROP
    lr: float = Field(7e-4, gt=0.0)
    alpha: float = Field(0.99, ge=0.0, lt=1.0, description="RMSProp decay")
    momentum: float = Field(0.9, ge=0.0, lt=1.0, description="Momentum SGD alpha")
    epsilon: float = Field(0.1, gt=0.0, description="RMSProp denominator regularizer")
    anneal_lr: bool = True


class EnvConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: EnvId = EnvId.CHAIN
    n_states: int = Field(5, ge=2)
    width: int = Field(8, ge=3)
    height: int = Field(8, ge=3)
    n_apples: int = Field(4, ge=0)
    episode_cap: Optional[int] = Field(None, ge=1, description="None uses the environment default")
    layout_seed: Optional[int] = Field(0, description="Fixed maze layout; None draws one per reset seed")


class NetworkConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    hidden: List[int] = Field(default_factory=lambda: [64])
    precision: Precision = Precision.FLOAT32

    @field_validator("hidden")
    @classmethod
    def _check_hidden(cls, value: List[int]) -> List[int]:
        if any(h < 1 for h in value):
            raise ValueError("hidden layer widths must be positive")
        return value


class RunConfig(BaseModel):
    """Everything that defines one training run"""
    model_config = ConfigDict(extra="forbid")

    algo: Algo = Algo.Q1
    env: EnvConfig = Field(default_factory=EnvConfig)
    threads: int = Field(1, ge=1)
    backend: Backend = Backend.PROCESS
    total_frames: int = Field(200_000, ge=0)
    hp: HyperParamsConfig = Field(default_factory=HyperParamsConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    seed: int = 0
    eval_interval: int = Field(10_000, ge=1)
    eval_episodes: int = Field(10, ge=1)
    checkpoint_interval: int = Field(0, ge=0, description="0 disables periodic checkpoints")
    out_dir: str = Field(default_factory=lambda: os.path.join(settings.OUTPUT_PATH, "default"))
    deterministic: bool = False

    @model_validator(mode="after")
    def _deterministic_is_serial(self) -> "RunConfig":
        if self.deterministic and self.threads != 1:
            self.threads = 1
        return self

    def render(self) -> str:
        """Human-readable YAML; floats keep their shortest round-trip repr"""
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=True)

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Config is not valid YAML: {e}") from e
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid run config: {e}") from e


class MetricRecord(BaseModel):
    """One evaluation point; one JSON line in metrics.jsonl"""
    model_config = ConfigDict(extra="forbid")

    run_id: str
    wall_clock_seconds: float
    global_frames: int
    eval_mean_score: float
    eval_std: float
    current_eta: float
    thread_count: int


class EvaluationResult(BaseModel):
    mean: float
    std: float
    episodes: int
    scores: List[float] = Field(default_factory=list)


class SweepRow(BaseModel):
    """One run of a learning-rate sweep"""
    rank: int = 0
    eta0: float
    seed: int
    final_score: float
    optimizer: OptimizerKind
    out_dir: str


class ScalingRow(BaseModel):
    """One thread count of a scalability benchmark"""
    threads: int
    seeds: int
    median_time_to_reference: Optional[float] = None
    median_frames_to_reference: Optional[float] = None
    median_frames_per_second: float = 0.0
    speedup: Optional[float] = None
    reached: bool = False


class TopKSummary(BaseModel):
    k: int
    mean_score: float
    std_score: float
    etas: List[float]


class OptimizerComparison(BaseModel):
    """Per-optimizer robustness curves from identical learning-rate draws"""
    success_score: float
    curves: Dict[str, List[SweepRow]]
    successes: Dict[str, int]
