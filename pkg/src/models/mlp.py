"""Dense feedforward network with hand-written forward and reverse passes.

Parameters live in one flat vector per network. The layout is a pure function
of the MLPSpec: for each layer in order, the weight matrix (out x in, row-major)
followed by its bias. Extra output blocks come after the main output layer:

    q_values             theta = hidden layers + Q layer
    policy_value_shared  theta = hidden layers + logits layer, theta_v = value block
    gaussian_policy      theta = hidden layers + mu layer + raw-variance block

A separate value network (continuous control) is a q_values spec with one output.
"""

import hashlib
import json
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ..exceptions import ConfigurationError
from ..schemas import HeadKind
from .heads import gaussian_head, softmax


@dataclass(frozen=True)
class MLPSpec:
    """Architecture of one network"""
    layer_sizes: Tuple[int, ...]
    head_kind: HeadKind = HeadKind.Q_VALUES

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "head_kind", HeadKind(self.head_kind))
        if len(sizes) < 2:
            raise ConfigurationError(f"layer_sizes needs at least 2 entries, got {sizes}")
        if any(s < 1 for s in sizes):
            raise ConfigurationError(f"layer sizes must be positive, got {sizes}")

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    @property
    def last_hidden(self) -> int:
        return self.layer_sizes[-2]

    @property
    def n_hidden_layers(self) -> int:
        return len(self.layer_sizes) - 2

    def layer_shapes(self) -> List[Tuple[int, int]]:
        """(out, in) for every layer stored in theta, extra blocks included"""
        shapes = [
            (self.layer_sizes[i + 1], self.layer_sizes[i])
            for i in range(len(self.layer_sizes) - 1)
        ]
        if self.head_kind == HeadKind.GAUSSIAN_POLICY:
            shapes.append((1, self.last_hidden))
        return shapes

    def value_shapes(self) -> List[Tuple[int, int]]:
        """(out, in) for the blocks stored in theta_v"""
        if self.head_kind == HeadKind.POLICY_VALUE_SHARED:
            return [(1, self.last_hidden)]
        return []

    @property
    def param_count(self) -> int:
        return sum(o * i + o for o, i in self.layer_shapes())

    @property
    def value_param_count(self) -> int:
        return sum(o * i + o for o, i in self.value_shapes())

    def to_dict(self) -> dict:
        return {"layer_sizes": list(self.layer_sizes), "head_kind": self.head_kind.value}


def _unpack(vector: np.ndarray, shapes: List[Tuple[int, int]]) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Split a flat vector into (W, b) views following the canonical layout"""
    blocks = []
    offset = 0
    for out_dim, in_dim in shapes:
        n_w = out_dim * in_dim
        w = vector[offset:offset + n_w].reshape(out_dim, in_dim)
        offset += n_w
        b = vector[offset:offset + out_dim]
        offset += out_dim
        blocks.append((w, b))
    return blocks


def unpack_params(params: np.ndarray, spec: MLPSpec) -> List[Tuple[np.ndarray, np.ndarray]]:
    _check_length(params, spec.param_count, "params")
    return _unpack(params, spec.layer_shapes())


def unpack_value_params(value_params: np.ndarray, spec: MLPSpec) -> List[Tuple[np.ndarray, np.ndarray]]:
    _check_length(value_params, spec.value_param_count, "value params")
    return _unpack(value_params, spec.value_shapes())


def _check_length(vector: Optional[np.ndarray], expected: int, what: str) -> None:
    if vector is None:
        raise ConfigurationError(f"{what} required for this head")
    if vector.ndim != 1 or vector.shape[0] != expected:
        raise ConfigurationError(f"{what} length {vector.shape} does not match spec ({expected})")


@dataclass(frozen=True)
class NetworkLayout:
    """Everything needed to size theta and theta_v for one algorithm"""
    policy: MLPSpec
    value: Optional[MLPSpec] = None

    @property
    def theta_size(self) -> int:
        return self.policy.param_count

    @property
    def theta_v_size(self) -> int:
        if self.value is not None:
            return self.value.param_count
        return self.policy.value_param_count

    def spec_hash(self) -> bytes:
        """SHA-256 of the canonical JSON description; 32 bytes"""
        payload = {
            "policy": self.policy.to_dict(),
            "value": self.value.to_dict() if self.value is not None else None,
        }
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).digest()


def _init_blocks(shapes: List[Tuple[int, int]], rng: np.random.Generator, dtype) -> np.ndarray:
    chunks = []
    for out_dim, in_dim in shapes:
        bound = 1.0 / np.sqrt(in_dim)
        chunks.append(rng.uniform(-bound, bound, size=out_dim * in_dim))
        chunks.append(rng.uniform(-bound, bound, size=out_dim))
    if not chunks:
        return np.zeros(0, dtype=dtype)
    return np.concatenate(chunks).astype(dtype)


def init_params(layout: NetworkLayout, rng: np.random.Generator, dtype=np.float32) -> Tuple[np.ndarray, np.ndarray]:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias, theta first"""
    theta = _init_blocks(layout.policy.layer_shapes(), rng, dtype)
    if layout.value is not None:
        theta_v = _init_blocks(layout.value.layer_shapes(), rng, dtype)
    else:
        theta_v = _init_blocks(layout.policy.value_shapes(), rng, dtype)
    return theta, theta_v


@dataclass
class HeadOutputs:
    """Network outputs; fields not produced by the head stay None"""
    q_values: Optional[np.ndarray] = None
    logits: Optional[np.ndarray] = None
    probs: Optional[np.ndarray] = None
    value: Optional[float] = None
    mu: Optional[np.ndarray] = None
    raw_sigma: Optional[float] = None
    sigma2: Optional[float] = None


@dataclass
class ForwardCache:
    """Activations entering each layer and hidden pre-activations for one input"""
    activations: List[np.ndarray]
    pre_activations: List[np.ndarray]


@dataclass
class OutputGrads:
    """dLoss/d(output) for every block of a head"""
    main: Optional[np.ndarray] = None
    value: float = 0.0
    raw_sigma: float = 0.0


@dataclass
class GradientBuffer:
    """Thread-private accumulators shaped like theta and theta_v"""
    theta: np.ndarray
    theta_v: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def zeros(cls, layout: NetworkLayout, dtype=np.float32) -> "GradientBuffer":
        return cls(
            theta=np.zeros(layout.theta_size, dtype=dtype),
            theta_v=np.zeros(layout.theta_v_size, dtype=dtype),
        )

    def clear(self) -> None:
        self.theta.fill(0)
        self.theta_v.fill(0)


def forward(
    params: np.ndarray,
    spec: MLPSpec,
    obs: np.ndarray,
    value_params: Optional[np.ndarray] = None,
) -> Tuple[HeadOutputs, ForwardCache]:
    """
    Run one observation through the network

    Args:
        params: theta for this spec
        spec: Network architecture
        obs: Observation vector of length spec.n_inputs
        value_params: theta_v, required for policy_value_shared

    Returns:
        (HeadOutputs, ForwardCache)
    """
    blocks = unpack_params(params, spec)
    x = np.asarray(obs, dtype=params.dtype).reshape(-1)
    if x.shape[0] != spec.n_inputs:
        raise ConfigurationError(f"observation has {x.shape[0]} entries, network expects {spec.n_inputs}")

    activations = [x]
    pre_activations = []
    h = x
    for w, b in blocks[:spec.n_hidden_layers]:
        z = w @ h + b
        pre_activations.append(z)
        h = np.maximum(z, 0)
        activations.append(h)

    w_out, b_out = blocks[spec.n_hidden_layers]
    out = w_out @ h + b_out
    cache = ForwardCache(activations=activations, pre_activations=pre_activations)

    if spec.head_kind == HeadKind.Q_VALUES:
        return HeadOutputs(q_values=out), cache

    if spec.head_kind == HeadKind.POLICY_VALUE_SHARED:
        (w_v, b_v), = unpack_value_params(value_params, spec)
        value = float((w_v @ h + b_v)[0])
        return HeadOutputs(logits=out, probs=softmax(out), value=value), cache

    w_s, b_s = blocks[-1]
    raw_sigma = float((w_s @ h + b_s)[0])
    mu, sigma2 = gaussian_head(out, raw_sigma)
    return HeadOutputs(mu=mu, raw_sigma=raw_sigma, sigma2=sigma2), cache


def backward_accumulate(
    cache: ForwardCache,
    spec: MLPSpec,
    params: np.ndarray,
    output_grads: OutputGrads,
    buffer: GradientBuffer,
    value_params: Optional[np.ndarray] = None,
) -> None:
    """
    Add the exact reverse-mode gradient of a scalar loss into buffer

    Repeated calls sum. Gradients for theta go to buffer.theta; for the
    policy_value_shared head the value block's gradient goes to buffer.theta_v.
    """
    blocks = unpack_params(params, spec)
    grad_blocks = _unpack(buffer.theta, spec.layer_shapes())
    dtype = params.dtype

    h = cache.activations[-1]
    if output_grads.main is not None:
        d_out = np.asarray(output_grads.main, dtype=dtype).reshape(-1)
        if d_out.shape[0] != spec.n_outputs:
            raise ConfigurationError(f"output gradient has {d_out.shape[0]} entries, head has {spec.n_outputs}")
    else:
        d_out = np.zeros(spec.n_outputs, dtype=dtype)

    w_out, _ = blocks[spec.n_hidden_layers]
    gw, gb = grad_blocks[spec.n_hidden_layers]
    gw += np.outer(d_out, h)
    gb += d_out
    d_h = w_out.T @ d_out

    if output_grads.value:
        if spec.head_kind != HeadKind.POLICY_VALUE_SHARED:
            raise ConfigurationError(f"head {spec.head_kind.value} has no value output")
        (w_v, _), = unpack_value_params(value_params, spec)
        (gw_v, gb_v), = _unpack(buffer.theta_v, spec.value_shapes())
        dv = dtype.type(output_grads.value)
        gw_v += dv * h
        gb_v += dv
        d_h = d_h + dv * w_v[0]

    if output_grads.raw_sigma:
        if spec.head_kind != HeadKind.GAUSSIAN_POLICY:
            raise ConfigurationError(f"head {spec.head_kind.value} has no variance output")
        w_s, _ = blocks[-1]
        gw_s, gb_s = grad_blocks[-1]
        ds = dtype.type(output_grads.raw_sigma)
        gw_s += ds * h
        gb_s += ds
        d_h = d_h + ds * w_s[0]

    for i in reversed(range(spec.n_hidden_layers)):
        d_z = d_h * (cache.pre_activations[i] > 0)
        w, _ = blocks[i]
        gw, gb = grad_blocks[i]
        gw += np.outer(d_z, cache.activations[i])
        gb += d_z
        if i > 0:
            d_h = w.T @ d_z
