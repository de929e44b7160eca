"""Gradient assembly for the four actor-learner algorithms.

Every function returns the gradient of a loss that the optimizer subtracts:

    one-step / n-step Q   sum_i (y_i - Q(s_i, a_i))^2
    A3C                   sum_i -(log pi(a_i|s_i) A_i + beta H(pi(s_i))) + (R_i - V(s_i))^2

so subtracting performs ascent on the policy objective. The advantage
A_i = R_i - V(s_i) and the targets are constants; no gradient flows through them.
With a shared trunk the value loss also reaches theta through the shared layers.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import ConfigurationError
from ..models.heads import gaussian_gradients, policy_entropy
from ..models.mlp import GradientBuffer, MLPSpec, OutputGrads, backward_accumulate, forward
from .targets import n_step_returns, one_step_q_target, one_step_sarsa_target

Action = Union[int, np.ndarray]


@dataclass
class Trajectory:
    """
    Rollout segment of at most t_max steps

    final_observation is the state reached after the last action; it is used to
    bootstrap non-terminal segments. bootstrap_value is used only when no
    final_observation is given, and must be 0 for terminal segments.
    """
    observations: List[np.ndarray]
    actions: List[Action]
    rewards: List[float]
    terminal: bool
    final_observation: Optional[np.ndarray] = None
    bootstrap_value: float = 0.0

    def __post_init__(self):
        if not (len(self.observations) == len(self.actions) == len(self.rewards)):
            raise ConfigurationError(
                f"trajectory fields disagree in length: {len(self.observations)} observations, "
                f"{len(self.actions)} actions, {len(self.rewards)} rewards"
            )
        if self.terminal and self.bootstrap_value != 0.0:
            raise ConfigurationError("terminal trajectories bootstrap from 0")

    def __len__(self) -> int:
        return len(self.rewards)

    def validate(self, t_max: Optional[int] = None) -> None:
        if len(self) == 0:
            raise ConfigurationError("trajectory is empty")
        if t_max is not None and len(self) > t_max:
            raise ConfigurationError(f"trajectory length {len(self)} exceeds t_max={t_max}")


def _buffer_for(theta: np.ndarray, theta_v_size: int, buffer: Optional[GradientBuffer]) -> GradientBuffer:
    if buffer is not None:
        return buffer
    return GradientBuffer(
        theta=np.zeros_like(theta),
        theta_v=np.zeros(theta_v_size, dtype=theta.dtype),
    )


def accumulate_q_gradient(
    buffer: GradientBuffer,
    params: np.ndarray,
    spec: MLPSpec,
    obs: np.ndarray,
    action: int,
    y: float,
) -> float:
    """
    Add d(y - Q(s, a))^2 / dtheta into buffer

    Returns:
        TD error y - Q(s, a)
    """
    out, cache = forward(params, spec, obs)
    q = out.q_values
    if not 0 <= action < q.shape[0]:
        raise ConfigurationError(f"action {action} outside [0, {q.shape[0]})")
    td_error = y - float(q[action])
    d_out = np.zeros_like(q)
    d_out[action] = -2.0 * td_error
    backward_accumulate(cache, spec, params, OutputGrads(main=d_out), buffer)
    return td_error


def one_step_q_gradients(
    traj: Trajectory,
    theta: np.ndarray,
    target_params: np.ndarray,
    spec: MLPSpec,
    gamma: float,
    next_actions: Optional[Sequence[int]] = None,
    buffer: Optional[GradientBuffer] = None,
) -> np.ndarray:
    """
    Sum of one-step squared-error gradients over the transitions of a segment

    Args:
        traj: Transitions s_i, a_i, r_i; s_{i+1} is the next observation or final_observation
        theta: Parameters Q is differentiated at
        target_params: theta^- used for the bootstrap
        spec: q_values network
        gamma: Discount
        next_actions: a_{i+1} for every step, switching the target to Sarsa
        buffer: Accumulate into this buffer instead of a fresh one

    Returns:
        d_theta
    """
    traj.validate()
    buffer = _buffer_for(theta, 0, buffer)
    for i in range(len(traj)):
        last = i == len(traj) - 1
        terminal = traj.terminal and last
        next_obs = traj.final_observation if last else traj.observations[i + 1]
        if terminal:
            y = float(traj.rewards[i])
        else:
            if next_obs is None:
                raise ConfigurationError("non-terminal transition needs a next observation")
            q_next = forward(target_params, spec, next_obs)[0].q_values
            if next_actions is None:
                y = one_step_q_target(traj.rewards[i], q_next, False, gamma)
            else:
                y = one_step_sarsa_target(traj.rewards[i], q_next[next_actions[i]], False, gamma)
        accumulate_q_gradient(buffer, theta, spec, traj.observations[i], int(traj.actions[i]), y)
    return buffer.theta


def n_step_q_gradients(
    traj: Trajectory,
    theta_snapshot: np.ndarray,
    target_snapshot: np.ndarray,
    spec: MLPSpec,
    gamma: float,
    buffer: Optional[GradientBuffer] = None,
) -> np.ndarray:
    """
    Forward-view n-step Q-learning gradient of one rollout

    The bootstrap is 0 for terminal segments and max_a Q(s_t, a; theta^-) otherwise.

    Returns:
        d_theta
    """
    traj.validate()
    if traj.terminal:
        bootstrap = 0.0
    elif traj.final_observation is not None:
        bootstrap = float(np.max(forward(target_snapshot, spec, traj.final_observation)[0].q_values))
    else:
        bootstrap = traj.bootstrap_value

    returns = n_step_returns(traj.rewards, bootstrap, gamma)
    buffer = _buffer_for(theta_snapshot, 0, buffer)
    for i in range(len(traj) - 1, -1, -1):
        accumulate_q_gradient(buffer, theta_snapshot, spec, traj.observations[i], int(traj.actions[i]), returns[i])
    return buffer.theta


def a3c_gradients(
    traj: Trajectory,
    theta_snapshot: np.ndarray,
    thetav_snapshot: np.ndarray,
    spec: MLPSpec,
    beta: float,
    gamma: float,
    buffer: Optional[GradientBuffer] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Advantage actor-critic gradients for a discrete softmax policy with a shared trunk

    The accumulated gradient is that of one combined loss per step i:

        L_i = -log pi(a_i|s_i) A_i - beta H(pi(.|s_i)) + (R_i - V(s_i))^2

    with A_i = R_i - V(s_i) held constant in the policy term. theta_v holds only
    the value head, so d_theta_v is the value-loss gradient through that head.
    The trunk lives in theta and is shared by both heads, so d_theta carries the
    policy and entropy terms and also the value-loss gradient flowing back into
    the trunk.

    Returns:
        (d_theta, d_theta_v)
    """
    traj.validate()
    if traj.terminal:
        bootstrap = 0.0
    elif traj.final_observation is not None:
        bootstrap = forward(theta_snapshot, spec, traj.final_observation, thetav_snapshot)[0].value
    else:
        bootstrap = traj.bootstrap_value

    returns = n_step_returns(traj.rewards, bootstrap, gamma)
    buffer = _buffer_for(theta_snapshot, thetav_snapshot.shape[0], buffer)

    for i in range(len(traj) - 1, -1, -1):
        out, cache = forward(theta_snapshot, spec, traj.observations[i], thetav_snapshot)
        action = int(traj.actions[i])
        if not 0 <= action < out.probs.shape[0]:
            raise ConfigurationError(f"action {action} outside [0, {out.probs.shape[0]})")
        advantage = float(returns[i]) - out.value
        _, d_entropy = policy_entropy(out.probs)

        d_logits = out.probs * advantage
        d_logits[action] -= advantage
        d_logits -= beta * d_entropy
        grads = OutputGrads(main=d_logits, value=-2.0 * advantage)
        backward_accumulate(cache, spec, theta_snapshot, grads, buffer, thetav_snapshot)

    return buffer.theta, buffer.theta_v


def a3c_continuous_gradients(
    traj: Trajectory,
    theta_snapshot: np.ndarray,
    thetav_snapshot: np.ndarray,
    policy_spec: MLPSpec,
    value_spec: MLPSpec,
    beta: float,
    gamma: float,
    buffer: Optional[GradientBuffer] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Advantage actor-critic gradients for a Gaussian policy and a separate value network

    The entropy bonus is the differential entropy of N(mu, sigma2 I).

    Returns:
        (d_theta, d_theta_v)
    """
    traj.validate()
    if traj.terminal:
        bootstrap = 0.0
    elif traj.final_observation is not None:
        bootstrap = float(forward(thetav_snapshot, value_spec, traj.final_observation)[0].q_values[0])
    else:
        bootstrap = traj.bootstrap_value

    returns = n_step_returns(traj.rewards, bootstrap, gamma)
    buffer = _buffer_for(theta_snapshot, thetav_snapshot.shape[0], buffer)
    value_buffer = GradientBuffer(theta=buffer.theta_v, theta_v=np.zeros(0, dtype=buffer.theta_v.dtype))

    for i in range(len(traj) - 1, -1, -1):
        obs = traj.observations[i]
        out, cache = forward(theta_snapshot, policy_spec, obs)
        v_out, v_cache = forward(thetav_snapshot, value_spec, obs)
        advantage = float(returns[i]) - float(v_out.q_values[0])

        dlogp_dmu, dlogp_draw, dh_draw = gaussian_gradients(out.mu, out.raw_sigma, traj.actions[i])
        grads = OutputGrads(
            main=-dlogp_dmu * advantage,
            raw_sigma=-(dlogp_draw * advantage + beta * dh_draw),
        )
        backward_accumulate(cache, policy_spec, theta_snapshot, grads, buffer)

        d_value = np.array([-2.0 * advantage], dtype=thetav_snapshot.dtype)
        backward_accumulate(v_cache, value_spec, thetav_snapshot, OutputGrads(main=d_value), value_buffer)

    return buffer.theta, buffer.theta_v
