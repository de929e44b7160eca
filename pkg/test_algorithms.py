"""Targets, returns, exploration, gradient estimators and the actor-learner loops"""

import math
import threading

import numpy as np
import pytest

from src.environments import ChainMDP, value_iteration
from src.exceptions import ConfigurationError
from src.models.heads import gaussian_logprob_and_entropy, log_softmax, policy_entropy
from src.models.mlp import MLPSpec, NetworkLayout, forward, init_params
from src.schemas import Algo, HeadKind, HyperParamsConfig, OptimizerConfig, OptimizerKind
from src.services.actor_learner import LearnerContext, run_actor_learner
from src.services.exploration import (
    ExplorationPolicy,
    epsilon_at,
    greedy_action,
    sample_epsilon_final,
    select_epsilon_greedy,
)
from src.services.gradients import (
    Trajectory,
    a3c_continuous_gradients,
    a3c_gradients,
    n_step_q_gradients,
    one_step_q_gradients,
)
from src.services.optimizers import LearningRateSchedule, make_optimizer
from src.services.shared_state import GlobalCounter, SharedParams, TargetSnapshot
from src.services.targets import n_step_returns, one_step_q_target, one_step_sarsa_target

N_INSTANCES = 50


class TestTargets:
    def test_one_step_q(self):
        assert one_step_q_target(1.0, np.array([0.5, 2.0]), False, 0.9) == pytest.approx(2.8)
        assert one_step_q_target(1.0, np.array([0.5, 2.0]), True, 0.9) == 1.0
        with pytest.raises(ConfigurationError):
            one_step_q_target(1.0, np.array([]), False, 0.9)

    def test_sarsa(self):
        assert one_step_sarsa_target(0.0, 3.0, False, 0.5) == 1.5
        assert one_step_sarsa_target(2.0, 3.0, True, 0.5) == 2.0

    def test_n_step_examples(self):
        np.testing.assert_allclose(n_step_returns([1, 1, 1], 0.0, 0.5), [1.75, 1.5, 1.0])
        np.testing.assert_allclose(n_step_returns([0, 0], 10.0, 0.9), [8.1, 9.0])
        with pytest.raises(ConfigurationError):
            n_step_returns([], 0.0, 0.9)

    def test_n_step_matches_direct_summation(self, rng):
        for case in range(1000):
            length = int(rng.integers(1, 9))
            rewards = rng.normal(size=length)
            gamma = 1.0 if case % 10 == 0 else float(rng.uniform(0.0, 1.0))
            bootstrap = 0.0 if case % 7 == 0 else float(rng.normal())
            returns = n_step_returns(rewards, bootstrap, gamma)
            for i in range(length):
                direct = sum(gamma ** (k - i) * rewards[k] for k in range(i, length))
                direct += gamma ** (length - i) * bootstrap
                assert abs(returns[i] - direct) <= 1e-12
            # the recurrence holds exactly
            extended = np.append(returns, bootstrap)
            np.testing.assert_array_equal(returns, rewards + gamma * extended[1:])


class TestExploration:
    def test_epsilon_final_distribution(self):
        draws = sample_epsilon_final(np.random.default_rng(0), size=100_000)
        for value, prob in [(0.1, 0.4), (0.01, 0.3), (0.5, 0.3)]:
            assert abs(np.mean(draws == value) - prob) < 0.01

    def test_support_must_be_a_distribution(self, rng):
        with pytest.raises(ConfigurationError):
            sample_epsilon_final(rng, [(0.1, 0.5), (0.2, 0.4)])

    def test_linear_anneal(self):
        policy = ExplorationPolicy(epsilon_final=0.1, anneal_frames=4_000_000)
        assert epsilon_at(policy, 0) == 1.0
        assert epsilon_at(policy, 2_000_000) == pytest.approx(0.55)
        assert epsilon_at(policy, 4_000_000) == pytest.approx(0.1)
        assert epsilon_at(policy, 9_000_000) == pytest.approx(0.1)

    def test_invalid_policy(self):
        with pytest.raises(ConfigurationError):
            ExplorationPolicy(epsilon_final=0.0, anneal_frames=10)

    def test_greedy_breaks_ties_uniformly(self, rng):
        picks = [greedy_action(np.zeros(3), rng) for _ in range(3000)]
        counts = np.bincount(picks, minlength=3)
        assert np.all(counts > 850)
        assert greedy_action(np.array([0.0, 2.0, 1.0]), rng) == 1

    def test_epsilon_one_is_uniform(self, rng):
        picks = [select_epsilon_greedy(np.array([5.0, 0.0]), 1.0, rng) for _ in range(2000)]
        assert 850 < sum(picks) < 1150


def _trajectory(rng, n_inputs, action_fn, max_len=4) -> Trajectory:
    length = int(rng.integers(1, max_len + 1))
    terminal = bool(rng.random() < 0.4)
    return Trajectory(
        observations=[rng.normal(size=n_inputs) for _ in range(length)],
        actions=[action_fn() for _ in range(length)],
        rewards=list(rng.normal(size=length)),
        terminal=terminal,
        final_observation=None if terminal else rng.normal(size=n_inputs),
    )


def _q(params, spec, obs, action):
    return float(forward(params, spec, obs)[0].q_values[action])


class TestGradients:
    spec = MLPSpec((3, 5, 2))
    layout = NetworkLayout(policy=spec)

    def _params(self, rng):
        theta = init_params(self.layout, rng, dtype=np.float64)[0]
        target = init_params(self.layout, rng, dtype=np.float64)[0]
        return theta, target

    def test_one_step_q(self, rng, fd):
        numerical_gradient, assert_gradient_close = fd
        for _ in range(N_INSTANCES):
            theta, target = self._params(rng)
            traj = _trajectory(rng, 3, lambda: int(rng.integers(2)))
            targets = []
            for i in range(len(traj)):
                last = i == len(traj) - 1
                nxt = traj.final_observation if last else traj.observations[i + 1]
                if traj.terminal and last:
                    targets.append(traj.rewards[i])
                else:
                    targets.append(traj.rewards[i] + 0.9 * np.max(forward(target, self.spec, nxt)[0].q_values))

            def loss(t):
                return sum((y - _q(t, self.spec, s, a)) ** 2
                           for y, s, a in zip(targets, traj.observations, traj.actions))

            grad = one_step_q_gradients(traj, theta, target, self.spec, 0.9)
            assert_gradient_close(grad, numerical_gradient(loss, theta))

    def test_one_step_sarsa(self, rng, fd):
        numerical_gradient, assert_gradient_close = fd
        for _ in range(N_INSTANCES):
            theta, target = self._params(rng)
            traj = _trajectory(rng, 3, lambda: int(rng.integers(2)))
            next_actions = [int(rng.integers(2)) for _ in range(len(traj))]
            targets = []
            for i in range(len(traj)):
                last = i == len(traj) - 1
                nxt = traj.final_observation if last else traj.observations[i + 1]
                if traj.terminal and last:
                    targets.append(traj.rewards[i])
                else:
                    targets.append(traj.rewards[i] + 0.9 * _q(target, self.spec, nxt, next_actions[i]))

            def loss(t):
                return sum((y - _q(t, self.spec, s, a)) ** 2
                           for y, s, a in zip(targets, traj.observations, traj.actions))

            grad = one_step_q_gradients(traj, theta, target, self.spec, 0.9, next_actions=next_actions)
            assert_gradient_close(grad, numerical_gradient(loss, theta))

    def test_n_step_q(self, rng, fd):
        numerical_gradient, assert_gradient_close = fd
        for _ in range(N_INSTANCES):
            theta, target = self._params(rng)
            traj = _trajectory(rng, 3, lambda: int(rng.integers(2)), max_len=5)
            bootstrap = 0.0 if traj.terminal else float(
                np.max(forward(target, self.spec, traj.final_observation)[0].q_values)
            )
            returns = n_step_returns(traj.rewards, bootstrap, 0.95)

            def loss(t):
                return sum((R - _q(t, self.spec, s, a)) ** 2
                           for R, s, a in zip(returns, traj.observations, traj.actions))

            grad = n_step_q_gradients(traj, theta, target, self.spec, 0.95)
            assert_gradient_close(grad, numerical_gradient(loss, theta))

    def test_n_step_with_one_step_rollouts_matches_one_step(self, rng):
        for _ in range(N_INSTANCES):
            theta, target = self._params(rng)
            traj = _trajectory(rng, 3, lambda: int(rng.integers(2)), max_len=1)
            np.testing.assert_allclose(
                n_step_q_gradients(traj, theta, target, self.spec, 0.9),
                one_step_q_gradients(traj, theta, target, self.spec, 0.9),
                rtol=1e-12, atol=1e-15,
            )

    def test_sarsa_with_greedy_choice_equals_q_target(self, rng):
        for _ in range(N_INSTANCES):
            theta, _ = self._params(rng)
            q_next = forward(theta, self.spec, rng.normal(size=3))[0].q_values
            a_next = select_epsilon_greedy(q_next, 0.0, rng)
            r = float(rng.normal())
            assert one_step_sarsa_target(r, q_next[a_next], False, 0.99) == one_step_q_target(r, q_next, False, 0.99)

    def test_a3c(self, rng, fd):
        numerical_gradient, assert_gradient_close = fd
        spec = MLPSpec((3, 5, 3), HeadKind.POLICY_VALUE_SHARED)
        layout = NetworkLayout(policy=spec)
        beta, gamma = 0.01, 0.9
        for _ in range(N_INSTANCES):
            theta, theta_v = init_params(layout, rng, dtype=np.float64)
            traj = _trajectory(rng, 3, lambda: int(rng.integers(3)), max_len=5)
            bootstrap = 0.0 if traj.terminal else forward(theta, spec, traj.final_observation, theta_v)[0].value
            returns = n_step_returns(traj.rewards, bootstrap, gamma)
            advantages = [R - forward(theta, spec, s, theta_v)[0].value for R, s in zip(returns, traj.observations)]

            def loss(t, v):
                total = 0.0
                for R, adv, s, a in zip(returns, advantages, traj.observations, traj.actions):
                    out = forward(t, spec, s, v)[0]
                    total -= log_softmax(out.logits)[a] * adv + beta * policy_entropy(out.probs)[0]
                    total += (R - out.value) ** 2
                return total

            d_theta, d_theta_v = a3c_gradients(traj, theta, theta_v, spec, beta, gamma)
            assert_gradient_close(d_theta, numerical_gradient(lambda t: loss(t, theta_v), theta))
            assert_gradient_close(d_theta_v, numerical_gradient(lambda v: loss(theta, v), theta_v))

    def test_a3c_continuous(self, rng, fd):
        numerical_gradient, assert_gradient_close = fd
        policy = MLPSpec((3, 5, 2), HeadKind.GAUSSIAN_POLICY)
        value = MLPSpec((3, 5, 1))
        layout = NetworkLayout(policy=policy, value=value)
        beta, gamma = 1e-4, 0.99
        for _ in range(N_INSTANCES):
            theta, theta_v = init_params(layout, rng, dtype=np.float64)
            traj = _trajectory(rng, 3, lambda: rng.normal(size=2), max_len=5)
            bootstrap = 0.0 if traj.terminal else float(forward(theta_v, value, traj.final_observation)[0].q_values[0])
            returns = n_step_returns(traj.rewards, bootstrap, gamma)
            advantages = [R - float(forward(theta_v, value, s)[0].q_values[0])
                          for R, s in zip(returns, traj.observations)]

            def loss(t, v):
                total = 0.0
                for R, adv, s, a in zip(returns, advantages, traj.observations, traj.actions):
                    out = forward(t, policy, s)[0]
                    log_prob, entropy = gaussian_logprob_and_entropy(out.mu, out.sigma2, a)
                    total -= log_prob * adv + beta * entropy
                    total += (R - float(forward(v, value, s)[0].q_values[0])) ** 2
                return total

            d_theta, d_theta_v = a3c_continuous_gradients(traj, theta, theta_v, policy, value, beta, gamma)
            assert_gradient_close(d_theta, numerical_gradient(lambda t: loss(t, theta_v), theta))
            assert_gradient_close(d_theta_v, numerical_gradient(lambda v: loss(theta, v), theta_v))

    def test_trajectory_validation(self):
        with pytest.raises(ConfigurationError):
            Trajectory(observations=[np.zeros(3)], actions=[0, 1], rewards=[0.0], terminal=True)
        with pytest.raises(ConfigurationError):
            Trajectory(observations=[], actions=[], rewards=[], terminal=False).validate()
        with pytest.raises(ConfigurationError):
            Trajectory(observations=[np.zeros(3)], actions=[0], rewards=[0.0], terminal=True, bootstrap_value=1.0)

    def test_entropy_rises_to_uniform_without_advantage(self):
        spec = MLPSpec((3, 4), HeadKind.POLICY_VALUE_SHARED)
        layout = NetworkLayout(policy=spec)
        theta, theta_v = init_params(layout, np.random.default_rng(5), dtype=np.float64)
        start_obs = np.array([1.0, 0.0, 0.0])
        entropies = []
        for _ in range(2000):
            out = forward(theta, spec, start_obs, theta_v)[0]
            entropies.append(policy_entropy(out.probs)[0])
            if math.log(4) - entropies[-1] <= 1e-6:
                break
            # reward equal to V makes every advantage exactly 0
            traj = Trajectory(observations=[start_obs], actions=[0], rewards=[out.value], terminal=True)
            d_theta, d_theta_v = a3c_gradients(traj, theta, theta_v, spec, beta=0.01, gamma=0.99)
            np.testing.assert_array_equal(d_theta_v, 0.0)
            theta = theta - 10.0 * d_theta

        assert math.log(4) - entropies[-1] <= 1e-6
        assert all(b >= a - 1e-12 for a, b in zip(entropies, entropies[1:]))


def _chain_run(algo, hp, optimizer_config, total_frames, seed=0, threads=1, dtype=np.float64, recorder=None):
    env = ChainMDP(5)
    layout = NetworkLayout(policy=MLPSpec((5, 2)))
    theta = init_params(layout, np.random.default_rng(seed), dtype=dtype)[0]
    context = LearnerContext(
        layout=layout,
        params=SharedParams(theta),
        counter=GlobalCounter(),
        total_frames=total_frames,
        lr_schedule=LearningRateSchedule(optimizer_config.lr, total_frames, optimizer_config.anneal_lr),
        target=TargetSnapshot(theta),
    )
    if recorder is not None:
        context.on_update = lambda T: recorder.append(context.params.theta.snapshot())
    stats = [None] * threads

    def body(i):
        optimizer = make_optimizer(optimizer_config.kind, optimizer_config, layout.theta_size, dtype)
        stats[i] = run_actor_learner(algo, context, ChainMDP(5), hp, [optimizer], i, seed)

    if threads == 1:
        body(0)
    else:
        workers = [threading.Thread(target=body, args=(i,)) for i in range(threads)]
        for w in workers:
            w.start()
        for w in workers:
            w.join()
    return context, stats, env


def _q_table(theta, spec, n_states):
    return np.array([forward(theta, spec, np.eye(n_states)[s])[0].q_values for s in range(n_states)])


class TestActorLearner:
    def test_zero_frames_returns_immediately(self):
        hp = HyperParamsConfig()
        context, stats, _ = _chain_run(Algo.Q1, hp, OptimizerConfig(kind="sgd"), total_frames=0)
        assert stats[0].steps == 0 and stats[0].updates == 0
        assert context.counter.value == 0

    @pytest.mark.parametrize("algo", [Algo.Q1, Algo.QN])
    def test_steps_across_threads_sum_to_counter(self, algo):
        hp = HyperParamsConfig(target_interval=500)
        context, stats, _ = _chain_run(algo, hp, OptimizerConfig(kind="shared-rmsprop"), 20_000, threads=16)
        assert all(s.error is None for s in stats)
        assert sum(s.steps for s in stats) == context.counter.value
        assert context.counter.value >= 20_000

    def test_serial_run_matches_textbook_q_learning(self):
        n_steps, gamma, eta, eps_final, anneal = 10_000, 0.9, 0.1, 0.1, 1_000
        hp = HyperParamsConfig(
            gamma=gamma, t_max=1, async_update_interval=1, target_interval=1,
            epsilon_support=[(eps_final, 1.0)], anneal_frames=anneal,
        )
        optimizer = OptimizerConfig(kind=OptimizerKind.SGD, lr=eta, momentum=0.0, anneal_lr=False)
        recorded = []
        context, stats, _ = _chain_run(
            Algo.Q1, hp, optimizer, n_steps, seed=11, recorder=recorded,
        )
        assert stats[0].error is None
        assert len(recorded) == n_steps

        # independent serial loop: W is 2x5 row-major, then the bias
        layout = NetworkLayout(policy=MLPSpec((5, 2)))
        theta = init_params(layout, np.random.default_rng(11), dtype=np.float64)[0]
        target = theta.copy()
        rng = np.random.default_rng([11, 0])
        env = ChainMDP(5)
        rng.integers(2**31)
        state = env.reset()
        eps_draw = sample_epsilon_final(rng, [(eps_final, 1.0)])

        def q_of(params, obs):
            return params[:10].reshape(2, 5) @ obs + params[10:]

        for T in range(n_steps):
            q = q_of(theta, state)
            eps = 1.0 + (eps_draw - 1.0) * min(1.0, T / anneal)
            if rng.random() < eps:
                action = int(rng.integers(2))
            else:
                ties = np.flatnonzero(q == np.max(q))
                action = int(ties[0]) if ties.size == 1 else int(ties[rng.integers(ties.size)])
            result = env.step(action)
            y = result.reward if result.terminal else result.reward + gamma * float(np.max(q_of(target, result.next_observation)))
            td = y - float(q[action])
            grad = np.zeros_like(theta)
            grad[action * 5:(action + 1) * 5] = -2.0 * td * state
            grad[10 + action] = -2.0 * td
            target = theta.copy()
            theta = theta + (-eta * grad)
            np.testing.assert_array_equal(recorded[T], theta, err_msg=f"diverged at step {T}")
            if result.terminal:
                rng.integers(2**31)
                state = env.reset()
            else:
                state = result.next_observation

    def test_environment_fault_stops_the_run(self):
        class Broken(ChainMDP):
            def step(self, action):
                raise RuntimeError("sensor offline")

        layout = NetworkLayout(policy=MLPSpec((5, 2)))
        theta = init_params(layout, np.random.default_rng(0), dtype=np.float64)[0]
        context = LearnerContext(
            layout=layout, params=SharedParams(theta), counter=GlobalCounter(), total_frames=100,
            lr_schedule=LearningRateSchedule(0.01, 100), target=TargetSnapshot(theta),
        )
        optimizer = make_optimizer("sgd", OptimizerConfig(kind="sgd"), layout.theta_size, np.float64)
        stats = run_actor_learner(Algo.Q1, context, Broken(5), HyperParamsConfig(), [optimizer], 0, 0)
        assert "sensor offline" in stats.error
        assert context.stop_event.is_set()

    @pytest.mark.slow
    @pytest.mark.parametrize("algo,lr,epsilon", [(Algo.Q1, 0.05, 0.1), (Algo.QN, 0.02, 0.01)])
    def test_tabular_convergence(self, algo, lr, epsilon):
        gamma = 0.99
        hp = HyperParamsConfig(
            gamma=gamma, t_max=5, async_update_interval=5, target_interval=100,
            epsilon_support=[(epsilon, 1.0)], anneal_frames=20_000,
        )
        optimizer = OptimizerConfig(kind=OptimizerKind.SGD, lr=lr, momentum=0.0, anneal_lr=True)
        context, stats, env = _chain_run(algo, hp, optimizer, 200_000, seed=3)
        assert stats[0].error is None

        q_star = value_iteration(env, gamma)
        q = _q_table(context.params.theta.snapshot(), context.layout.policy, 5)
        live = slice(0, 4)
        assert np.max(np.abs(q[live] - q_star[live])) <= 0.01
        np.testing.assert_array_equal(np.argmax(q[live], axis=1), np.argmax(q_star[live], axis=1))
