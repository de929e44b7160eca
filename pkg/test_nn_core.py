"""Flat-parameter MLP, output heads and their gradients"""

import math

import numpy as np
import pytest

from src.exceptions import ConfigurationError, DomainError
from src.models.heads import (
    gaussian_head,
    gaussian_logprob_and_entropy,
    log_softmax,
    policy_entropy,
    softmax,
)
from src.models.mlp import (
    GradientBuffer,
    MLPSpec,
    NetworkLayout,
    OutputGrads,
    backward_accumulate,
    forward,
    init_params,
)
from src.schemas import HeadKind


def _layout(head: HeadKind, sizes=(3, 4, 2)) -> NetworkLayout:
    return NetworkLayout(policy=MLPSpec(sizes, head))


class TestLayout:
    def test_param_counts(self):
        assert MLPSpec((3, 4, 2)).param_count == 4 * 3 + 4 + 2 * 4 + 2
        assert _layout(HeadKind.POLICY_VALUE_SHARED).theta_v_size == 4 + 1
        assert MLPSpec((3, 4, 2), HeadKind.GAUSSIAN_POLICY).param_count == 26 + 4 + 1
        assert MLPSpec((3, 2)).param_count == 8

    def test_layout_is_a_function_of_the_spec(self):
        a = _layout(HeadKind.Q_VALUES, (5, 8, 3))
        b = _layout(HeadKind.Q_VALUES, (5, 8, 3))
        assert a.spec_hash() == b.spec_hash()
        assert len(a.spec_hash()) == 32
        assert a.spec_hash() != _layout(HeadKind.Q_VALUES, (5, 9, 3)).spec_hash()
        assert a.spec_hash() != _layout(HeadKind.POLICY_VALUE_SHARED, (5, 8, 3)).spec_hash()

    def test_weights_are_row_major_then_bias(self):
        spec = MLPSpec((2, 3))
        theta = np.arange(spec.param_count, dtype=np.float64)
        out, _ = forward(theta, spec, np.array([1.0, 0.0]))
        # W = [[0,1],[2,3],[4,5]], b = [6,7,8]
        np.testing.assert_array_equal(out.q_values, [6.0, 9.0, 12.0])

    def test_init_is_reproducible_and_bounded(self):
        layout = _layout(HeadKind.POLICY_VALUE_SHARED, (6, 10, 3))
        t1, v1 = init_params(layout, np.random.default_rng(3))
        t2, v2 = init_params(layout, np.random.default_rng(3))
        np.testing.assert_array_equal(t1, t2)
        np.testing.assert_array_equal(v1, v2)
        assert t1.dtype == np.float32
        assert t1.size == layout.theta_size and v1.size == layout.theta_v_size
        assert np.all(np.abs(t1) <= 1.0 / math.sqrt(6) + 1e-7)

    def test_bad_specs_and_inputs(self):
        with pytest.raises(ConfigurationError):
            MLPSpec((3,))
        with pytest.raises(ConfigurationError):
            MLPSpec((3, 0, 2))
        spec = MLPSpec((3, 2))
        with pytest.raises(ConfigurationError):
            forward(np.zeros(spec.param_count), spec, np.zeros(4))
        with pytest.raises(ConfigurationError):
            forward(np.zeros(spec.param_count + 1), spec, np.zeros(3))


class TestSoftmaxAndEntropy:
    def test_softmax_sums_to_one_and_is_shift_invariant(self, rng):
        for _ in range(20):
            z = rng.normal(size=5) * 10
            p = softmax(z)
            assert abs(p.sum() - 1.0) < 1e-12
            np.testing.assert_allclose(softmax(z + 123.4), p, rtol=1e-12)
            np.testing.assert_allclose(np.exp(log_softmax(z)), p, rtol=1e-12)

    def test_softmax_does_not_overflow(self):
        p = softmax(np.array([1000.0, 0.0]))
        assert np.all(np.isfinite(p))
        np.testing.assert_allclose(p, [1.0, 0.0], atol=1e-300)

    def test_entropy_extremes(self):
        h, grad = policy_entropy(np.full(4, 0.25))
        assert h == pytest.approx(math.log(4), abs=1e-12)
        np.testing.assert_allclose(grad, 0.0, atol=1e-15)
        h, grad = policy_entropy(np.array([1.0, 0.0, 0.0]))
        assert h == 0.0
        np.testing.assert_array_equal(grad, 0.0)

    def test_entropy_gradient(self, rng, fd):
        numerical_gradient, assert_gradient_close = fd
        for _ in range(20):
            z = rng.normal(size=4)
            _, grad = policy_entropy(softmax(z))
            numeric = numerical_gradient(lambda x: policy_entropy(softmax(x))[0], z)
            assert_gradient_close(grad, numeric)


class TestGaussianHead:
    def test_variance_positive_and_softplus(self):
        assert gaussian_head(np.zeros(1), 0.0)[1] == pytest.approx(math.log(2.0))
        assert gaussian_head(np.zeros(1), -50.0)[1] > 0.0
        assert gaussian_head(np.zeros(1), -800.0)[1] > 0.0
        assert gaussian_head(np.zeros(1), 800.0)[1] == pytest.approx(800.0)

    def test_standard_normal(self):
        log_prob, entropy = gaussian_logprob_and_entropy(np.zeros(1), 1.0, np.zeros(1))
        assert log_prob == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)
        assert entropy == pytest.approx(0.5 * (math.log(2 * math.pi) + 1), abs=1e-12)

    def test_entropy_scales_with_dimension(self):
        _, h1 = gaussian_logprob_and_entropy(np.zeros(1), 0.3, np.zeros(1))
        _, h3 = gaussian_logprob_and_entropy(np.zeros(3), 0.3, np.zeros(3))
        assert h3 == pytest.approx(3 * h1)

    @pytest.mark.parametrize("sigma2", [0.0, -1.0])
    def test_nonpositive_variance(self, sigma2):
        with pytest.raises(DomainError):
            gaussian_logprob_and_entropy(np.zeros(1), sigma2, np.zeros(1))


class TestBackward:
    @pytest.mark.parametrize("head", list(HeadKind))
    def test_matches_finite_differences(self, head, rng, fd):
        numerical_gradient, assert_gradient_close = fd
        spec = MLPSpec((3, 5, 4, 2), head)
        layout = NetworkLayout(policy=spec)
        for _ in range(10):
            theta, theta_v = init_params(layout, rng, dtype=np.float64)
            obs = rng.normal(size=3)
            c_main = rng.normal(size=2)
            c_extra = float(rng.normal())

            def loss(t, v):
                out, _ = forward(t, spec, obs, v if v.size else None)
                if head == HeadKind.Q_VALUES:
                    return float(c_main @ out.q_values)
                if head == HeadKind.POLICY_VALUE_SHARED:
                    return float(c_main @ out.logits) + c_extra * out.value
                return float(c_main @ out.mu) + c_extra * out.raw_sigma

            out, cache = forward(theta, spec, obs, theta_v if theta_v.size else None)
            grads = OutputGrads(main=c_main)
            if head == HeadKind.POLICY_VALUE_SHARED:
                grads.value = c_extra
            elif head == HeadKind.GAUSSIAN_POLICY:
                grads.raw_sigma = c_extra
            buffer = GradientBuffer.zeros(layout, dtype=np.float64)
            backward_accumulate(cache, spec, theta, grads, buffer, theta_v if theta_v.size else None)

            assert_gradient_close(buffer.theta, numerical_gradient(lambda t: loss(t, theta_v), theta))
            if theta_v.size:
                assert_gradient_close(buffer.theta_v, numerical_gradient(lambda v: loss(theta, v), theta_v))

    def test_repeated_calls_sum(self, rng):
        spec = MLPSpec((3, 4, 2))
        layout = NetworkLayout(policy=spec)
        theta, _ = init_params(layout, rng, dtype=np.float64)
        _, cache = forward(theta, spec, rng.normal(size=3))
        once = GradientBuffer.zeros(layout, dtype=np.float64)
        twice = GradientBuffer.zeros(layout, dtype=np.float64)
        grads = OutputGrads(main=np.array([1.0, -2.0]))
        backward_accumulate(cache, spec, theta, grads, once)
        backward_accumulate(cache, spec, theta, grads, twice)
        backward_accumulate(cache, spec, theta, grads, twice)
        np.testing.assert_allclose(twice.theta, 2 * once.theta, rtol=1e-15)

    def test_output_gradient_length_checked(self, rng):
        spec = MLPSpec((3, 2))
        layout = NetworkLayout(policy=spec)
        theta, _ = init_params(layout, rng, dtype=np.float64)
        _, cache = forward(theta, spec, np.zeros(3))
        with pytest.raises(ConfigurationError):
            backward_accumulate(cache, spec, theta, OutputGrads(main=np.ones(3)),
                                GradientBuffer.zeros(layout, dtype=np.float64))
