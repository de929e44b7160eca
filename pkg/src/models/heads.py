"""Output-head math: softmax policy, entropy, and the Gaussian continuous-action head.

All functions are pure and work in the dtype of their inputs, so the same code
serves single-precision training and double-precision gradient checks.
"""

import math
from typing import Tuple

import numpy as np

from ..exceptions import DomainError

LOG_2PI = math.log(2.0 * math.pi)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-shifted softmax; shift invariant and overflow free"""
    z = np.asarray(logits)
    shifted = z - np.max(z)
    e = np.exp(shifted)
    return e / np.sum(e)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """log softmax via log-sum-exp"""
    z = np.asarray(logits)
    shifted = z - np.max(z)
    return shifted - np.log(np.sum(np.exp(shifted)))


def policy_entropy(probs: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Entropy of a categorical distribution and its gradient w.r.t. the logits

    0·log 0 is taken as 0, so one-hot vectors give entropy 0 and a zero gradient.

    Args:
        probs: Probability vector produced by softmax(logits)

    Returns:
        (H, dH/dlogits) where dH/dz_k = -p_k (log p_k + H)
    """
    p = np.asarray(probs)
    positive = p > 0
    log_p = np.zeros_like(p)
    log_p[positive] = np.log(p[positive])
    entropy = -float(np.sum(p * log_p))
    grad = -p * (log_p + entropy)
    return max(entropy, 0.0), grad


def softplus(x: float) -> float:
    """log(1 + exp(x)) without overflow for large |x|"""
    return float(np.logaddexp(0.0, x))


def gaussian_head(mu: np.ndarray, raw_sigma: float) -> Tuple[np.ndarray, float]:
    """Map the raw variance pre-activation through SoftPlus; sigma2 > 0"""
    sigma2 = softplus(raw_sigma)
    if sigma2 <= 0.0:
        # softplus underflows to 0 only below about -745
        sigma2 = float(np.finfo(np.float64).tiny)
    return np.asarray(mu), sigma2


def gaussian_logprob_and_entropy(
    mu: np.ndarray,
    sigma2: float,
    action: np.ndarray,
) -> Tuple[float, float]:
    """
    Log-density and differential entropy of N(mu, sigma2 * I)

    Returns:
        (log pi(a), entropy) with entropy = d/2 * (log(2 pi sigma2) + 1)
    """
    if not sigma2 > 0.0:
        raise DomainError(f"sigma2 must be positive, got {sigma2}")

    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    a = np.atleast_1d(np.asarray(action, dtype=np.float64))
    dim = mu.shape[0]
    diff = a - mu
    log_prob = -0.5 * dim * (LOG_2PI + math.log(sigma2)) - float(diff @ diff) / (2.0 * sigma2)
    entropy = 0.5 * dim * (LOG_2PI + math.log(sigma2) + 1.0)
    return log_prob, entropy


def gaussian_gradients(
    mu: np.ndarray,
    raw_sigma: float,
    action: np.ndarray,
) -> Tuple[np.ndarray, float, float]:
    """
    Gradients of log pi(a) and of the entropy w.r.t. (mu, raw_sigma)

    Returns:
        (dlogp/dmu, dlogp/draw_sigma, dH/draw_sigma)
    """
    mu = np.atleast_1d(np.asarray(mu))
    _, sigma2 = gaussian_head(mu, raw_sigma)
    if not sigma2 > 0.0:
        raise DomainError(f"sigma2 must be positive, got {sigma2}")

    a = np.atleast_1d(np.asarray(action, dtype=mu.dtype))
    dim = mu.shape[0]
    diff = a - mu
    # dsoftplus/dx is the logistic function
    dsigma2_draw = 0.5 * (1.0 + math.tanh(0.5 * float(raw_sigma)))

    dlogp_dmu = diff / sigma2
    dlogp_dsigma2 = -0.5 * dim / sigma2 + float(diff @ diff) / (2.0 * sigma2 * sigma2)
    dh_dsigma2 = 0.5 * dim / sigma2
    return dlogp_dmu, dlogp_dsigma2 * dsigma2_draw, dh_dsigma2 * dsigma2_draw
