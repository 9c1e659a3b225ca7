"""Closed-form predictions for Gram matrices at symmetric Bernoulli initialisation."""

from __future__ import annotations

import math

import numpy as np


def _data_gram(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x.T @ x


def expected_gram(x, lam, d: int, sigma: float) -> np.ndarray:
    """Mean Gram over weights with gates held fixed: ``d sigma^(2(d-1)) (x^T x) * lam``."""
    return d * sigma ** (2 * (d - 1)) * _data_gram(x) * np.asarray(lam, dtype=np.float64)


def expected_kw(x, lam, d: int, sigma: float, with_depth_factor: bool = True) -> np.ndarray:
    """Mean strength-adaptation Gram of a soft-gated network.

    Each of the d weights on a path contributes one leave-one-out product, so
    the expectation carries the factor d. ``with_depth_factor=False`` gives
    the factor-free variant ``sigma^(2(d-1)) (x^T x) * lam`` for comparison.
    """
    k = sigma ** (2 * (d - 1)) * _data_gram(x) * np.asarray(lam, dtype=np.float64)
    return d * k if with_depth_factor else k


def expected_ka(x, delta, d: int, sigma: float) -> np.ndarray:
    """Mean gate-adaptation Gram: ``sigma^(2d) (x^T x) * delta``."""
    return sigma ** (2 * d) * _data_gram(x) * np.asarray(delta, dtype=np.float64)


def frg_lambda_bar(mu: float, w: int, d: int) -> tuple[float, float]:
    """Expected self and cross path overlap under Bernoulli(mu) gates."""
    if not 0 < mu < 1:
        raise ValueError("mu must lie in (0, 1)")
    return (mu * w) ** (d - 1), (mu * mu * w) ** (d - 1)


def ideal_frg_gram(n: int, mu: float, d: int) -> np.ndarray:
    """Unit diagonal, ``mu^(d-1)`` off the diagonal."""
    if n < 1:
        raise ValueError("n must be positive")
    off = mu ** (d - 1)
    return np.full((n, n), off) + (1.0 - off) * np.eye(n)


def ideal_frg_spectrum(n: int, mu: float, d: int) -> np.ndarray:
    """Eigenvalues of :func:`ideal_frg_gram`, ascending."""
    off = mu ** (d - 1)
    return np.sort(np.array([1.0 + (n - 1) * off] + [1.0 - off] * (n - 1)))


def variance_bound(d_in: int, sigma: float, d: int, w: int) -> float:
    """Order-of-magnitude bound on Var[K_0] with the hidden constant set to 1."""
    return d_in**2 * sigma ** (4 * (d - 1)) * max(d**2 * w ** (2 * (d - 2) + 1), d**3 * w ** (2 * (d - 2)))


def choice_of_sigma(mu: float, w: int) -> float:
    if not 0 < mu <= 1 or w < 1:
        raise ValueError("need mu in (0, 1] and w >= 1")
    return math.sqrt(1.0 / (mu * w))


def dln_expected_k0(d: int, w: int, sigma: float) -> float:
    """Single scalar input x = 1: ``d (w sigma^2)^(d-1)``."""
    return d * (w * sigma * sigma) ** (d - 1)
