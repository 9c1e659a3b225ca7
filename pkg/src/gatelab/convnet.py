"""One-dimensional circular convolutional gated networks with global average pooling.

Layer l maps ``z(l-1)`` to ``q(l)[j] = sum_k theta_l[k] z(l-1)[(j+k) mod d_in]``
and gates it, ``z(l) = q(l) * G(l)``. After L such layers a fixed head of
weight ``1/d_in`` per node averages the signal into the scalar ``x(L, 1)``,
so the network has depth ``d = L + 1``.

Reading a layer backwards, node a of ``z(l-1)`` reaches node ``(a - k) mod d_in``
of ``q(l)`` through tap k. A path is therefore fixed by its input node and
its tap sequence; the d_in paths sharing one tap sequence form a bundle and
carry the same strength.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceededError, ShapeError
from .linalg import Prng
from .paths import DEFAULT_BUDGET


class ConvGating(str, enum.Enum):
    ONES = "ones"
    FRG = "frg"
    GALU = "galu"


@dataclass(frozen=True)
class ConvConfig:
    d_in: int
    kernel: int
    conv_layers: int

    def __post_init__(self):
        if self.d_in < 2:
            raise ValueError("signal length must be at least 2")
        if not 0 < self.kernel < self.d_in:
            raise ValueError(f"kernel size must lie in (0, {self.d_in}), got {self.kernel}")
        if self.conv_layers < 1:
            raise ValueError("need at least one convolutional layer")

    @property
    def d(self) -> int:
        return self.conv_layers + 1

    @property
    def num_bundles(self) -> int:
        return self.kernel**self.conv_layers

    @property
    def num_paths(self) -> int:
        return self.d_in * self.num_bundles


def _check_params(config: ConvConfig, params) -> np.ndarray:
    theta = np.asarray(params, dtype=np.float64)
    if theta.shape != (config.conv_layers, config.kernel):
        raise ShapeError(f"kernels must be ({config.conv_layers}, {config.kernel}), got {theta.shape}")
    return theta


def _check_gates(config: ConvConfig, gates) -> np.ndarray:
    if gates is None:
        return np.ones((config.conv_layers, config.d_in))
    g = np.asarray(gates, dtype=np.float64)
    if g.shape != (config.conv_layers, config.d_in):
        raise ShapeError(f"gates must be ({config.conv_layers}, {config.d_in}), got {g.shape}")
    return g


def circ_conv(theta_l: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``q[j] = sum_k theta_l[k] z[(j + k) mod d_in]``."""
    return sum(t * np.roll(z, -k) for k, t in enumerate(theta_l))


@dataclass
class ConvForward:
    q: list
    z: list
    output: float  # x(L, 1)


def circ_conv_forward(config: ConvConfig, params, gates, x) -> ConvForward:
    theta = _check_params(config, params)
    g = _check_gates(config, gates)
    z = np.asarray(x, dtype=np.float64)
    if z.shape != (config.d_in,):
        raise ShapeError(f"input must have length {config.d_in}, got shape {z.shape}")
    qs, zs = [], [z]
    for l in range(config.conv_layers):
        q = circ_conv(theta[l], z)
        z = q * g[l]
        qs.append(q)
        zs.append(z)
    return ConvForward(qs, zs, float(np.sum(z) / config.d_in))


def conv_relu_gates(config: ConvConfig, gate_params, x) -> np.ndarray:
    """Gates of a ReLU convolutional gating network with the same architecture."""
    theta = _check_params(config, gate_params)
    z = np.asarray(x, dtype=np.float64)
    out = np.empty((config.conv_layers, config.d_in))
    for l in range(config.conv_layers):
        q = circ_conv(theta[l], z)
        out[l] = q > 0
        z = q * out[l]
    return out


def rotate_input(x, i: int) -> np.ndarray:
    """Cyclic shift by i places: ``out[j] = x[(j - i) mod d_in]``."""
    x = np.asarray(x, dtype=np.float64)
    return np.roll(x, int(i) % len(x))


def enumerate_bundles(config: ConvConfig, budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """Tap sequences in lexicographic order, (B, L). Path ``b * d_in + i`` is
    bundle b started at input node i."""
    if config.num_paths > budget:
        raise BudgetExceededError(f"{config.num_paths} paths exceed the budget of {budget}")
    taps = itertools.product(range(config.kernel), repeat=config.conv_layers)
    return np.array(list(taps), dtype=np.intp).reshape(config.num_bundles, config.conv_layers)


def path_nodes(config: ConvConfig, bundles: np.ndarray) -> np.ndarray:
    """Node visited at every layer by every path, (P, L+1); column 0 is the input node."""
    start = np.tile(np.arange(config.d_in), len(bundles))
    taps = np.repeat(bundles, config.d_in, axis=0)
    steps = np.concatenate([start[:, None], -taps], axis=1)
    return np.cumsum(steps, axis=1) % config.d_in


def bundle_strengths(config: ConvConfig, params, bundles: np.ndarray) -> np.ndarray:
    """Strength of each bundle, including the ``1/d_in`` pooling weight."""
    theta = _check_params(config, params)
    per_layer = theta[np.arange(config.conv_layers), bundles]
    return np.prod(per_layer, axis=1) / config.d_in


def path_strengths(config: ConvConfig, params, bundles: np.ndarray) -> np.ndarray:
    return np.repeat(bundle_strengths(config, params, bundles), config.d_in)


def path_features(config: ConvConfig, gates, x, bundles: np.ndarray) -> np.ndarray:
    """``x(p(0)) * A(x, p)`` for every path."""
    g = _check_gates(config, gates)
    nodes = path_nodes(config, bundles)
    act = np.prod(g[np.arange(config.conv_layers), nodes[:, 1:]], axis=1)
    return np.asarray(x, dtype=np.float64)[nodes[:, 0]] * act


def output_via_bundles(config: ConvConfig, params, gates, x) -> float:
    bundles = enumerate_bundles(config)
    return float(path_features(config, gates, x, bundles) @ path_strengths(config, params, bundles))


def invariance_expectation(config: ConvConfig, gates_s, gates_s2, x_s, x_s2, sigma: float,
                           budget: int = DEFAULT_BUDGET) -> float:
    """``E[x_s(L,1) x_s'(L,1)]`` over symmetric Bernoulli(+-sigma) kernels with gates fixed.

    Two path strengths are correlated only when their tap sequences agree, so
    the expectation is a sum over bundles of products of bundle-summed features.
    """
    bundles = enumerate_bundles(config, budget)
    f1 = path_features(config, gates_s, x_s, bundles).reshape(config.num_bundles, config.d_in)
    f2 = path_features(config, gates_s2, x_s2, bundles).reshape(config.num_bundles, config.d_in)
    # exact sums so that permuting members inside a bundle cannot change the result
    total = math.fsum(math.fsum(a) * math.fsum(b) for a, b in zip(f1, f2))
    return sigma ** (2 * config.conv_layers) / config.d_in**2 * total


def draw_gates(config: ConvConfig, mode, rng: Prng, x, sigma: float, mu: float = 0.5) -> np.ndarray:
    mode = ConvGating(mode)
    if mode is ConvGating.ONES:
        return np.ones((config.conv_layers, config.d_in))
    if mode is ConvGating.FRG:
        return rng.bernoulli(mu, (config.conv_layers, config.d_in))
    gate_params = rng.bernoulli_sym(sigma, (config.conv_layers, config.kernel))
    return conv_relu_gates(config, gate_params, x)


@dataclass
class MonteCarloEstimate:
    mean: float
    se: float
    draws: int


def mc_gap_correlation(config: ConvConfig, x_s, x_s2, sigma: float, draws: int, rng: Prng,
                       gating="ones", mu: float = 0.5) -> MonteCarloEstimate:
    """Monte Carlo estimate of ``E[x_s(L,1) x_s'(L,1)]``.

    Each draw samples fresh kernels and, for galu, a fresh gating network
    (evaluated on each input). FRG gates are drawn independently per input.
    """
    if draws < 2:
        raise ValueError("need at least two draws for a standard error")
    vals = np.empty(draws)
    for t in range(draws):
        sub = rng.spawn(t)
        theta = sub.spawn(0).bernoulli_sym(sigma, (config.conv_layers, config.kernel))
        if ConvGating(gating) is ConvGating.GALU:
            gp = sub.spawn(1).bernoulli_sym(sigma, (config.conv_layers, config.kernel))
            g1 = conv_relu_gates(config, gp, x_s)
            g2 = conv_relu_gates(config, gp, x_s2)
        else:
            g1 = draw_gates(config, gating, sub.spawn(1), x_s, sigma, mu)
            g2 = draw_gates(config, gating, sub.spawn(2), x_s2, sigma, mu)
        a = circ_conv_forward(config, theta, g1, x_s).output
        b = circ_conv_forward(config, theta, g2, x_s2).output
        vals[t] = a * b
    return MonteCarloEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(draws)), draws)
