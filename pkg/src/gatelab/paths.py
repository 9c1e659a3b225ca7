"""Brute-force path-view quantities for small networks.

A path picks one input coordinate and one node in each hidden layer; there
are ``d_in * w**(d-1)`` of them, enumerated lexicographically over
``(p(0), p(1), ..., p(d-1))``. Everything here is exponential in depth and
exists to check the efficient layerwise code in :mod:`gatelab.network` and
:mod:`gatelab.gram`.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import BudgetExceededError, VariantError
from .network import Net, NetConfig, forward, gate_jacobian

DEFAULT_BUDGET = 10**7


def num_paths(config: NetConfig) -> int:
    return config.d_in * config.w ** (config.d - 1)


def _check_budget(count: int, budget: int, what: str = "paths") -> None:
    if count > budget:
        raise BudgetExceededError(f"{count} {what} exceed the budget of {budget}")


def enumerate_paths(config: NetConfig, budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """All paths as an int array (P, d+1); the last column is the output node 0."""
    _check_budget(num_paths(config), budget)
    ranges = [range(config.d_in)] + [range(config.w)] * (config.d - 1)
    body = np.array(list(itertools.product(*ranges)), dtype=np.intp).reshape(-1, config.d)
    return np.hstack([body, np.zeros((len(body), 1), dtype=np.intp)])


def weight_offsets(config: NetConfig) -> np.ndarray:
    return np.cumsum([0] + [a * b for a, b in config.layer_shapes])


def path_weight_indices(config: NetConfig, paths: np.ndarray) -> np.ndarray:
    """Flat parameter index of the weight each path uses in each layer, (P, d)."""
    offsets = weight_offsets(config)
    fan_out = np.array([b for _, b in config.layer_shapes])
    return offsets[:-1] + paths[:, :-1] * fan_out + paths[:, 1:]


def _layer_weights(params, paths: np.ndarray) -> np.ndarray:
    """Weight traversed by each path in each layer, (P, d)."""
    return np.stack([params[l][paths[:, l], paths[:, l + 1]] for l in range(len(params))], axis=1)


def path_strength(params, p) -> float:
    p = np.asarray(p, dtype=np.intp)
    return float(np.prod([params[l][p[l], p[l + 1]] for l in range(len(params))]))


def path_strengths(params, paths: np.ndarray) -> np.ndarray:
    return np.prod(_layer_weights(params, paths), axis=1)


def path_activation(gates: np.ndarray, p) -> float:
    """Product of the gate values a path passes through; ``gates`` is (d-1, w)."""
    return float(np.prod([gates[l, p[l + 1]] for l in range(gates.shape[0])]))


def path_activations(gates: np.ndarray, paths: np.ndarray) -> np.ndarray:
    cols = [gates[l, paths[:, l + 1]] for l in range(gates.shape[0])]
    return np.prod(np.stack(cols, axis=1), axis=1) if cols else np.ones(len(paths))


def feature_vector(x, gates: np.ndarray, config: NetConfig, budget: int = DEFAULT_BUDGET) -> np.ndarray:
    paths = enumerate_paths(config, budget)
    x = np.asarray(x, dtype=np.float64).reshape(config.d_in)
    return x[paths[:, 0]] * path_activations(np.asarray(gates), paths)


def output_via_paths(x, gates: np.ndarray, params, config: NetConfig, budget: int = DEFAULT_BUDGET) -> float:
    paths = enumerate_paths(config, budget)
    x = np.asarray(x, dtype=np.float64).reshape(config.d_in)
    phi = x[paths[:, 0]] * path_activations(np.asarray(gates), paths)
    return float(phi @ path_strengths(params, paths))


def effective_weights(params, config: NetConfig) -> np.ndarray:
    """Sum of path strengths starting at each input coordinate (DLN view)."""
    paths = enumerate_paths(config)
    strengths = path_strengths(params, paths)
    return np.bincount(paths[:, 0], weights=strengths, minlength=config.d_in)


def path_sensitivity(params, p, m: int, config: NetConfig) -> float:
    """d strength(p) / d theta(m): the product of the other d-1 weights on p,
    or 0 when p does not use theta(m)."""
    p = np.asarray(p, dtype=np.intp)[None, :]
    idx = path_weight_indices(config, p)[0]
    hits = np.flatnonzero(idx == m)
    if len(hits) == 0:
        return 0.0
    weights = _layer_weights(params, p)[0]
    return float(np.prod(np.delete(weights, hits[0])))


def sensitivity_matrix(params, config: NetConfig, paths: np.ndarray) -> np.ndarray:
    """Rows are path sensitivity vectors over all d_net weights, (P, d_net)."""
    weights = _layer_weights(params, paths)
    idx = path_weight_indices(config, paths)
    out = np.zeros((len(paths), config.d_net))
    rows = np.arange(len(paths))
    for l in range(config.d):
        out[rows, idx[:, l]] = np.prod(np.delete(weights, l, axis=1), axis=1)
    return out


def ntf_via_paths(x, gates: np.ndarray, params, config: NetConfig) -> np.ndarray:
    """Frozen-gate NTF column as the path sum of features times sensitivities."""
    paths = enumerate_paths(config)
    x = np.asarray(x, dtype=np.float64).reshape(config.d_in)
    phi = x[paths[:, 0]] * path_activations(np.asarray(gates), paths)
    return phi @ sensitivity_matrix(params, config, paths)


def kappa_table(s: int, s2: int, data: np.ndarray, gates: np.ndarray, params, config: NetConfig,
                budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """Wire interaction between input coordinates i and j, (d_in, d_in).

    Entry (i, j) sums ``A(x_s, p1) A(x_s', p2) <phi_p1, phi_p2>`` over paths
    p1 starting at i and p2 starting at j. The diagonal is the per-coordinate
    kappa; the frozen-gate Gram entry is exactly ``x_s^T table x_s'``.
    """
    paths = enumerate_paths(config, budget)
    per_node = len(paths) // config.d_in
    _check_budget(per_node * per_node * config.d_in**2, budget, "path pairs")
    sens = sensitivity_matrix(params, config, paths)
    a1 = path_activations(gates[s], paths)[:, None] * sens
    a2 = path_activations(gates[s2], paths)[:, None] * sens
    # path index = p(0) * per_node + rest, so node blocks are contiguous
    v1 = a1.reshape(config.d_in, per_node, -1).sum(axis=1)
    v2 = a2.reshape(config.d_in, per_node, -1).sum(axis=1)
    return v1 @ v2.T


def kappa(s: int, s2: int, i: int, data: np.ndarray, gates: np.ndarray, params, config: NetConfig,
          budget: int = DEFAULT_BUDGET) -> float:
    """Same-coordinate wire term: both paths start at input coordinate i."""
    return float(kappa_table(s, s2, data, gates, params, config, budget)[i, i])


def gram_via_kappa(data: np.ndarray, gates: np.ndarray, params, config: NetConfig,
                   cross_terms: bool = False) -> np.ndarray:
    """Gram matrix assembled from wire terms.

    ``cross_terms=False`` keeps only same-coordinate pairs,
    ``sum_i x(i,s) x(i,s') kappa(s,s',i)``. ``cross_terms=True`` adds the pairs
    of paths that start at different coordinates, which share weights from
    layer 2 on; only then is the result equal to ``Psi^T Psi`` for d_in > 1.
    """
    n = data.shape[1]
    K = np.empty((n, n))
    for s in range(n):
        for s2 in range(s, n):
            table = kappa_table(s, s2, data, gates, params, config)
            if cross_terms:
                val = data[:, s] @ table @ data[:, s2]
            else:
                val = float(np.sum(data[:, s] * data[:, s2] * np.diag(table)))
            K[s, s2] = K[s2, s] = val
    return K


def activation_gradients(net: Net, x, paths: np.ndarray) -> np.ndarray:
    """d A(x, p) / d theta_g(m) for every path and gating parameter, (P, d_net)."""
    cfg = net.config
    if not cfg.variant.soft:
        raise VariantError(f"{cfg.variant.value} gates are piecewise constant; derivatives vanish")
    jac = gate_jacobian(net, x)
    g = forward(net, np.asarray(x, dtype=np.float64).reshape(cfg.d_in)).gate_tensor()[0]
    per_layer = np.stack([g[l, paths[:, l + 1]] for l in range(cfg.d - 1)], axis=1)
    out = np.zeros((len(paths), jac.shape[2]))
    for l in range(cfg.d - 1):
        others = np.prod(np.delete(per_layer, l, axis=1), axis=1)
        out += others[:, None] * jac[l][paths[:, l + 1]]
    return out


def activation_sensitivity(net: Net, x, p, m: int) -> float:
    p = np.asarray(p, dtype=np.intp)[None, :]
    return float(activation_gradients(net, x, p)[0, m])


def delta_matrix(net: Net, data: np.ndarray, budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """Gate-adaptation overlap: sum over paths from one input coordinate and
    over gating parameters of products of activation gradients, (n, n)."""
    cfg = net.config
    per_node = cfg.w ** (cfg.d - 1)
    _check_budget(per_node * cfg.d_net, budget, "path-parameter entries")
    paths = enumerate_paths(cfg, budget)[:per_node]  # all start at coordinate 0
    grads = [activation_gradients(net, data[:, s], paths).ravel() for s in range(data.shape[1])]
    G = np.stack(grads)
    return G @ G.T
