"""Active and sensitive gates of soft-gated networks.

A gate is active for an input when its value exceeds ``tau_active`` and
sensitive when some gating parameter moves it faster than ``tau_sensitive``.
Summaries count the fully active paths and the paths that run through
exactly one sensitive gate with every other gate active.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceededError, ShapeError, VariantError
from .linalg import Prng
from .network import Net, compute_gates, gate_jacobian

JACOBIAN_BUDGET = 10**5  # d_net * number of gates per example
SAMPLES_PER_LAYER = 64


def _check_tau_active(tau_active: float, epsilon: float) -> None:
    if not 0.0 < tau_active < 1.0 + epsilon:
        raise ValueError(f"tau_active must lie in (0, {1.0 + epsilon:g}), got {tau_active:g}")


def compatibility_bound(beta: float, epsilon: float, tau_active: float) -> float:
    """Slope of ``q -> (1+eps) sigmoid(beta q)`` at the point where the gate equals ``tau_active``.

    Written in terms of the gate value ``v``: ``beta * v * (1 - v / (1+eps))``.
    """
    _check_tau_active(tau_active, epsilon)
    if beta <= 0:
        raise ValueError("beta must be positive")
    return float(beta_slope(tau_active, beta, epsilon))


def beta_slope(gate_values, beta: float, epsilon: float) -> np.ndarray:
    """``d chi / dq`` expressed through the gate value ``v = chi(q)``."""
    v = np.asarray(gate_values, dtype=np.float64)
    return beta * v * (1.0 - v / (1.0 + epsilon))


@dataclass(frozen=True)
class GateThresholds:
    tau_active: float
    tau_sensitive: float
    beta: float
    epsilon: float = 0.0

    def __post_init__(self):
        _check_tau_active(self.tau_active, self.epsilon)
        if self.tau_sensitive <= 0:
            raise ValueError("tau_sensitive must be positive")

    @classmethod
    def default(cls, beta: float, epsilon: float = 0.0) -> "GateThresholds":
        tau_a = 0.9 * (1.0 + epsilon)
        return cls(tau_a, 2.0 * compatibility_bound(beta, epsilon, tau_a), beta, epsilon)

    @property
    def bound(self) -> float:
        return compatibility_bound(self.beta, self.epsilon, self.tau_active)

    @property
    def compatible(self) -> bool:
        return self.tau_sensitive > self.bound


@dataclass
class GateClassification:
    gates: np.ndarray  # (n, d-1, w) gate values
    active: np.ndarray  # bool, same shape
    sensitive: np.ndarray  # bool, same shape
    max_dg: np.ndarray  # max over m of |dG / d theta_g(m)|
    max_dq: np.ndarray  # max over m of |dq / d theta_g(m)|, the chain-rule scale
    thresholds: GateThresholds
    sampled_columns: np.ndarray | None = None  # parameter indices used when sampling
    notes: list = field(default_factory=list)

    @property
    def scaled_bound(self) -> np.ndarray:
        """Largest ``max_dg`` an active gate can have: the gate-level bound
        times the preactivation scale. Valid when ``tau_active`` is at or above
        the sigmoid midpoint, where the slope decreases with the gate value."""
        return self.thresholds.bound * self.max_dq

    @property
    def overlap(self) -> np.ndarray:
        """Gates that are both active and sensitive."""
        return self.active & self.sensitive

    def rows(self) -> list[dict]:
        n, layers, w = self.gates.shape
        out = []
        for s in range(n):
            for l in range(layers):
                for j in range(w):
                    out.append({
                        "example": s,
                        "layer": l + 1,
                        "node": j,
                        "G": float(self.gates[s, l, j]),
                        "active": int(self.active[s, l, j]),
                        "sensitive": int(self.sensitive[s, l, j]),
                        "max_dG": float(self.max_dg[s, l, j]),
                    })
        return out


def _sample_columns(net: Net, rng: Prng, per_layer: int) -> np.ndarray:
    offsets = np.cumsum([0] + [a * b for a, b in net.config.layer_shapes])
    cols = []
    for l in range(net.config.d - 1):  # the readout layer never feeds a gate
        size = offsets[l + 1] - offsets[l]
        take = rng.permutation(size)[: min(per_layer, size)]
        cols.append(offsets[l] + np.sort(take))
    return np.concatenate(cols)


def classify_gates(net: Net, x, thresholds: GateThresholds | None = None,
                   budget: int = JACOBIAN_BUDGET, sample: bool = False,
                   rng: Prng | None = None) -> GateClassification:
    """Split every gate of every example into active / sensitive.

    The full Jacobian costs ``d_net * (d-1) * w`` entries per example. Above
    ``budget`` this raises, unless ``sample`` is set, in which case at most
    ``SAMPLES_PER_LAYER`` parameters per layer are examined and recorded.
    """
    cfg = net.config
    if not cfg.variant.soft:
        raise VariantError(f"{cfg.variant.value} gates are piecewise constant; nothing is sensitive")
    if thresholds is None:
        thresholds = GateThresholds.default(cfg.beta, cfg.epsilon)
    if abs(thresholds.beta - cfg.beta) > 0 or abs(thresholds.epsilon - cfg.epsilon) > 0:
        raise ValueError("thresholds were built for a different beta/epsilon than the network")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(cfg.d_in, -1)
    if x.shape[0] != cfg.d_in:
        raise ShapeError(f"inputs have {x.shape[0]} rows, network expects {cfg.d_in}")

    cost = cfg.d_net * (cfg.d - 1) * cfg.w
    columns, notes = None, []
    if cost > budget:
        if not sample:
            raise BudgetExceededError(f"Jacobian needs {cost} entries per example, budget is {budget}")
        columns = _sample_columns(net, rng or Prng(0), SAMPLES_PER_LAYER)
        notes.append(f"sampled {len(columns)} of {cfg.d_net} gating parameters")

    gates = compute_gates(net, x)
    jac = [gate_jacobian(net, x[:, s], columns) for s in range(x.shape[1])]
    max_dg = np.stack([np.abs(j).max(axis=2) for j in jac])
    # G = chi(q) with chi' > 0, so dq/dtheta = (dG/dtheta) / chi'(q)
    slope = beta_slope(gates, cfg.beta, cfg.epsilon)
    with np.errstate(divide="ignore", invalid="ignore"):
        max_dq = np.where(slope > 0, max_dg / slope, 0.0)
    return GateClassification(
        gates=gates,
        active=gates > thresholds.tau_active,
        sensitive=max_dg > thresholds.tau_sensitive,
        max_dg=max_dg,
        max_dq=max_dq,
        thresholds=thresholds,
        sampled_columns=columns,
        notes=notes,
    )


@dataclass
class SubnetworkSummary:
    active_per_layer: np.ndarray  # (n, d-1) ints
    sensitive_per_layer: np.ndarray  # (n, d-1) ints
    active_paths: np.ndarray  # (n,) fully active paths from one input coordinate
    sensitive_paths: np.ndarray  # (n,) paths with one sensitive gate, the rest active
    overlap: np.ndarray  # (n, n, d-1) shared active gates per layer


def subnetwork_summary(classification: GateClassification) -> SubnetworkSummary:
    active = classification.active.astype(np.int64)
    sensitive = classification.sensitive.astype(np.int64)
    a = active.sum(axis=2)
    s = sensitive.sum(axis=2)
    layers = a.shape[1]
    active_paths = np.prod(a, axis=1)
    sens_paths = np.zeros(a.shape[0], dtype=np.int64)
    for l in range(layers):
        sens_paths += s[:, l] * np.prod(np.delete(a, l, axis=1), axis=1)
    overlap = np.einsum("slj,tlj->stl", active, active)
    return SubnetworkSummary(a, s, active_paths, sens_paths, overlap)


def subnetwork_summary_bruteforce(classification: GateClassification) -> tuple[np.ndarray, np.ndarray]:
    """Path-by-path counts of the same quantities, for checking the product forms."""
    import itertools

    active, sensitive = classification.active, classification.sensitive
    n, layers, w = active.shape
    act_count = np.zeros(n, dtype=np.int64)
    sens_count = np.zeros(n, dtype=np.int64)
    for nodes in itertools.product(range(w), repeat=layers):
        idx = np.arange(layers), np.array(nodes)
        for e in range(n):
            a = active[e][idx]
            sv = sensitive[e][idx]
            act_count[e] += int(a.all())
            sens_count[e] += sum(int(sv[l] and np.delete(a, l).all()) for l in range(layers))
    return act_count, sens_count
