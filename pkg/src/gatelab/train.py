"""Full-batch training of gated networks with trajectory instrumentation.

The update is ``theta <- theta - alpha * Psi e`` (the gradient of half the
squared loss), so that for small steps the errors follow
``e_{t+1} = e_t - alpha K_t e_t`` with the same ``alpha``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, ShapeError
from .gram import feature_gram, gram_blocks, lambda_matrix, nu
from .linalg import Prng, sym_eigen
from .network import Net, Variant, backward_signals, forward


class OptKind(str, enum.Enum):
    SGD = "sgd"
    RMSPROP = "rmsprop"


@dataclass(frozen=True)
class Optimizer:
    kind: OptKind = OptKind.SGD
    alpha: float = 0.1
    decay: float = 0.9
    stabilizer: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "kind", OptKind(self.kind))
        if self.alpha < 0:
            raise ValueError("step size must be non-negative")
        if not 0 < self.decay < 1:
            raise ValueError("decay must lie in (0, 1)")


@dataclass
class TrajectoryRecord:
    step: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    residual_ratio: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)  # dicts keyed by metric name

    def rows(self) -> list[dict]:
        snaps = {s["step"]: s for s in self.snapshots}
        out = []
        for t, loss, ratio in zip(self.step, self.loss, self.residual_ratio):
            row = {"step": t, "loss": loss, "residual_ratio": ratio}
            if snaps:
                if t not in snaps:
                    continue
                row.update({k: v for k, v in snaps[t].items() if k != "step"})
            out.append(row)
        return out


NU_KINDS = ("K", "Ka", "Ka_hat", "M")


def snapshot(net: Net, x, y, index=None, nu_kinds=()) -> dict:
    """Spectrum summary, nu values and gate statistics at the current parameters."""
    blocks = gram_blocks(net, x, index=index)
    K = sum(blocks.values())
    ev = sym_eigen(K).eigenvalues
    cache = forward(net, x, index=index)
    gates = cache.gate_tensor()
    out = {
        "rho_max": float(ev[-1]),
        "rho_min": float(ev[0]),
        "k_trace": float(np.trace(K)),
        "param_norm": float(np.sqrt(sum(np.sum(p * p) for p in net.weights))),
        "active_fraction": float(np.mean(gates > 0.5 * net.config.gate_ceiling)),
    }
    for kind in nu_kinds:
        if kind == "K":
            out["nu_K"] = nu(K, y, normalize=True)
        elif kind in ("Ka", "Ka_hat"):
            if "g" not in blocks:
                continue
            out[f"nu_{kind}"] = nu(blocks["g"], y, normalize=kind == "Ka_hat")
        elif kind == "M":
            out["nu_M"] = nu(feature_gram(x, lambda_matrix(gates)), y, normalize=True)
        else:
            raise ValueError(f"unknown nu kind {kind!r}; choose from {NU_KINDS}")
    return out


def rmsprop_step(params: list, grads: list, state: list | None, opt: Optimizer):
    """One RMSprop update; returns (new params, new state)."""
    if state is None:
        state = [np.zeros_like(g) for g in grads]
    new_state, new_params = [], []
    for p, g, v in zip(params, grads, state):
        v = opt.decay * v + (1.0 - opt.decay) * g * g
        new_state.append(v)
        new_params.append(p - opt.alpha * g / (np.sqrt(v) + opt.stabilizer))
    return new_params, new_state


def _gradients(net: Net, cache, err: np.ndarray) -> dict[str, list]:
    sig = backward_signals(net, cache)
    return {k: [inp @ (delta * err).T for inp, delta in layers] for k, layers in sig.items()}


def train(
    net: Net,
    x,
    y,
    opt: Optimizer,
    steps: int,
    snapshot_every: int = 0,
    index=None,
    nu_kinds=(),
    batch_size: int | None = None,
    rng: Prng | None = None,
    divergence_factor: float = 1e6,
    monitor=None,
) -> tuple[Net, TrajectoryRecord]:
    """Gradient steps on ``sum_s (y_hat(x_s) - y_s)^2``; frozen sets never change.

    Full batch unless ``batch_size`` is given. Snapshots are taken at step 0,
    every ``snapshot_every`` steps and at the end. ``monitor(net)`` may return
    extra fields (a held-out loss, say) to merge into each snapshot.
    """
    net = net.copy()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[1]
    if y.shape != (n,):
        raise ShapeError(f"labels {y.shape} do not match {n} examples")
    if net.config.variant is Variant.FRG and index is None:
        index = np.arange(n)
    if batch_size is not None and rng is None:
        rng = Prng(0)
    rec = TrajectoryRecord()
    state: dict[str, list | None] = {}

    e0 = None
    for t in range(steps + 1):
        cache = forward(net, x, index=index)
        err = cache.y - y
        loss = float(err @ err)
        if e0 is None:
            e0 = loss
        rec.step.append(t)
        rec.loss.append(loss)
        rec.residual_ratio.append(loss / e0 if e0 > 0 else 0.0)
        if not np.isfinite(loss) or loss > divergence_factor * max(e0, 1e-300):
            raise DivergenceError(f"loss {loss:.3g} at step {t} exceeds {divergence_factor:g} x initial")
        if snapshot_every and (t % snapshot_every == 0 or t == steps):
            snap = snapshot(net, x, y, index=index, nu_kinds=nu_kinds)
            snap["step"] = t
            if monitor is not None:
                snap.update(monitor(net))
            rec.snapshots.append(snap)
        if t == steps or opt.alpha == 0:
            continue

        if batch_size is not None and batch_size < n:
            batch = np.sort(rng.permutation(n)[:batch_size])
            sub_index = None if index is None else np.asarray(index)[batch]
            cache = forward(net, x[:, batch], index=sub_index)
            err = cache.y - y[batch]
        grads = _gradients(net, cache, err)
        for key, g in grads.items():
            params = net.weights if key == "w" else net.gate_weights
            if opt.kind is OptKind.SGD:
                new = [p - opt.alpha * gl for p, gl in zip(params, g)]
            else:
                new, state[key] = rmsprop_step(params, g, state.get(key), opt)
            params[:] = new
    return net, rec


def step_from_spectrum(K, factor: float = 0.1) -> float:
    """Step size ``factor / rho_max(K)``."""
    rho_max = float(sym_eigen(K).eigenvalues[-1])
    if rho_max <= 0:
        raise ValueError("Gram matrix has no positive eigenvalue")
    return factor / rho_max


def predict_linear_dynamics(K, alpha: float, e0, steps: int) -> np.ndarray:
    """Residual ratios ``|e_t|^2 / |e_0|^2`` for ``e <- (I - alpha K) e``, t = 0..steps."""
    K = np.asarray(K, dtype=np.float64)
    e = np.asarray(e0, dtype=np.float64).copy()
    base = float(e @ e)
    out = [1.0]
    for _ in range(steps):
        e = e - alpha * (K @ e)
        out.append(float(e @ e) / base)
    return np.array(out)
