"""Neural tangent features, Gram matrices, overlap matrices and spectra."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DeadLayerError, ShapeError, VariantError
from .linalg import regularized_solve, sym_eigen
from .network import Net, Variant, _flatten_signals, backward_signals, forward


@dataclass
class NTFMatrix:
    values: np.ndarray  # (rows, n)
    blocks: dict  # group name -> row slice

    def block(self, name: str) -> np.ndarray:
        return self.values[self.blocks[name]]


def ntf_matrix(net: Net, x, index=None, gates=None) -> NTFMatrix:
    """Stack output gradients per example; soft_galu rows are [strength; gating]."""
    cache = forward(net, x, gates=gates, index=index)
    sig = backward_signals(net, cache)
    parts, blocks, start = [], {}, 0
    for key in ("w", "g"):
        if key in sig:
            part = _flatten_signals(sig[key])
            blocks[key] = slice(start, start + part.shape[0])
            start += part.shape[0]
            parts.append(part)
    return NTFMatrix(np.concatenate(parts, axis=0), blocks)


def gram(ntf) -> np.ndarray:
    values = ntf.values if isinstance(ntf, NTFMatrix) else np.asarray(ntf, dtype=np.float64)
    return values.T @ values


def gram_split_soft_galu(ntf: NTFMatrix) -> tuple[np.ndarray, np.ndarray]:
    """(K^w, K^a): Grams of the strength and gating blocks."""
    if set(ntf.blocks) != {"w", "g"}:
        raise VariantError("the strength/gate split needs a soft_galu NTF with both blocks")
    return gram(ntf.block("w")), gram(ntf.block("g"))


def gram_blocks(net: Net, x, index=None, gates=None, gates_fixed: bool = False) -> dict[str, np.ndarray]:
    """Per-group Gram matrices without materialising the NTF matrix.

    The gradient of one example w.r.t. a layer is an outer product
    ``inp (x) delta``, so the Gram contribution of that layer is
    ``(inp^T inp) * (delta^T delta)``. Cost is O(d w n^2) instead of O(d_net n^2).
    """
    cache = forward(net, x, gates=gates, index=index)
    sig = backward_signals(net, cache, gates_fixed=gates_fixed)
    out = {}
    for key, layers in sig.items():
        out[key] = sum((inp.T @ inp) * (delta.T @ delta) for inp, delta in layers)
    return out


def gram_matrix(net: Net, x, index=None, gates=None) -> np.ndarray:
    return sum(gram_blocks(net, x, index=index, gates=gates).values())


def lambda_matrix(gates) -> np.ndarray:
    """Path-overlap matrix from gate tensors (n, d-1, w).

    The path sum over co-active paths factorises over layers into a product
    of per-layer gate inner products.
    """
    g = np.asarray(gates, dtype=np.float64)
    if g.ndim != 3:
        raise ShapeError(f"gate tensor must be (n, d-1, w), got {g.shape}")
    lam = np.ones((g.shape[0], g.shape[0]))
    for l in range(g.shape[1]):
        lam *= g[:, l, :] @ g[:, l, :].T
    return lam


def lambda_bruteforce(gates) -> np.ndarray:
    """Same quantity by explicit enumeration of the w**(d-1) paths from one input."""
    from .paths import enumerate_paths, path_activations
    from .network import NetConfig

    g = np.asarray(gates, dtype=np.float64)
    n, layers, w = g.shape
    cfg = NetConfig(1, w, layers + 1, Variant.DLN)
    paths = enumerate_paths(cfg)
    acts = np.stack([path_activations(g[s], paths) for s in range(n)])
    return acts @ acts.T


def feature_gram(x, lam) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    if lam.shape != (x.shape[1], x.shape[1]):
        raise ShapeError(f"overlap matrix {lam.shape} does not match {x.shape[1]} examples")
    return (x.T @ x) * lam


@dataclass
class TauEta:
    tau: np.ndarray  # (n, n, d-1) layerwise gate overlaps
    eta: float
    ratio: np.ndarray  # lambda(s,s') / lambda(s,s)
    bound: float  # eta ** (d-1)

    @property
    def bound_holds(self) -> bool:
        n = self.ratio.shape[0]
        off = ~np.eye(n, dtype=bool)
        return bool(np.all(self.ratio[off] <= self.bound * (1 + 1e-12)))


def tau_eta(gates) -> TauEta:
    """Layerwise gate overlaps and the worst-case overlap ratio over s' != s."""
    g = np.asarray(gates, dtype=np.float64)
    n, layers, _ = g.shape
    tau = np.stack([g[:, l, :] @ g[:, l, :].T for l in range(layers)], axis=2)
    self_tau = np.stack([np.diag(tau[:, :, l]) for l in range(layers)], axis=1)  # (n, d-1)
    if np.any(self_tau <= 0):
        s, l = map(int, np.argwhere(self_tau <= 0)[0])
        raise DeadLayerError(f"example {s} has no active gate in layer {l + 1}; eta undefined")
    rel = tau / self_tau[:, None, :]
    off = ~np.eye(n, dtype=bool)
    eta = float(rel[off].max()) if n > 1 else 0.0
    lam = np.prod(tau, axis=2)
    ratio = lam / np.diag(lam)[:, None]
    return TauEta(tau, eta, ratio, eta**layers)


class Normalization(str, enum.Enum):
    NONE = "none"
    MAX = "max"
    TRACE = "trace"


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    ecdf: np.ndarray
    normalization: Normalization


def ecdf(eigenvalues, normalization="none") -> SpectrumReport:
    """Cumulative sums of ascending eigenvalues, optionally rescaled."""
    ev = np.sort(np.asarray(eigenvalues, dtype=np.float64).ravel())
    if ev.size == 0:
        raise ValueError("empty spectrum")
    norm = Normalization(normalization)
    if norm is Normalization.MAX:
        ev = ev / ev[-1]
    elif norm is Normalization.TRACE:
        ev = ev / ev.sum()
    return SpectrumReport(ev, np.cumsum(ev), norm)


def spectrum(K) -> np.ndarray:
    return sym_eigen(K).eigenvalues


def nu(H, y, normalize: bool = True, jitter: float | None = None) -> float:
    """``y^T (H_hat + jitter I)^{-1} y`` with ``H_hat = H / trace(H)`` when normalising.

    Default jitter is ``1e-8 * trace(H_hat) / n``.
    """
    H = np.asarray(H, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    tr = float(np.trace(H))
    if tr <= 0:
        raise ValueError("nu needs a kernel with positive trace")
    if normalize:
        H = H / tr
        tr = 1.0
    if jitter is None:
        jitter = 1e-8 * tr / H.shape[0]
    return float(y @ regularized_solve(H, y, jitter))
