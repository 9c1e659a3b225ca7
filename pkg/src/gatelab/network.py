"""Deep gated networks: configuration, initialisation, forward/backward passes.

Every variant shares one recursion: ``q(l) = W(l)^T z(l-1)``, ``z(l) = q(l) * G(l)``
and a scalar readout ``y = W(d)^T z(d-1)``. The variants differ only in where
the gates ``G`` come from:

* ``dln``         all gates are 1
* ``frg``         gates are frozen Bernoulli(mu) draws, one per (example, layer, node)
* ``galu``        a separate frozen ReLU network produces 0/1 gates
* ``relu``        the weight network gates itself, ``G = 1{q > 0}``
* ``soft_relu``   the weight network gates itself with ``(1+eps) * sigmoid(beta*q)``
* ``soft_galu``   a separate soft-gated network produces the gates; both trainable

Batches are column-major like the data matrix: ``x`` has shape ``(d_in, n)``.
Gate tensors have shape ``(n, d-1, w)``.
"""

from __future__ import annotations

import copy
import enum
import hashlib
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    NetFormatError,
    NetVersionError,
    ShapeError,
    UnregisteredInputError,
    VariantError,
)
from .linalg import Prng


class Variant(str, enum.Enum):
    DLN = "dln"
    FRG = "frg"
    GALU = "galu"
    RELU = "relu"
    SOFT_RELU = "soft_relu"
    SOFT_GALU = "soft_galu"

    @property
    def soft(self) -> bool:
        return self in (Variant.SOFT_RELU, Variant.SOFT_GALU)

    @property
    def shared(self) -> bool:
        """Gates are computed from the weight network itself."""
        return self in (Variant.RELU, Variant.SOFT_RELU)

    @property
    def gating_net(self) -> bool:
        return self in (Variant.GALU, Variant.SOFT_GALU)

    @property
    def frozen_gates(self) -> bool:
        return self in (Variant.DLN, Variant.FRG, Variant.GALU)


_VARIANT_CODES = {v: i for i, v in enumerate(Variant)}


@dataclass(frozen=True)
class NetConfig:
    d_in: int
    w: int
    d: int
    variant: Variant = Variant.RELU
    sigma: float | None = None
    beta: float = 4.0
    epsilon: float = 0.0
    mu: float = 0.5
    train_w: bool = True
    train_g: bool | None = None  # None: trainable exactly for soft_galu

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.d < 2:
            raise ConfigError("depth d must be at least 2")
        if self.w < 1 or self.d_in < 1:
            raise ConfigError("width and input dimension must be positive")
        if self.variant.soft and not (self.beta > 0 and math.isfinite(self.beta)):
            raise ConfigError("soft gates need a finite beta > 0")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be non-negative")
        if self.variant is Variant.FRG and not 0 < self.mu < 1:
            raise ConfigError("FRG needs 0 < mu < 1")
        if self.sigma is not None and self.sigma <= 0:
            raise ConfigError("sigma must be positive")
        if self.train_g is None:
            object.__setattr__(self, "train_g", self.variant is Variant.SOFT_GALU)
        if self.train_g and self.variant is not Variant.SOFT_GALU:
            raise ConfigError(f"gating parameters of {self.variant.value} cannot be trained")

    @property
    def resolved_sigma(self) -> float:
        if self.sigma is not None:
            return self.sigma
        if self.variant is Variant.FRG:
            return math.sqrt(1.0 / (self.mu * self.w))
        if self.variant is Variant.DLN:
            return math.sqrt(1.0 / self.w)
        return math.sqrt(2.0 / self.w)

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        return [(self.d_in, self.w)] + [(self.w, self.w)] * (self.d - 2) + [(self.w, 1)]

    @property
    def d_net(self) -> int:
        return sum(a * b for a, b in self.layer_shapes)

    @property
    def gate_ceiling(self) -> float:
        return 1.0 + self.epsilon if self.variant.soft else 1.0

    def same_architecture(self, other: "NetConfig") -> bool:
        return (self.d_in, self.w, self.d) == (other.d_in, other.w, other.d)


ParamSet = list  # list of float64 arrays with shapes NetConfig.layer_shapes


@dataclass
class Net:
    """A network instance. ``weights`` drive the output; ``gate_weights`` (if any)
    belong to the separate gating network; ``frg_gates``/``frg_inputs`` hold the
    frozen random gates and the inputs they were drawn for."""

    config: NetConfig
    weights: ParamSet
    gate_weights: ParamSet | None = None
    frg_gates: np.ndarray | None = None
    frg_inputs: np.ndarray | None = None

    def copy(self) -> "Net":
        return copy.deepcopy(self)

    def param_groups(self) -> dict[str, ParamSet]:
        """Trainable parameter sets, keyed ``"w"`` (strength) and ``"g"`` (gating)."""
        groups = {}
        if self.config.train_w:
            groups["w"] = self.weights
        if self.config.train_g:
            groups["g"] = self.gate_weights
        return groups

    @property
    def gate_source(self) -> ParamSet | None:
        """Parameters that produce the gates (shared weights or gating net)."""
        if self.config.variant.shared:
            return self.weights
        return self.gate_weights


@dataclass
class ForwardCache:
    q: list  # pre-activations of the weight network, each (w, n)
    z: list  # z[0] = x; z[l] = q[l-1] * G[l-1]
    gates: list  # each (w, n)
    y: np.ndarray  # (n,)
    gate_q: list = field(default_factory=list)  # gating network pre-activations
    gate_z: list = field(default_factory=list)
    gates_given: bool = False  # gates were supplied by the caller and act as constants

    def gate_tensor(self) -> np.ndarray:
        return np.stack([g.T for g in self.gates], axis=1)


def init_params(config: NetConfig, rng: Prng) -> ParamSet:
    """Symmetric Bernoulli weights: every entry is -sigma or +sigma."""
    sigma = config.resolved_sigma
    return [rng.bernoulli_sym(sigma, shape) for shape in config.layer_shapes]


def build_net(config: NetConfig, rng: Prng, x=None) -> Net:
    """Initialise a network. FRG needs the training inputs ``x`` (d_in, n)
    because its gates exist only for those inputs."""
    weights = init_params(config, rng.spawn(1))
    gate_weights = init_params(config, rng.spawn(2)) if config.variant.gating_net else None
    net = Net(config, weights, gate_weights)
    if config.variant is Variant.FRG:
        if x is None:
            raise ConfigError("FRG networks are built for a fixed set of inputs")
        x = _as_batch(x, config.d_in)
        n = x.shape[1]
        net.frg_gates = rng.spawn(3).bernoulli(config.mu, (n, config.d - 1, config.w))
        net.frg_inputs = x.copy()
    return net


def _as_batch(x, d_in: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] != d_in:
        raise ShapeError(f"expected inputs with {d_in} rows, got shape {x.shape}")
    return x


def gate_function(q: np.ndarray, config: NetConfig) -> np.ndarray:
    """Gate value for pre-activation ``q``. Soft: ``(1+eps)/(1+exp(-beta q))``.
    Hard: ``1{q > 0}`` (q == 0 is off)."""
    if config.variant.soft:
        return (1.0 + config.epsilon) * 0.5 * (1.0 + np.tanh(0.5 * config.beta * q))
    return (q > 0).astype(np.float64)


TIE_TOLERANCE = 1e-12


def layer_gates(layer: np.ndarray, z: np.ndarray, q: np.ndarray, config: NetConfig) -> np.ndarray:
    """Gates of one layer. Hard gates treat ``|q|`` below ``TIE_TOLERANCE`` times
    ``|W|^T |z|`` as an exact zero (off): symmetric +-sigma weights often cancel
    exactly, and the rounding left over would otherwise depend on summation order."""
    if config.variant.soft:
        return gate_function(q, config)
    scale = np.abs(layer).T @ np.abs(z)
    return (q > TIE_TOLERANCE * scale).astype(np.float64)


def gate_derivative(q: np.ndarray, config: NetConfig) -> np.ndarray:
    """d gate / d q; identically zero for hard gates."""
    if not config.variant.soft:
        return np.zeros_like(q)
    s = 0.5 * (1.0 + np.tanh(0.5 * config.beta * q))
    return (1.0 + config.epsilon) * config.beta * s * (1.0 - s)


def _frg_lookup(net: Net, x: np.ndarray, index) -> np.ndarray:
    if index is None:
        index = []
        for col in x.T:
            hits = np.flatnonzero(np.all(net.frg_inputs == col[:, None], axis=0))
            if len(hits) != 1:
                reason = "not registered" if len(hits) == 0 else "ambiguous; pass index"
                raise UnregisteredInputError(f"FRG input {col.tolist()} is {reason}")
            index.append(int(hits[0]))
    index = np.atleast_1d(np.asarray(index, dtype=np.intp))
    n_reg = net.frg_gates.shape[0]
    if np.any(index < 0) or np.any(index >= n_reg):
        raise UnregisteredInputError(f"FRG gates exist only for indices 0..{n_reg - 1}")
    if not np.array_equal(net.frg_inputs[:, index], x):
        raise UnregisteredInputError("inputs do not match the registered FRG inputs")
    return net.frg_gates[index]


def _run_gating_net(params: ParamSet, x: np.ndarray, config: NetConfig):
    qs, zs, gs = [], [x], []
    z = x
    for layer in params[:-1]:
        q = layer.T @ z
        g = layer_gates(layer, z, q, config)
        z = q * g
        qs.append(q)
        gs.append(g)
        zs.append(z)
    return qs, zs, gs


def forward(net: Net, x, gates=None, index=None) -> ForwardCache:
    """Evaluate the network on a batch ``x`` of shape (d_in, n) or a single vector.

    ``gates`` (n, d-1, w) overrides the variant's own gating; ``index`` selects
    registered FRG inputs.
    """
    cfg = net.config
    x = _as_batch(x, cfg.d_in)
    n = x.shape[1]
    gate_q, gate_z = [], []
    if gates is not None:
        gates = np.asarray(gates, dtype=np.float64).reshape(n, cfg.d - 1, cfg.w)
        gate_rows = [gates[:, l, :].T for l in range(cfg.d - 1)]
    elif cfg.variant is Variant.DLN:
        gate_rows = [np.ones((cfg.w, n)) for _ in range(cfg.d - 1)]
    elif cfg.variant is Variant.FRG:
        g = _frg_lookup(net, x, index)
        gate_rows = [g[:, l, :].T for l in range(cfg.d - 1)]
    elif cfg.variant.gating_net:
        gate_q, gate_z, gate_rows = _run_gating_net(net.gate_weights, x, cfg)
    else:
        gate_rows = None  # computed inline from the weight network

    qs, zs, gs = [], [x], []
    z = x
    for l, layer in enumerate(net.weights[:-1]):
        q = layer.T @ z
        g = layer_gates(layer, z, q, cfg) if gate_rows is None else gate_rows[l]
        z = q * g
        qs.append(q)
        gs.append(g)
        zs.append(z)
    y = (net.weights[-1].T @ z)[0]
    return ForwardCache(qs, zs, gs, y, gate_q, gate_z, gates is not None)


def compute_gates(net: Net, x, index=None) -> np.ndarray:
    """Gate tensor (n, d-1, w) for a batch, or (d-1, w) for a single vector."""
    single = np.asarray(x).ndim == 1
    g = forward(net, x, index=index).gate_tensor()
    return g[0] if single else g


def output(net: Net, x, index=None, gates=None) -> np.ndarray:
    return forward(net, x, gates=gates, index=index).y


def backward_signals(net: Net, cache: ForwardCache, gates_fixed: bool = False):
    """Per-example gradient factors of the scalar output.

    Returns ``{"w": [(inp, delta), ...], "g": [...]}`` with one pair per layer;
    the gradient of example ``s`` w.r.t. layer ``l`` is ``outer(inp[:, s], delta[:, s])``.
    Only trainable groups are returned. With ``gates_fixed`` the gates are
    treated as constants (no gate-adaptation flow).
    """
    cfg = net.config
    n = cache.y.shape[0]
    gates_fixed = gates_fixed or cache.gates_given
    soft_flow = cfg.variant.soft and not gates_fixed
    w_sig = [None] * cfg.d
    w_sig[-1] = (cache.z[-1], np.ones((1, n)))
    gz = net.weights[-1] @ np.ones((1, n))
    gate_grads = [None] * (cfg.d - 1)
    for l in range(cfg.d - 2, -1, -1):
        q, g = cache.q[l], cache.gates[l]
        if cfg.variant.shared and soft_flow:
            gq = gz * (g + q * gate_derivative(q, cfg))
        else:
            gq = gz * g
        gate_grads[l] = gz * q
        w_sig[l] = (cache.z[l], gq)
        gz = net.weights[l] @ gq

    signals = {}
    if cfg.train_w:
        signals["w"] = w_sig
    if cfg.train_g and not cache.gates_given:
        g_sig = [None] * cfg.d
        g_sig[-1] = (cache.gate_z[-1], np.zeros((1, n)))
        gzg = np.zeros_like(cache.gate_q[-1])
        for l in range(cfg.d - 2, -1, -1):
            qg, g = cache.gate_q[l], cache.gates[l]
            dg = np.zeros_like(qg) if gates_fixed else gate_derivative(qg, cfg)
            gqg = gzg * g + (gzg * qg + gate_grads[l]) * dg
            g_sig[l] = (cache.gate_z[l], gqg)
            gzg = net.gate_weights[l] @ gqg
        signals["g"] = g_sig
    return signals


def _flatten_signals(sig) -> np.ndarray:
    blocks = [np.einsum("as,js->ajs", inp, delta).reshape(-1, inp.shape[1]) for inp, delta in sig]
    return np.concatenate(blocks, axis=0)


def ntf_columns(net: Net, x, index=None, gates=None) -> dict[str, np.ndarray]:
    """Output gradients per trainable group, each (group_size, n)."""
    cache = forward(net, x, gates=gates, index=index)
    return {k: _flatten_signals(v) for k, v in backward_signals(net, cache).items()}


def ntf_column(net: Net, x, index=None) -> np.ndarray:
    """Gradient of the output at one input w.r.t. every trainable parameter.

    Ordering: strength parameters then gating parameters; within a group
    layer by layer, each layer matrix in row-major order.
    """
    cols = ntf_columns(net, np.asarray(x, dtype=np.float64).reshape(net.config.d_in, 1), index)
    return np.concatenate([cols[k] for k in ("w", "g") if k in cols], axis=0)[:, 0]


def flatten_params(params: ParamSet) -> np.ndarray:
    return np.concatenate([p.ravel() for p in params])


def unflatten_params(vec: np.ndarray, config: NetConfig) -> ParamSet:
    out, pos = [], 0
    for a, b in config.layer_shapes:
        out.append(np.array(vec[pos : pos + a * b], dtype=np.float64).reshape(a, b))
        pos += a * b
    return out


def gate_jacobian(net: Net, x, columns=None) -> np.ndarray:
    """d G(l, j) / d theta_g(m) for a single input, shape (d-1, w, len(columns)).

    theta_g is the parameter vector that produces the gates (the gating
    network, or the shared weights for soft_relu), flattened as in
    :func:`flatten_params`. ``columns`` restricts m to a subset (default: all).
    Forward-mode accumulation through the gate network recursion ``z = q * G(q)``.
    """
    cfg = net.config
    if not cfg.variant.soft:
        raise VariantError("gate derivatives vanish identically for hard gates")
    params = net.gate_source
    x = np.asarray(x, dtype=np.float64).reshape(cfg.d_in)
    offsets = np.cumsum([0] + [a * b for a, b in cfg.layer_shapes])
    cols = np.arange(offsets[-1]) if columns is None else np.asarray(columns, dtype=np.intp)
    k = len(cols)
    jac = np.zeros((cfg.d - 1, cfg.w, k))
    z = x
    jz = np.zeros((cfg.d_in, k))
    for l in range(cfg.d - 1):
        layer = params[l]
        fan_out = layer.shape[1]
        jq = layer.T @ jz
        # direct term: dq[j] / dW[a, j] = z[a]; W is flattened row-major
        own = np.flatnonzero((cols >= offsets[l]) & (cols < offsets[l + 1]))
        local = cols[own] - offsets[l]
        jq[local % fan_out, own] += z[local // fan_out]
        q = layer.T @ z
        g = gate_function(q, cfg)
        dg = gate_derivative(q, cfg)
        jac[l] = dg[:, None] * jq
        jz = (g + q * dg)[:, None] * jq
        z = q * g
    return jac


def transplant_gates(source: Net, target_config: NetConfig, rng: Prng) -> Net:
    """New network whose frozen gating parameters are a copy of the parameters
    that produce ``source``'s gates; its strength parameters are fresh draws."""
    if not source.config.same_architecture(target_config):
        raise ConfigError("transplant needs identical (d_in, w, d)")
    if not target_config.variant.gating_net:
        raise VariantError("transplant target must have a gating network")
    src = source.gate_source
    if src is None:
        raise VariantError(f"{source.config.variant.value} has no gating parameters")
    cfg = replace(target_config, train_g=False) if target_config.variant is Variant.GALU else target_config
    return Net(cfg, init_params(cfg, rng), [p.copy() for p in src])


# --- persistence --------------------------------------------------------------

MAGIC = b"DGN1"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sI")
_CONFIG = struct.Struct("<IIIIddddBB")


def _pack_params(params: ParamSet | None) -> bytes:
    if params is None:
        return struct.pack("<I", 0)
    out = [struct.pack("<I", len(params))]
    for p in params:
        out.append(struct.pack("<II", *p.shape))
        out.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
    return b"".join(out)


def _pack_array(a: np.ndarray | None) -> bytes:
    if a is None:
        return struct.pack("<I", 0)
    head = struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    return head + np.ascontiguousarray(a, dtype="<f8").tobytes()


def save_net(path, net: Net) -> None:
    """Write the versioned little-endian weight file (see README for layout)."""
    cfg = net.config
    body = [
        _HEADER.pack(MAGIC, FORMAT_VERSION),
        _CONFIG.pack(
            cfg.d_in, cfg.w, cfg.d, _VARIANT_CODES[cfg.variant],
            cfg.resolved_sigma, cfg.beta, cfg.epsilon, cfg.mu,
            int(cfg.train_w), int(cfg.train_g),
        ),
        _pack_params(net.weights),
        _pack_params(net.gate_weights),
        _pack_array(net.frg_gates),
        _pack_array(net.frg_inputs),
    ]
    payload = b"".join(body)
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    Path(path).write_bytes(payload + digest)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise NetFormatError("weight file is truncated")
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))

    def floats(self, shape) -> np.ndarray:
        count = int(np.prod(shape))
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)


def load_net(path) -> Net:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size + 8:
        raise NetFormatError("weight file is truncated")
    magic, version = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise NetFormatError(f"bad magic {magic!r}")
    if version > FORMAT_VERSION:
        raise NetVersionError(f"file format version {version} is newer than {FORMAT_VERSION}")
    payload, digest = raw[:-8], raw[-8:]
    if hashlib.blake2b(payload, digest_size=8).digest() != digest:
        raise NetFormatError("checksum mismatch")
    r = _Reader(payload)
    r.take(_HEADER.size)
    d_in, w, d, code, sigma, beta, eps, mu, tw, tg = r.unpack(_CONFIG.format)
    try:
        variant = list(Variant)[code]
    except IndexError as exc:
        raise NetFormatError(f"unknown variant code {code}") from exc
    cfg = NetConfig(d_in, w, d, variant, sigma, beta, eps, mu, bool(tw), bool(tg))

    def params():
        (count,) = r.unpack("<I")
        out = []
        for _ in range(count):
            a, b = r.unpack("<II")
            out.append(r.floats((a, b)))
        return out or None

    def array():
        (ndim,) = r.unpack("<I")
        if ndim == 0:
            return None
        return r.floats(r.unpack(f"<{ndim}I"))

    weights = params()
    gate_weights = params()
    frg_gates = array()
    frg_inputs = array()
    if r.pos != len(payload):
        raise NetFormatError("trailing bytes in weight file")
    if weights is None or [p.shape for p in weights] != cfg.layer_shapes:
        raise NetFormatError("layer shapes do not match the stored config")
    return Net(cfg, weights, gate_weights, frg_gates, frg_inputs)
