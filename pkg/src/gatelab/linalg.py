"""Dense linear algebra and the deterministic random stream used everywhere.

Matrices are plain float64 numpy arrays. The eigensolver is a cyclic Jacobi
iteration so that spectra do not depend on which LAPACK build is installed.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, IndefiniteMatrixError, NotSymmetricError, ShapeError

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-d matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def hadamard(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard needs equal shapes, got {a.shape} and {b.shape}")
    return a * b


class SymEigen(NamedTuple):
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # orthonormal columns


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Pairings for one parallel-ordered Jacobi sweep (every pair exactly once)."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for k in range(m // 2):
            i, j = players[k], players[m - 1 - k]
            if i < n and j < n:
                ps.append(min(i, j))
                qs.append(max(i, j))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def sym_eigen(a, tol: float = 1e-12, max_sweeps: int = 100) -> SymEigen:
    """Eigendecomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Rotations are applied in round-robin order so each round touches disjoint
    index pairs and can be vectorised. Iteration stops once the largest
    off-diagonal magnitude drops below ``tol * ||a||_F``.
    """
    a = as_matrix(a)
    n, m = a.shape
    if n != m:
        raise ShapeError(f"sym_eigen needs a square matrix, got {a.shape}")
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    if scale > 0 and np.max(np.abs(a - a.T)) > 1e-10 * scale:
        raise NotSymmetricError("matrix is not symmetric within 1e-10 relative")

    A = 0.5 * (a + a.T)
    V = np.eye(n)
    fro = float(np.linalg.norm(A))
    if n <= 1 or fro == 0.0:
        return SymEigen(np.diag(A).copy(), V)
    threshold = tol * fro
    rounds = _round_robin(n)
    off_mask = ~np.eye(n, dtype=bool)

    for _ in range(max_sweeps + 1):
        if np.max(np.abs(A[off_mask])) < threshold:
            order = np.argsort(np.diag(A), kind="stable")
            return SymEigen(np.diag(A)[order].copy(), V[:, order].copy())
        for p, q in rounds:
            apq = A[p, q]
            live = np.abs(apq) > 0.0
            if not np.any(live):
                continue
            p, q, apq = p[live], q[live], apq[live]
            theta = (A[q, q] - A[p, p]) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
            t[theta == 0.0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c

            cols_p, cols_q = A[:, p].copy(), A[:, q].copy()
            A[:, p] = c * cols_p - s * cols_q
            A[:, q] = s * cols_p + c * cols_q
            rows_p, rows_q = A[p, :].copy(), A[q, :].copy()
            A[p, :] = c[:, None] * rows_p - s[:, None] * rows_q
            A[q, :] = s[:, None] * rows_p + c[:, None] * rows_q
            A[p, q] = 0.0
            A[q, p] = 0.0

            vp, vq = V[:, p].copy(), V[:, q].copy()
            V[:, p] = c * vp - s * vq
            V[:, q] = s * vp + c * vq
    raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")


def regularized_solve(a, y, jitter: float = 0.0) -> np.ndarray:
    """Solve ``(a + jitter*I) v = y`` through a Cholesky factorisation."""
    a = as_matrix(a)
    y = np.asarray(y, dtype=np.float64)
    if a.shape[0] != a.shape[1] or y.shape != (a.shape[0],):
        raise ShapeError(f"incompatible shapes {a.shape} and {y.shape}")
    if jitter < 0:
        raise ValueError("jitter must be non-negative")
    reg = 0.5 * (a + a.T) + jitter * np.eye(a.shape[0])
    try:
        factor = scipy.linalg.cho_factor(reg, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise IndefiniteMatrixError(
            f"matrix is not positive definite with jitter={jitter:g}"
        ) from exc
    return scipy.linalg.cho_solve(factor, y, check_finite=False)


def _splitmix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _mix_int(value: int) -> int:
    with np.errstate(over="ignore"):
        return int(_splitmix(np.array([value & _MASK64], dtype=np.uint64))[0])


class Prng:
    """SplitMix64 stream.

    Output k (counting from 1) is ``mix(seed + k * 0x9E3779B97F4A7C15)`` with
    all arithmetic mod 2**64, which is the reference SplitMix64 sequence.
    Because each output depends only on its position, blocks of draws are
    generated with vectorised numpy integer arithmetic and the stream is
    identical on every platform. Not thread-safe: give each worker its own
    instance (see :meth:`spawn`).
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.position = 0

    def __repr__(self) -> str:
        return f"Prng(seed={self.seed}, position={self.position})"

    def next_u64(self, size: int) -> np.ndarray:
        k = np.arange(self.position + 1, self.position + 1 + size, dtype=np.uint64)
        self.position += size
        with np.errstate(over="ignore"):
            return _splitmix(np.uint64(self.seed) + k * _GOLDEN)

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0):
        shape = () if size is None else size
        count = int(np.prod(shape))
        u = (self.next_u64(count) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        u = low + (high - low) * u
        return float(u[0]) if size is None else u.reshape(shape)

    def bernoulli_sym(self, sigma: float, size=None):
        """Draws of exactly ``-sigma`` or ``+sigma`` with probability 1/2 each."""
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        shape = () if size is None else size
        count = int(np.prod(shape))
        bits = (self.next_u64(count) >> np.uint64(63)).astype(np.float64)
        out = sigma * (2.0 * bits - 1.0)
        return float(out[0]) if size is None else out.reshape(shape)

    def bernoulli(self, p: float, size=None):
        """0/1 draws equal to 1 with probability ``p``."""
        u = self.uniform(size)
        return float(u < p) if size is None else (u < p).astype(np.float64)

    def normal(self, size=None):
        shape = () if size is None else size
        count = int(np.prod(shape))
        u1 = self.uniform(count)
        u2 = self.uniform(count)
        z = np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
        return float(z[0]) if size is None else z.reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform(n), kind="stable")

    def spawn(self, *keys: int) -> "Prng":
        """Independent child stream determined by this seed and ``keys``."""
        state = _mix_int(self.seed ^ 0x5851F42D4C957F2D)
        for key in keys:
            state = _mix_int(state ^ _mix_int(int(key) + 0x2545F4914F6CDD1D))
        return Prng(state)


def prng_bernoulli_sym(rng: Prng, sigma: float) -> float:
    return rng.bernoulli_sym(sigma)
