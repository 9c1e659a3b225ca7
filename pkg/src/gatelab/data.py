"""Datasets: the synthetic regression tasks, CSV files and binary MNIST subsets."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError, ShapeError
from .linalg import Prng


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray  # (d_in, n)
    y: np.ndarray  # (n,)
    name: str = ""
    seed: int | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if x.ndim != 2 or y.shape != (x.shape[1],):
            raise ShapeError(f"inputs {x.shape} and labels {y.shape} do not line up")
        if x.shape[1] < 1:
            raise ShapeError("a dataset needs at least one example")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DataFormatError("dataset has non-finite entries")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def d_in(self) -> int:
        return self.x.shape[0]

    @property
    def n(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(self.x[:, idx], self.y[idx], self.name, self.seed)


def gen_experiment1(n: int = 200, seed: int = 0) -> Dataset:
    """Scalar input fixed at 1, labels uniform on [-1, 1]."""
    if n < 1:
        raise ValueError("n must be positive")
    y = Prng(seed).uniform(n, -1.0, 1.0)
    return Dataset(np.ones((1, n)), y, "experiment1", seed)


def gen_experiment2(n: int = 100, seed: int = 0) -> Dataset:
    """Inputs uniform on [-1, 1]^2, labels uniform on [-1, 1]."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = Prng(seed)
    x = rng.uniform((2, n), -1.0, 1.0)
    y = rng.uniform(n, -1.0, 1.0)
    return Dataset(x, y, "experiment2", seed)


def gen_two_gaussians(n: int = 100, d_in: int = 10, separation: float = 1.0, seed: int = 0) -> Dataset:
    """Two isotropic unit-variance Gaussians with means ``+-separation/2`` along
    the first axis; labels -1 and +1 alternate."""
    if n < 2:
        raise ValueError("need at least one example per class")
    rng = Prng(seed)
    y = np.where(np.arange(n) % 2 == 0, -1.0, 1.0)
    x = rng.normal((d_in, n))
    x[0] += 0.5 * separation * y
    return Dataset(x / np.sqrt(d_in), y, "two_gaussians", seed)


def split(data: Dataset, test_fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded shuffle into (train, test)."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    n_test = int(round(test_fraction * data.n))
    if n_test < 1 or n_test >= data.n:
        raise ValueError(f"a {test_fraction:g} split of {data.n} examples leaves an empty side")
    perm = Prng(seed).permutation(data.n)
    return data.subset(np.sort(perm[n_test:])), data.subset(np.sort(perm[:n_test]))


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path, d_in: int) -> Dataset:
    """Rows of ``d_in`` features followed by one label; a non-numeric first line is a header."""
    path = Path(path)
    xs, ys = [], []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and not all(_is_number(c) for c in row):
                continue
            if len(row) != d_in + 1:
                raise DataFormatError(f"{path}:{lineno}: expected {d_in + 1} columns, found {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
            xs.append(vals[:d_in])
            ys.append(vals[d_in])
    if not xs:
        raise DataFormatError(f"{path}: no data rows")
    return Dataset(np.array(xs).T, np.array(ys), path.stem)


def save_csv(path, data: Dataset, header: bool = True) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            writer.writerow([f"x{i + 1}" for i in range(data.d_in)] + ["y"])
        for s in range(data.n):
            writer.writerow([repr(float(v)) for v in data.x[:, s]] + [repr(float(data.y[s]))])


IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801


def _read_idx(path, magic: int, ndim: int) -> np.ndarray:
    buf = Path(path).read_bytes()
    if len(buf) < 4 + 4 * ndim:
        raise DataFormatError(f"{path}: truncated header")
    (got,) = struct.unpack(">I", buf[:4])
    if got != magic:
        raise DataFormatError(f"{path}: bad magic 0x{got:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", buf[4 : 4 + 4 * ndim])
    body = buf[4 + 4 * ndim :]
    size = int(np.prod(dims))
    if len(body) < size:
        raise DataFormatError(f"{path}: truncated payload ({len(body)} of {size} bytes)")
    return np.frombuffer(body[:size], dtype=np.uint8).reshape(dims)


def load_idx_binary_mnist(images_path, labels_path, class_a: int = 4, class_b: int = 7,
                          limit: int | None = 100) -> Dataset:
    """Two-class subset: ``class_a`` -> -1, ``class_b`` -> +1, pixels scaled to [0, 1].

    Keeps the first ``limit`` examples of each class in file order.
    """
    images = _read_idx(images_path, IDX_IMAGES, 3)
    labels = _read_idx(labels_path, IDX_LABELS, 1)
    if len(images) != len(labels):
        raise DataFormatError(f"{len(images)} images but {len(labels)} labels")
    present = set(np.unique(labels).tolist())
    for c in (class_a, class_b):
        if c not in present:
            raise DataFormatError(f"class {c} does not occur in {labels_path}")
    keep = []
    for c in (class_a, class_b):
        idx = np.flatnonzero(labels == c)
        keep.append(idx if limit is None else idx[:limit])
    idx = np.sort(np.concatenate(keep))
    x = images[idx].reshape(len(idx), -1).T.astype(np.float64) / 255.0
    y = np.where(labels[idx] == class_a, -1.0, 1.0)
    return Dataset(x, y, f"mnist_{class_a}_vs_{class_b}")


def write_idx(path, array: np.ndarray, magic: int) -> None:
    """Write a uint8 array as an IDX file (used to build fixtures)."""
    a = np.asarray(array, dtype=np.uint8)
    with Path(path).open("wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(f">{a.ndim}I", *a.shape))
        fh.write(a.tobytes())
