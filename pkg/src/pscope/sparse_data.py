"""Sparse instances, datasets and the LibSVM text format.

Datasets are stored row-wise in CSR arrays; ``SparseVector`` and
``Instance`` are lightweight read-only views used by the per-instance
inner loops.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse


class LibSVMParseError(ValueError):
    """Malformed LibSVM input. ``lineno`` is 1-based."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SparseVector:
    """Sorted (index, value) pairs over a ``dim``-dimensional space."""

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if idx.ndim != 1 or idx.shape != val.shape:
            raise ValueError("indices and values must be 1-D and of equal length")
        if idx.size:
            if np.any(np.diff(idx) <= 0):
                raise ValueError("indices must be strictly increasing")
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise ValueError(f"index out of range for dim={self.dim}")
        if not np.all(np.isfinite(val)):
            raise ValueError("values must be finite")
        if np.any(val == 0.0):
            raise ValueError("explicit zeros are not stored")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def __eq__(self, other):
        if not isinstance(other, SparseVector):
            return NotImplemented
        return (self.dim == other.dim
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.values, other.values))


@dataclass(frozen=True)
class Instance:
    features: SparseVector
    label: float


def sparse_dot(x: SparseVector, w: np.ndarray) -> float:
    """Inner product touching only the stored coordinates of ``x``.

    The products are summed with ``math.fsum``, so the result is the
    correctly rounded sum and does not depend on summation order; in
    particular it equals the dense dot product of ``x.to_dense()`` and
    ``w`` computed the same way.
    """
    if len(w) != x.dim:
        raise ValueError(f"dimension mismatch: x.dim={x.dim}, len(w)={len(w)}")
    return _dot(x.indices, x.values, w)


def _dot(indices: np.ndarray, values: np.ndarray, w: np.ndarray) -> float:
    if indices.size == 0:
        return 0.0
    prod = values * w[indices]
    try:
        return math.fsum(prod)
    except (ValueError, OverflowError):
        # inf - inf or overflow: let the caller see a non-finite value
        return float(np.sum(prod))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable labelled sparse dataset in CSR layout.

    Row ``i`` occupies ``indices[indptr[i]:indptr[i+1]]`` and the
    matching slice of ``data``.
    """

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    labels: np.ndarray
    dim: int
    _csr: sparse.csr_matrix = field(default=None, repr=False)

    def __post_init__(self):
        indptr = np.asarray(self.indptr, dtype=np.int64)
        indices = np.asarray(self.indices, dtype=np.int64)
        data = np.asarray(self.data, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.float64)
        n = labels.size
        if n < 1:
            raise ValueError("a dataset needs at least one instance")
        if indptr.shape != (n + 1,) or indptr[0] != 0 or indptr[-1] != indices.size:
            raise ValueError("inconsistent CSR indptr")
        if indices.shape != data.shape:
            raise ValueError("indices and data must have equal length")
        if indices.size and (indices.min() < 0 or indices.max() >= self.dim):
            raise ValueError(f"feature index out of range for dim={self.dim}")
        for name, a in (("indptr", indptr), ("indices", indices),
                        ("data", data), ("labels", labels)):
            object.__setattr__(self, name, _frozen(a))
        csr = sparse.csr_matrix((data, indices, indptr), shape=(n, self.dim))
        object.__setattr__(self, "_csr", csr)

    @classmethod
    def from_instances(cls, instances: Sequence[Instance], dim: int | None = None) -> "Dataset":
        if not instances:
            raise ValueError("a dataset needs at least one instance")
        d = max(inst.features.dim for inst in instances)
        if dim is not None:
            d = max(d, dim)
        lengths = [inst.features.nnz for inst in instances]
        indptr = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
        indices = np.concatenate([inst.features.indices for inst in instances]).astype(np.int64)
        data = np.concatenate([inst.features.values for inst in instances]).astype(np.float64)
        labels = np.array([inst.label for inst in instances], dtype=np.float64)
        return cls(indptr, indices, data, labels, d)

    @classmethod
    def from_dense(cls, X: np.ndarray, y: np.ndarray) -> "Dataset":
        csr = sparse.csr_matrix(np.asarray(X, dtype=np.float64))
        csr.eliminate_zeros()
        csr.sort_indices()
        return cls(csr.indptr, csr.indices, csr.data, y, csr.shape[1])

    @property
    def n(self) -> int:
        return int(self.labels.size)

    @property
    def csr(self) -> sparse.csr_matrix:
        return self._csr

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.indptr[i], self.indptr[i + 1]
        return self.indices[a:b], self.data[a:b]

    def instance(self, i: int) -> Instance:
        idx, val = self.row(i)
        return Instance(SparseVector(idx, val, self.dim), float(self.labels[i]))

    @property
    def instances(self) -> list[Instance]:
        return [self.instance(i) for i in range(self.n)]

    def is_binary(self) -> bool:
        return bool(np.all((self.labels == 1.0) | (self.labels == -1.0)))

    def row_sq_norms(self) -> np.ndarray:
        return np.asarray(self._csr.multiply(self._csr).sum(axis=1)).ravel()

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for a in (self.indptr, self.indices, self.data, self.labels):
            h.update(np.ascontiguousarray(a).tobytes())
        h.update(str(self.dim).encode())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.dim == other.dim
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("indptr", "indices", "data", "labels")))


def _parse_number(token: str, lineno: int, what: str) -> float:
    try:
        v = float(token)
    except ValueError:
        raise LibSVMParseError(lineno, f"non-numeric {what} {token!r}") from None
    if not math.isfinite(v):
        raise LibSVMParseError(lineno, f"non-finite {what} {token!r}")
    return v


def parse_libsvm(text: bytes | str | Iterable[str], dim: int | None = None) -> Dataset:
    """Parse LibSVM text (``label idx:val ...`` with 1-based indices).

    Blank lines are skipped, ``#`` comments are rejected and explicit
    zeros are dropped. The returned dimension is the largest index seen,
    or ``dim`` if that is larger.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    lines = text.splitlines() if isinstance(text, str) else text

    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    labels: list[float] = []
    max_index = 0
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        if "#" in line:
            raise LibSVMParseError(lineno, "comments are not supported")
        tokens = line.split()
        labels.append(_parse_number(tokens[0], lineno, "label"))
        prev = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise LibSVMParseError(lineno, f"malformed token {tok!r}")
            try:
                idx = int(idx_s)
            except ValueError:
                raise LibSVMParseError(lineno, f"malformed index in {tok!r}") from None
            if idx < 1:
                raise LibSVMParseError(lineno, f"indices are 1-based, got {idx}")
            if idx <= prev:
                raise LibSVMParseError(lineno, f"non-increasing index {idx} after {prev}")
            prev = idx
            val = _parse_number(val_s, lineno, "value")
            if val != 0.0:
                indices.append(idx - 1)
                data.append(val)
        max_index = max(max_index, prev)
        indptr.append(len(indices))

    if not labels:
        raise LibSVMParseError(0, "no instances")
    d = max_index if dim is None else max(max_index, dim)
    return Dataset(np.array(indptr), np.array(indices, dtype=np.int64),
                   np.array(data, dtype=np.float64), np.array(labels), d)


def load_libsvm(path: str | Path, dim: int | None = None) -> Dataset:
    return parse_libsvm(Path(path).read_bytes(), dim=dim)


def _fmt(v: float) -> str:
    if v.is_integer() and abs(v) < 2**53:
        return str(int(v))
    return repr(v)


def to_libsvm(dataset: Dataset) -> str:
    """Serialize back to LibSVM text; ``parse_libsvm`` inverts it exactly."""
    out = []
    for i in range(dataset.n):
        idx, val = dataset.row(i)
        parts = [_fmt(float(dataset.labels[i]))]
        parts.extend(f"{j + 1}:{_fmt(float(v))}" for j, v in zip(idx, val))
        out.append(" ".join(parts))
    return "\n".join(out) + "\n"


def save_libsvm(dataset: Dataset, path: str | Path) -> None:
    Path(path).write_text(to_libsvm(dataset))
