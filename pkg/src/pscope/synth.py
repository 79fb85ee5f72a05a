"""Desk-scale synthetic problems."""
from __future__ import annotations

import numpy as np
from scipy import sparse

from .sparse_data import Dataset


def make_synthetic(n: int, d: int, density: float = 1.0, task: str = "regression",
                   seed: int = 0, noise: float = 0.1, support: float = 0.2,
                   normalize: bool = False):
    """Sparse Gaussian design with a sparse ground-truth weight vector.

    Each feature entry is nonzero with probability ``density`` and then
    standard normal. Labels are ``x^T w_true + noise`` (regression) or
    its sign (classification). With ``normalize`` rows are scaled to unit
    norm. Returns ``(dataset, w_true)``.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    if not 0.0 < density <= 1.0:
        raise ValueError("density must lie in (0, 1]")
    if task not in ("regression", "classification"):
        raise ValueError(f"unknown task {task!r}")
    rng = np.random.default_rng(seed)
    if density == 1.0:
        X = sparse.csr_matrix(rng.standard_normal((n, d)))
    else:
        X = sparse.random(n, d, density=density, format="csr", random_state=rng,
                          data_rvs=rng.standard_normal)
    X.sort_indices()
    if normalize:
        norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
        norms[norms == 0] = 1.0
        X = sparse.diags(1.0 / norms) @ X
        X = X.tocsr()
        X.sort_indices()
    k = max(1, int(round(support * d)))
    w_true = np.zeros(d)
    w_true[rng.choice(d, size=k, replace=False)] = rng.standard_normal(k)
    y = X @ w_true + noise * rng.standard_normal(n)
    if task == "classification":
        y = np.where(y >= 0, 1.0, -1.0)
    X.eliminate_zeros()
    return Dataset(X.indptr, X.indices, X.data, y, d), w_true


def make_class_mixture(n: int, d: int, seed: int = 0, separation: float = 0.5,
                       spread: float = 4.0):
    """Balanced two-class Gaussian mixture with class-dependent feature scales.

    Positives are ``mu + diag(s) e`` and negatives ``-mu + diag(s[::-1]) e``
    with scales ``s`` log-spaced over ``[1/spread, spread]``, so the two
    classes have different second moments. Rows are scaled to unit norm.
    """
    rng = np.random.default_rng(seed)
    y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    rng.shuffle(y)
    mu = separation * rng.standard_normal(d) / np.sqrt(d)
    s = np.logspace(-np.log10(spread), np.log10(spread), d)
    e = rng.standard_normal((n, d))
    X = np.where(y[:, None] > 0, mu + s * e, -mu + s[::-1] * e)
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    return Dataset.from_dense(X, y)
