"""Loss kernels, soft-thresholding and the elastic-net objective.

The objective is

    P(w) = 1/n sum_i h_i(x_i^T w) + lambda1/2 ||w||^2 + lambda2 ||w||_1

with ``h_i(t) = log(1 + exp(-y_i t))`` (logistic) or ``(t - y_i)^2 / 2``
(squared). Gradient helpers return only the ``h`` part; the L2 term is
applied by the solvers as a ``(1 - eta*lambda1)`` scaling.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .sparse_data import Dataset, SparseVector, sparse_dot


class Loss(str, enum.Enum):
    LOGISTIC = "logistic"
    SQUARED = "squared"


@dataclass(frozen=True)
class ModelSpec:
    loss: Loss
    lambda1: float = 0.0
    lambda2: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "loss", Loss(self.loss))
        if not self.lambda1 >= 0 or not self.lambda2 >= 0:
            raise ValueError("lambda1 and lambda2 must be nonnegative")

    @classmethod
    def lasso(cls, lambda2: float) -> "ModelSpec":
        return cls(Loss.SQUARED, 0.0, lambda2)

    @classmethod
    def logistic(cls, lambda1: float, lambda2: float) -> "ModelSpec":
        return cls(Loss.LOGISTIC, lambda1, lambda2)

    @property
    def curvature(self) -> float:
        """Upper bound on h''."""
        return 0.25 if self.loss is Loss.LOGISTIC else 1.0

    def check_labels(self, dataset: Dataset) -> None:
        if self.loss is Loss.LOGISTIC and not dataset.is_binary():
            raise ValueError("logistic loss requires labels in {-1, +1}")


def scalar_loss_derivative(spec: ModelSpec, t: float, y: float) -> float:
    """h'(t) for one instance."""
    if spec.loss is Loss.SQUARED:
        return t - y
    yt = y * t
    if yt > 0:
        e = math.exp(-yt)
        return -y * e / (1.0 + e)
    return -y / (1.0 + math.exp(yt))


def loss_values(spec: ModelSpec, t: np.ndarray, y: np.ndarray) -> np.ndarray:
    if spec.loss is Loss.SQUARED:
        return 0.5 * (t - y) ** 2
    return np.logaddexp(0.0, -y * t)


def loss_derivatives(spec: ModelSpec, t: np.ndarray, y: np.ndarray) -> np.ndarray:
    if spec.loss is Loss.SQUARED:
        return t - y
    return -y * expit(-y * t)


def prox_l1(u: float, threshold: float) -> float:
    """Soft-thresholding, sign(u) * max(|u| - threshold, 0)."""
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    if u > threshold:
        return u - threshold
    if u < -threshold:
        return u + threshold
    return 0.0


def soft_threshold(u: np.ndarray, threshold: float) -> np.ndarray:
    """Vectorized ``prox_l1``; elementwise bit-identical to it."""
    return np.where(u > threshold, u - threshold,
                    np.where(u < -threshold, u + threshold, 0.0))


def instance_smooth_grad_scalar(spec: ModelSpec, x: SparseVector, w: np.ndarray,
                                y: float) -> float:
    return scalar_loss_derivative(spec, sparse_dot(x, w), y)


def _check_dim(dataset: Dataset, w: np.ndarray) -> None:
    if len(w) != dataset.dim:
        raise ValueError(f"dimension mismatch: dataset.dim={dataset.dim}, len(w)={len(w)}")


def mean_smooth_gradient(spec: ModelSpec, dataset: Dataset, w: np.ndarray,
                         rows: np.ndarray | None = None) -> np.ndarray:
    """Sum of ``h_i'(x_i^T w) x_i`` over ``rows`` (all rows by default).

    Unnormalized despite the name: the caller divides by the relevant
    instance count. The L2 term is excluded.
    """
    _check_dim(dataset, w)
    X = dataset.csr if rows is None else dataset.csr[rows]
    y = dataset.labels if rows is None else dataset.labels[rows]
    if X.shape[0] == 0:
        return np.zeros(dataset.dim)
    g = loss_derivatives(spec, X @ w, y)
    return np.asarray(X.T @ g).ravel()


def smooth_loss_mean(spec: ModelSpec, dataset: Dataset, w: np.ndarray,
                     rows: np.ndarray | None = None) -> float:
    """Mean of ``h_i(x_i^T w)`` over ``rows`` (no regularization)."""
    _check_dim(dataset, w)
    X = dataset.csr if rows is None else dataset.csr[rows]
    y = dataset.labels if rows is None else dataset.labels[rows]
    return float(np.mean(loss_values(spec, X @ w, y)))


def evaluate_objective(spec: ModelSpec, dataset: Dataset, w: np.ndarray) -> float:
    w = np.asarray(w, dtype=np.float64)
    return (smooth_loss_mean(spec, dataset, w)
            + 0.5 * spec.lambda1 * float(w @ w)
            + spec.lambda2 * float(np.abs(w).sum()))


def full_gradient(spec: ModelSpec, dataset: Dataset, w: np.ndarray) -> np.ndarray:
    """Gradient of the smooth part F, including the L2 term."""
    return mean_smooth_gradient(spec, dataset, w) / dataset.n + spec.lambda1 * w


def smoothness_bound(spec: ModelSpec, dataset: Dataset, rows: np.ndarray | None = None) -> float:
    """Per-instance smoothness estimate lambda1 + c * max_i ||x_i||^2."""
    sq = dataset.row_sq_norms()
    if rows is not None:
        sq = sq[rows]
    top = float(sq.max()) if sq.size else 0.0
    return spec.lambda1 + spec.curvature * top


def prox_grad_residual(spec: ModelSpec, dataset: Dataset, w: np.ndarray, step: float) -> float:
    """||w - prox(w - step * grad F(w))||_inf, zero exactly at the optimum."""
    g = full_gradient(spec, dataset, w)
    return float(np.max(np.abs(w - soft_threshold(w - step * g, step * spec.lambda2))))
