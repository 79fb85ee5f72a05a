"""Data partitions, local objectives and partition-quality estimates."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .objective import (ModelSpec, evaluate_objective, mean_smooth_gradient, smooth_loss_mean,
                        soft_threshold)
from .sparse_data import Dataset

KINDS = ("uniform", "skew", "labelsplit", "replicate")


class SubproblemError(RuntimeError):
    def __init__(self, message, best, residual):
        super().__init__(message)
        self.best = best
        self.residual = residual


def parse_kind(kind: str) -> tuple[str, float | None]:
    """``"uniform" | "skew:<f>" | "labelsplit" | "replicate"`` -> (name, fraction)."""
    name, _, arg = kind.partition(":")
    if name not in KINDS:
        raise ValueError(f"unknown partition kind {kind!r}")
    if name == "skew":
        try:
            f = float(arg)
        except ValueError:
            raise ValueError(f"skew needs a fraction, e.g. skew:0.75 (got {kind!r})") from None
        if not 0.0 <= f <= 1.0:
            raise ValueError("skew fraction must lie in [0, 1]")
        return name, f
    if arg:
        raise ValueError(f"partition kind {name!r} takes no argument")
    return name, None


@dataclass(frozen=True, eq=False)
class PartitionPlan:
    kind: str
    shards: tuple

    @property
    def p(self) -> int:
        return len(self.shards)

    def sizes(self) -> list[int]:
        return [len(s) for s in self.shards]


def _deal(order: np.ndarray, p: int) -> list[np.ndarray]:
    return [np.sort(order[k::p]) for k in range(p)]


def make_partition(dataset: Dataset, kind: str, p: int, seed: int = 0) -> PartitionPlan:
    """Split instance ids into ``p`` shards.

    uniform: seeded shuffle dealt round-robin. skew:f puts a fraction f
    of the positives and 1 - f of the negatives on the first p/2
    workers. labelsplit is skew:1. replicate gives every worker all
    instances. Shard contents are sorted.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    name, frac = parse_kind(kind)
    n = dataset.n
    if name == "replicate":
        full = np.arange(n)
        return PartitionPlan(kind, tuple(full.copy() for _ in range(p)))
    if p == 1:
        return PartitionPlan(kind, (np.arange(n),))
    rng = np.random.default_rng(seed)
    if name == "uniform":
        return PartitionPlan(kind, tuple(_deal(rng.permutation(n), p)))

    if not dataset.is_binary():
        raise ValueError(f"{name} requires binary labels")
    if p % 2:
        raise ValueError(f"{name} requires an even number of workers")
    if name == "labelsplit":
        frac = 1.0
    half = p // 2
    # slots on the first half under round-robin sizes
    capacity = sum(n // p + (k < n % p) for k in range(half))
    pos = rng.permutation(np.flatnonzero(dataset.labels > 0))
    neg = rng.permutation(np.flatnonzero(dataset.labels < 0))
    n_pos = min(int(round(frac * pos.size)), capacity)
    n_neg = min(capacity - n_pos, neg.size)
    n_pos = capacity - n_neg  # refill with positives if negatives run out
    first = rng.permutation(np.concatenate([pos[:n_pos], neg[:n_neg]]))
    second = rng.permutation(np.concatenate([pos[n_pos:], neg[n_neg:]]))
    shards = []
    for k in range(half):
        shards.append(np.sort(first[k::half]))
    for k in range(half):
        shards.append(np.sort(second[k::half]))
    return PartitionPlan(kind, tuple(shards))


def _shard(plan: PartitionPlan, k: int) -> np.ndarray:
    if not 0 <= k < plan.p:
        raise IndexError(f"worker {k} out of range for p={plan.p}")
    return plan.shards[k]


def _mean_h_grad(spec, dataset, w):
    return mean_smooth_gradient(spec, dataset, w) / dataset.n


def correction_vector(spec: ModelSpec, dataset: Dataset, plan: PartitionPlan, k: int,
                      a: np.ndarray, full_grad: np.ndarray | None = None) -> np.ndarray:
    """G_k(a) = grad F(a) - grad F_k(a); the lambda1 * a terms cancel."""
    shard = _shard(plan, k)
    if full_grad is None:
        full_grad = _mean_h_grad(spec, dataset, a)
    local = mean_smooth_gradient(spec, dataset, a, shard) / len(shard)
    return full_grad - local


def local_objective_value(spec: ModelSpec, dataset: Dataset, plan: PartitionPlan, k: int,
                          w: np.ndarray, a: np.ndarray,
                          full_grad: np.ndarray | None = None,
                          correction: np.ndarray | None = None) -> float:
    """P_k(w; a) = F_k(w) + G_k(a)^T w + lambda2 ||w||_1."""
    shard = _shard(plan, k)
    if correction is None:
        correction = correction_vector(spec, dataset, plan, k, a, full_grad)
    return (smooth_loss_mean(spec, dataset, w, shard) + 0.5 * spec.lambda1 * float(w @ w)
            + float(correction @ w) + spec.lambda2 * float(np.abs(w).sum()))


def _mean_smoothness(spec: ModelSpec, dataset: Dataset, shard: np.ndarray) -> float:
    X = dataset.csr[shard]
    if X.shape[1] <= 2000:
        sigma = np.linalg.norm(X.toarray(), 2)
    else:
        from scipy.sparse.linalg import svds
        sigma = svds(X, k=1, return_singular_vectors=False)[0] * 1.001
    return spec.lambda1 + spec.curvature * sigma ** 2 / len(shard)


def solve_local_subproblem(spec: ModelSpec, dataset: Dataset, plan: PartitionPlan, k: int,
                           a: np.ndarray, tol: float, full_grad: np.ndarray | None = None,
                           max_iter: int = 200_000, step: float | None = None) -> np.ndarray:
    """argmin_w P_k(w; a) by proximal gradient descent warm-started at ``a``.

    Stops when ||w - prox(w - step * grad)||_inf <= tol. The default step
    is 1 / L_k with L_k the smoothness of the shard-mean loss.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    shard = _shard(plan, k)
    a = np.asarray(a, dtype=np.float64)
    corr = correction_vector(spec, dataset, plan, k, a, full_grad)
    if step is None:
        step = 1.0 / _mean_smoothness(spec, dataset, shard)
    thr = step * spec.lambda2
    size = len(shard)
    w = a.copy()
    best, best_res = w, math.inf
    for _ in range(max_iter):
        grad = (mean_smooth_gradient(spec, dataset, w, shard) / size
                + spec.lambda1 * w + corr)
        nxt = soft_threshold(w - step * grad, thr)
        res = float(np.max(np.abs(nxt - w)))
        if res < best_res:
            best, best_res = w, res
        if res <= tol:
            return w
        w = nxt
    raise SubproblemError(f"local subproblem {k} stalled at residual {best_res:.3g}",
                          best, best_res)


@dataclass
class GapReport:
    anchor: np.ndarray
    gap: float
    local_optima: list
    reference_objective: float
    distance_sq: float
    tol: float

    @property
    def ratio(self) -> float:
        """gap / ||a - w*||^2 (nan at a = w*)."""
        return self.gap / self.distance_sq if self.distance_sq > 0 else math.nan

    CSV_HEADER = ("anchor_norm", "anchor_dist", "gap", "gamma_ratio", "local_optima")

    def csv_row(self) -> list:
        return [repr(float(np.linalg.norm(self.anchor))), repr(math.sqrt(self.distance_sq)),
                repr(self.gap), repr(self.ratio), ";".join(repr(v) for v in self.local_optima)]


def local_global_gap(spec: ModelSpec, dataset: Dataset, plan: PartitionPlan, a: np.ndarray,
                     w_star: np.ndarray, tol: float) -> GapReport:
    """l(a) = P(w*) - 1/p sum_k min_w P_k(w; a)."""
    a = np.asarray(a, dtype=np.float64)
    fg = _mean_h_grad(spec, dataset, a)
    optima = []
    for k in range(plan.p):
        wk = solve_local_subproblem(spec, dataset, plan, k, a, tol, fg)
        optima.append(local_objective_value(spec, dataset, plan, k, wk, a, fg))
    ref = evaluate_objective(spec, dataset, w_star)
    gap = ref - float(np.mean(optima))
    diff = a - w_star
    return GapReport(a, gap, optima, ref, float(diff @ diff), tol)


def sample_anchors(w_star: np.ndarray, n_samples: int, r_min: float, r_max: float,
                   seed: int) -> list[np.ndarray]:
    """Anchors w* + rho * direction with uniform direction and rho in [r_min, r_max]."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_samples):
        v = rng.standard_normal(len(w_star))
        v /= np.linalg.norm(v)
        out.append(w_star + rng.uniform(r_min, r_max) * v)
    return out


def gamma_from_reports(reports: list[GapReport], epsilon: float) -> float:
    """max gap/dist^2 over anchors with dist^2 >= epsilon (0 if none)."""
    ratios = [r.ratio for r in reports if r.distance_sq >= epsilon and r.distance_sq > 0]
    return max(ratios, default=0.0)


def estimate_gamma(spec: ModelSpec, dataset: Dataset, plan: PartitionPlan, epsilon: float,
                   w_star: np.ndarray, tol: float, n_samples: int = 64,
                   radius: float | None = None, seed: int = 0,
                   return_reports: bool = False):
    """Monte-Carlo lower bound on sup_{||a-w*||^2 >= eps} l(a) / ||a-w*||^2.

    Anchors are drawn on the shell sqrt(eps) <= ||a - w*|| <= radius; the
    default radius is 10 * max(sqrt(eps), ||w*|| + 1).
    """
    if not epsilon > 0 or n_samples < 1:
        raise ValueError("epsilon must be positive and n_samples >= 1")
    r_min = math.sqrt(epsilon)
    if radius is None:
        radius = 10.0 * max(r_min, float(np.linalg.norm(w_star)) + 1.0)
    if radius < r_min:
        raise ValueError("radius^2 must be >= epsilon")
    anchors = sample_anchors(w_star, n_samples, r_min, radius, seed)
    reports = [local_global_gap(spec, dataset, plan, a, w_star, tol) for a in anchors]
    gamma = gamma_from_reports(reports, epsilon)
    return (gamma, reports) if return_reports else gamma


def quadratic_gap_1d(m, b, a: float) -> tuple[float, float]:
    """Exact local-global gap for 1-D quadratics phi_k = m_k w^2 / 2 + b_k w and R = |w|.

    Returns ``(gap, gamma_bound)`` with
    gamma_bound = 1/p sum_k (mean(m) - m_k)^2 / m_k, so that
    gap <= gamma_bound * (a - w*)^2.
    """
    m_k = np.asarray(m, dtype=np.float64)
    b_k = np.asarray(b, dtype=np.float64)
    if m_k.shape != b_k.shape or m_k.ndim != 1 or m_k.size == 0:
        raise ValueError("m and b must be equal-length 1-D sequences")
    if np.any(m_k <= 0):
        raise ValueError("all m_k must be positive")
    mm, bb = float(m_k.mean()), float(b_k.mean())
    if bb < -1:
        p_star = -(bb + 1) ** 2 / (2 * mm)
    elif bb > 1:
        p_star = -(bb - 1) ** 2 / (2 * mm)
    else:
        p_star = 0.0
    # P_k(w; a) = m_k w^2 / 2 + e_k w + |w| with e_k = (m - m_k) a + b
    e = (mm - m_k) * a + bb
    local = np.where(e < -1, -(e + 1) ** 2 / (2 * m_k),
                     np.where(e > 1, -(e - 1) ** 2 / (2 * m_k), 0.0))
    gap = p_star - float(local.mean())
    gamma = float(np.mean((mm - m_k) ** 2 / m_k))
    return gap, gamma


def quadratic_optimum_1d(m, b) -> float:
    mm, bb = float(np.mean(m)), float(np.mean(b))
    if bb < -1:
        return -(bb + 1) / mm
    if bb > 1:
        return -(bb - 1) / mm
    return 0.0
