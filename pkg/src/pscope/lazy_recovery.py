"""Closed-form fast-forwarding of untouched coordinates.

Between two touches of coordinate ``j`` the inner update reduces to the
scalar map

    u <- soft((1 - lambda1*eta) * u - eta * z_j, eta * lambda2)

with ``z_j`` fixed for the whole epoch. ``recover_coordinate`` applies
``gap`` steps of that map in O(1); ``lazy_worker_epoch`` uses it to run a
worker epoch with O(|C_s|) work per inner iteration.

Writing ``r = 1 - lambda1*eta``, ``c_plus = z + lambda2`` and
``c_minus = z - lambda2``, one step maps ``u`` to ``r*u - eta*c_plus`` when
that is >= 0, to ``r*u - eta*c_minus`` when that is <= 0 and to 0 otherwise.
On a run of steps staying on one side the iterate is affine in closed form:
``u_q = r**q * u - eta * c * beta_q = r**q * (u - eta * c * alpha_q)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .objective import ModelSpec, scalar_loss_derivative, soft_threshold
from .sparse_data import Dataset, _dot

BRANCHES = ("1a", "1b", "1c", "2", "3",
            "4a-i", "4a-ii", "4a-iii", "4a-iv", "4b",
            "5a", "5b-i", "5b-ii", "5b-iii", "5b-iv")


@dataclass(frozen=True)
class GeomSequences:
    """beta_q = sum_{i<q} r^i and alpha_q = beta_q / r^q for r = 1 - lambda1*eta."""

    r: float

    def __post_init__(self):
        if not 0.0 < self.r <= 1.0:
            raise ValueError("r must lie in (0, 1]")

    @property
    def delta(self) -> float:
        return 1.0 - self.r

    @property
    def log_inv_r(self) -> float:
        return -math.log1p(-self.delta)

    def power(self, q: int) -> float:
        if self.delta == 0.0:
            return 1.0
        return math.exp(-q * self.log_inv_r)

    def beta(self, q: int) -> float:
        if q < 1:
            if q == 0:
                return 0.0
            raise ValueError("beta_q needs q >= 0")
        if self.delta == 0.0:
            return float(q)
        return -math.expm1(-q * self.log_inv_r) / self.delta

    def alpha(self, q: int) -> float:
        if q < 0:
            raise ValueError("alpha_q needs q >= 0")
        if self.delta == 0.0:
            return float(q)
        x = q * self.log_inv_r
        if x > 700.0:
            return math.inf
        return math.expm1(x) / self.delta

    def advance(self, u: float, eta_c: float, q: int) -> float:
        """u_q = r^q u - eta*c*beta_q for q steps on one affine branch."""
        return self.power(q) * u - eta_c * self.beta(q)


def phase_length(u: float, eta_c: float, seq: GeomSequences) -> float:
    """Largest q with alpha_q * eta_c <= u (u >= 0, eta_c > 0).

    This is the number of steps a positive coordinate keeps shrinking
    along ``u <- r*u - eta_c`` before it would cross zero. Returns
    ``math.inf`` when ``eta_c == 0``.
    """
    if eta_c <= 0.0:
        if eta_c == 0.0:
            return math.inf
        raise ValueError("eta_c must be nonnegative")
    with np.errstate(over="ignore"):
        if seq.delta == 0.0:
            q = u / eta_c
        else:
            q = math.log1p(u * seq.delta / eta_c) / seq.log_inv_r
    if not q < 2.0 ** 52:
        # longer than any representable gap (e.g. subnormal eta_c)
        return math.inf
    q = max(math.floor(q), 0)
    # floating floor may be off by one at the boundaries
    while q > 0 and seq.alpha(q) * eta_c > u:
        q -= 1
    while seq.alpha(q + 1) * eta_c <= u:
        q += 1
    return q


def _shrink(u: float, c: float, eta: float, seq: GeomSequences, gap: int):
    """Case 1(a) dynamics: u > 0 decays by eta*c per step and sticks at 0."""
    eta_c = eta * c
    if eta_c == 0.0:
        return seq.power(gap) * u
    if seq.alpha(gap) * eta_c <= u:
        return seq.advance(u, eta_c, gap)
    return 0.0


def _cross(u: float, c_plus: float, c_minus: float, eta: float,
           seq: GeomSequences, gap: int):
    """Case 4(a) dynamics: u > 0, c_minus > 0. Returns (value, sub-branch)."""
    q0 = phase_length(u, eta * c_plus, seq)
    if gap <= q0:
        return seq.advance(u, eta * c_plus, gap), "i"
    v = seq.advance(u, eta * c_plus, q0)
    if seq.r * v <= eta * c_minus:
        # jumps straight past the dead zone
        return seq.advance(v, eta * c_minus, gap - q0), "ii"
    if gap == q0 + 1:
        return 0.0, "iii"
    return -eta * c_minus * seq.beta(gap - q0 - 1), "iv"


def _check(lambda1, lambda2, eta, gap):
    if not eta > 0:
        raise ValueError("eta must be positive")
    if not lambda1 >= 0 or not lambda2 >= 0:
        raise ValueError("lambda1 and lambda2 must be nonnegative")
    if not eta * lambda1 < 1:
        raise ValueError("eta * lambda1 must be < 1")
    if gap < 0:
        raise ValueError("gap must be nonnegative")


def _recover(u: float, z: float, lambda1: float, lambda2: float, eta: float,
             gap: int) -> tuple[float, str]:
    seq = GeomSequences(1.0 - lambda1 * eta)
    c_plus, c_minus = z + lambda2, z - lambda2
    if abs(z) < lambda2:
        if u > 0:
            return _shrink(u, c_plus, eta, seq, gap), "1a"
        if u == 0:
            return 0.0, "1b"
        return -_shrink(-u, -c_minus, eta, seq, gap), "1c"
    if z == -lambda2:
        if u >= 0:
            return seq.power(gap) * u, "2"
        return -_shrink(-u, -c_minus, eta, seq, gap), "2"
    if z == lambda2:
        if u <= 0:
            return seq.power(gap) * u, "3"
        return _shrink(u, c_plus, eta, seq, gap), "3"
    if z > lambda2:
        if u > 0:
            value, sub = _cross(u, c_plus, c_minus, eta, seq, gap)
            return value, "4a-" + sub
        return seq.advance(u, eta * c_minus, gap), "4b"
    # z < -lambda2 mirrors z > lambda2
    if u >= 0:
        return seq.advance(u, eta * c_plus, gap), "5a"
    value, sub = _cross(-u, -c_minus, -c_plus, eta, seq, gap)
    return -value, "5b-" + sub


def recover_coordinate(u: float, z: float, lambda1: float, lambda2: float,
                       eta: float, gap: int) -> float:
    """Value of a coordinate after ``gap`` untouched inner iterations.

    Parameters
    ----------
    u : float
        Coordinate value at the last materialized iteration.
    z : float
        The coordinate's full-gradient entry (smooth h-part only).
    lambda1, lambda2 : float
        L2 and L1 weights.
    eta : float
        Learning rate; ``eta * lambda1 < 1``.
    gap : int
        Number of skipped iterations.
    """
    _check(lambda1, lambda2, eta, gap)
    if gap == 0:
        return u
    return _recover(float(u), float(z), lambda1, lambda2, eta, int(gap))[0]


def recovery_branch(u: float, z: float, lambda1: float, lambda2: float,
                    eta: float, gap: int) -> str:
    """Label of the recovery case taken for these inputs (see ``BRANCHES``)."""
    _check(lambda1, lambda2, eta, gap)
    if gap == 0:
        return "identity"
    return _recover(float(u), float(z), lambda1, lambda2, eta, int(gap))[1]


def draw_samples(rng: np.random.Generator, shard: np.ndarray, M: int) -> np.ndarray:
    """M instance ids drawn uniformly with replacement from ``shard``."""
    return shard[rng.integers(0, len(shard), size=M)]


def lazy_worker_epoch(dataset: Dataset, shard: np.ndarray, spec: ModelSpec,
                      z: np.ndarray, w_t: np.ndarray, eta: float, M: int,
                      rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """One worker epoch that only materializes coordinates in C_s.

    Consumes ``rng`` exactly like the dense epoch and returns
    ``(u_M, coordinate_touches)``.
    """
    lam1, lam2 = spec.lambda1, spec.lambda2
    _check(lam1, lam2, eta, 0)
    r = 1.0 - eta * lam1
    thr = eta * lam2
    d = dataset.dim
    u = np.array(w_t, dtype=np.float64)
    last = np.zeros(d, dtype=np.int64)
    touches = 0
    labels = dataset.labels
    for m, s in enumerate(draw_samples(rng, shard, M)):
        idx, vals = dataset.row(s)
        for j in idx:
            gap = m - last[j]
            if gap:
                u[j] = _recover(u[j], z[j], lam1, lam2, eta, int(gap))[0]
        y = labels[s]
        g = (scalar_loss_derivative(spec, _dot(idx, vals, u), y)
             - scalar_loss_derivative(spec, _dot(idx, vals, w_t), y))
        u[idx] = soft_threshold(r * u[idx] - eta * (z[idx] + g * vals), thr)
        last[idx] = m + 1
        touches += idx.size
    for j in np.flatnonzero(last < M):
        u[j] = _recover(u[j], z[j], lam1, lam2, eta, int(M - last[j]))[0]
    touches += d
    return u, touches
