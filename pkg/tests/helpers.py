"""Shared oracles and corpora for the test suite."""
import math

import numpy as np

from pscope.lazy_recovery import BRANCHES, GeomSequences, phase_length, recovery_branch
from pscope.objective import prox_l1


def dense_recovery(u, z, lambda1, lambda2, eta, gap):
    """Oracle: iterate the scalar proximal step ``gap`` times."""
    r = 1.0 - lambda1 * eta
    for _ in range(gap):
        u = prox_l1(r * u - eta * z, eta * lambda2)
    return u


def linear_scan_q0(u, eta_c, seq, cap):
    q = 0
    while q < cap and seq.alpha(q + 1) * eta_c <= u:
        q += 1
    return q


def _z_for(family, lam2, rng):
    if family == "1":
        return rng.uniform(-lam2, lam2) if lam2 > 0 else None
    if family == "2":
        return -lam2
    if family == "3":
        return lam2
    off = rng.uniform(1e-6, 2.0) * rng.choice([0.01, 0.1, 1.0])
    return lam2 + off if family == "4" else -lam2 - off


def _phase_params(branch, u, z, lam2):
    """(|u|, c) for the shrink phase the branch starts with, or None."""
    if branch in ("1a", "4a-i", "4a-ii", "4a-iii", "4a-iv") or (branch == "3" and u > 0):
        return abs(u), z + lam2
    if branch in ("1c", "5b-i", "5b-ii", "5b-iii", "5b-iv") or (branch == "2" and u < 0):
        return abs(u), -(z - lam2)
    return None


def recovery_corpus(size=10_000, seed=2024, max_gap=200):
    """Stratified (u, z, lambda1, lambda2, eta, gap, branch) tuples.

    Targets every branch label evenly; z hits the exact values +-lambda2,
    and u is drawn both inside shrink phases and exactly on the
    alpha_q * eta * c boundaries.
    """
    rng = np.random.default_rng(seed)
    out = []
    targets = list(BRANCHES)
    while len(out) < size:
        target = targets[len(out) % len(targets)]
        family = target[0]
        for _ in range(1000):
            eta = 10 ** rng.uniform(-3, 0)
            if rng.random() < 0.3:
                lam1 = 0.0
            elif rng.random() < 0.5:
                lam1 = 10 ** rng.uniform(-8, math.log10(0.5 / eta))
            else:
                lam1 = rng.uniform(1e-8, 0.5 / eta)
            lam2 = 0.0 if rng.random() < 0.05 and family in "2345" else rng.uniform(0, 2)
            z = _z_for(family, lam2, rng)
            if z is None:
                continue
            seq = GeomSequences(1.0 - lam1 * eta)
            sign = {"a": 1.0, "b": 0.0, "c": -1.0}.get(target[1:2], rng.choice([1.0, -1.0]))
            if target in ("4b", "5a"):
                sign = -1.0 if target == "4b" else 1.0
            if target.startswith("4a"):
                sign = 1.0
            if target.startswith("5b"):
                sign = -1.0
            mag = abs(rng.standard_normal()) * 10 ** rng.uniform(-3, 1)
            if family == "1":
                c = z + lam2 if sign > 0 else lam2 - z
            elif family in "45":
                c = abs(z) + lam2
            else:
                c = 2 * lam2
            if rng.random() < 0.15 and eta * c > 0:
                # exactly on a phase boundary
                q = int(rng.integers(0, 60))
                edge = seq.alpha(q) * eta * c
                if 0 < edge < 50:
                    mag = edge
            u = sign * mag
            if target == "1b":
                u = 0.0
            if eta * c > 0 and u != 0:
                q0 = phase_length(abs(u), eta * c, seq)
            else:
                q0 = math.inf
            sub = target.split("-")[1] if "-" in target else None
            if sub == "i":
                if q0 < 1:
                    continue
                gap = int(rng.integers(1, min(q0, max_gap) + 1))
            elif sub in ("ii", "iv"):
                if q0 >= max_gap:
                    continue
                gap = int(rng.integers(q0 + 1, max_gap + 1))
            elif sub == "iii":
                if q0 >= max_gap:
                    continue
                gap = q0 + 1
            else:
                gap = int(rng.integers(1, max_gap + 1))
            if recovery_branch(u, z, lam1, lam2, eta, gap) == target:
                out.append((u, z, lam1, lam2, eta, gap, target))
                break
        else:
            raise RuntimeError(f"could not draw a case for branch {target}")
    return out


def corpus_phase_cases(corpus):
    """Tuples (|u|, eta*c, seq) for corpus entries that start in a shrink phase."""
    for u, z, lam1, lam2, eta, gap, branch in corpus:
        pp = _phase_params(branch, u, z, lam2)
        if pp is None or pp[1] <= 0:
            continue
        yield pp[0], eta * pp[1], GeomSequences(1.0 - lam1 * eta)


def random_sparse_shard(rng, n, d, density):
    """Random CSR rows with every row nonempty."""
    from scipy import sparse

    from pscope.sparse_data import Dataset
    X = sparse.random(n, d, density=density, format="lil", random_state=rng,
                      data_rvs=rng.standard_normal)
    for i in range(n):
        if X[i].nnz == 0:
            X[i, int(rng.integers(d))] = rng.standard_normal()
    X = X.tocsr()
    X.sort_indices()
    return X


def _min_1d(f, scale):
    """Numeric min of a convex 1-D function with a possible kink at 0."""
    from scipy.optimize import minimize_scalar
    best = f(0.0)
    for lo, hi in ((-scale, 0.0), (0.0, scale)):
        res = minimize_scalar(f, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-13, "maxiter": 2000})
        best = min(best, res.fun)
    return best


def numeric_quadratic_gap(m, b, a):
    """Oracle for the 1-D quadratic local-global gap, by bounded scalar minimization.

    phi_k(w) = m_k w^2 / 2 + b_k w, R(w) = |w|; local objectives carry the
    linear correction (mean(m) - m_k) * a.
    """
    m, b = np.asarray(m, float), np.asarray(b, float)
    mm, bb = m.mean(), b.mean()
    scale = (np.abs(b).max() + np.abs(mm - m).max() * abs(a) + 2.0) / m.min() + 1.0
    p_star = _min_1d(lambda w: 0.5 * mm * w * w + bb * w + abs(w), scale)
    local = [_min_1d(lambda w, mk=mk, e=(mm - mk) * a + bb: 0.5 * mk * w * w + e * w + abs(w),
                     scale) for mk in m]
    return p_star - float(np.mean(local))
