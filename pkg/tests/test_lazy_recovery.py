import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import (corpus_phase_cases, dense_recovery, linear_scan_q0, random_sparse_shard,
                     recovery_corpus)
from pscope.lazy_recovery import (BRANCHES, GeomSequences, lazy_worker_epoch, phase_length,
                                  recover_coordinate, recovery_branch)
from pscope.objective import ModelSpec
from pscope.solver import dense_worker_epoch
from pscope.sparse_data import Dataset


@pytest.fixture(scope="module")
def corpus():
    return recovery_corpus(size=3000, seed=7)


# worked values, each also confirmed by iterating the dense step
@pytest.mark.parametrize("u, z, gap, expected, branch", [
    (0.35, 0.0, 2, 0.15, "1a"),
    (0.35, 0.0, 5, 0.0, "1a"),
    (-0.1, 2.0, 3, -0.4, "4b"),
])
def test_recovery_examples(u, z, gap, expected, branch):
    assert dense_recovery(u, z, 0.0, 1.0, 0.1, gap) == pytest.approx(expected, abs=1e-15)
    assert recover_coordinate(u, z, 0.0, 1.0, 0.1, gap) == pytest.approx(expected, abs=1e-15)
    assert recovery_branch(u, z, 0.0, 1.0, 0.1, gap) == branch


@given(st.floats(-10, 10), st.floats(-5, 5), st.floats(0, 0.9), st.floats(0, 2),
       st.floats(1e-3, 1))
def test_gap_zero_is_identity(u, z, l1eta, lam2, eta):
    assert recover_coordinate(u, z, l1eta / eta, lam2, eta, 0) == u


@pytest.mark.parametrize("bad", [
    dict(eta=0.0), dict(lambda2=-1.0), dict(lambda1=20.0), dict(gap=-1), dict(lambda1=-0.1),
])
def test_recovery_preconditions(bad):
    args = dict(u=1.0, z=0.1, lambda1=0.1, lambda2=0.5, eta=0.1, gap=3)
    args.update(bad)
    with pytest.raises(ValueError):
        recover_coordinate(**args)


def test_geometric_sequences_closed_form_vs_sum():
    for r in [1.0, 1 - 1e-11, 0.999, 0.9, 0.5]:
        seq = GeomSequences(r)
        beta = 0.0
        for q in range(1, 120):
            beta += r ** (q - 1)
            assert seq.beta(q) == pytest.approx(beta, rel=1e-11)
            assert seq.alpha(q) == pytest.approx(beta / r ** q, rel=1e-11)
        assert seq.alpha(0) == 0.0
        assert all(seq.alpha(q + 1) > seq.alpha(q) for q in range(50))
    assert GeomSequences(1.0).alpha(7) == GeomSequences(1.0).beta(7) == 7.0


def test_corpus_matches_dense_iteration(corpus):
    worst = max(abs(recover_coordinate(*c[:6]) - dense_recovery(*c[:6])) for c in corpus)
    assert worst <= 1e-10


def test_corpus_covers_every_branch(corpus):
    hits = {b: 0 for b in BRANCHES}
    for c in corpus:
        hits[recovery_branch(*c[:6])] += 1
    assert min(hits.values()) >= 50, hits


def test_phase_length_matches_linear_scan(corpus):
    cap = 5000
    for u, eta_c, seq in corpus_phase_cases(corpus):
        assert min(phase_length(u, eta_c, seq), cap) == linear_scan_q0(u, eta_c, seq, cap)


def test_case_1c_decay_exponent_follows_oracle():
    # u < 0 with |z| < lambda2: the value after g <= q0 steps decays with r^g
    u, z, lam1, lam2, eta = -2.0, 0.1, 0.5, 0.3, 0.2
    for gap in range(1, 6):
        assert recover_coordinate(u, z, lam1, lam2, eta, gap) == pytest.approx(
            dense_recovery(u, z, lam1, lam2, eta, gap), abs=1e-14)


def test_case_5b_crossing_direction_follows_oracle():
    # u < 0, z < -lambda2 and a small |u|: the coordinate jumps straight to positive
    u, z, lam1, lam2, eta = -0.05, -2.0, 0.0, 0.5, 0.1
    assert recovery_branch(u, z, lam1, lam2, eta, 4) == "5b-ii"
    assert recover_coordinate(u, z, lam1, lam2, eta, 4) == pytest.approx(
        dense_recovery(u, z, lam1, lam2, eta, 4), abs=1e-15)


def _shard_dataset(rng, n, d, density, task):
    X = random_sparse_shard(rng, n, d, density)
    if task == "classification":
        y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    else:
        y = rng.standard_normal(n)
    return Dataset(X.indptr, X.indices, X.data, y, d)


def _z_straddling(rng, d, lam2):
    """Full-gradient vector with entries on both sides of +-lambda2, some exactly equal."""
    z = lam2 * rng.uniform(-2.5, 2.5, d)
    pick = rng.random(d)
    z[pick < 0.05] = lam2
    z[(pick >= 0.05) & (pick < 0.1)] = -lam2
    return z


@pytest.mark.parametrize("loss, lam1", [("squared", 0.0), ("logistic", 1e-3), ("logistic", 0.0),
                                        ("squared", 0.05)])
def test_lazy_epoch_matches_dense(loss, lam1):
    rng = np.random.default_rng(11)
    task = "classification" if loss == "logistic" else "regression"
    ds = _shard_dataset(rng, 200, 300, 0.02, task)
    spec = ModelSpec(loss, lam1, 0.05)
    shard = np.arange(0, 200, 2)
    w_t = rng.standard_normal(300) * (rng.random(300) < 0.5)
    z = _z_straddling(rng, 300, spec.lambda2)
    u_dense, touches_dense = dense_worker_epoch(ds, shard, spec, z, w_t, 0.3, 150,
                                                np.random.default_rng(5))
    u_lazy, touches_lazy = lazy_worker_epoch(ds, shard, spec, z, w_t, 0.3, 150,
                                             np.random.default_rng(5))
    assert np.max(np.abs(u_dense - u_lazy)) <= 1e-9
    assert touches_dense == 150 * 300
    assert touches_lazy < touches_dense / 5


def test_lazy_epoch_dense_rows_bitwise():
    rng = np.random.default_rng(3)
    ds = Dataset.from_dense(rng.standard_normal((40, 6)), rng.standard_normal(40))
    spec = ModelSpec("squared", 0.01, 0.2)
    w_t = rng.standard_normal(6)
    z = rng.standard_normal(6) * 0.3
    a, _ = dense_worker_epoch(ds, np.arange(40), spec, z, w_t, 0.05, 60, np.random.default_rng(1))
    b, _ = lazy_worker_epoch(ds, np.arange(40), spec, z, w_t, 0.05, 60, np.random.default_rng(1))
    assert np.array_equal(a, b)


def test_lazy_epoch_single_step():
    rng = np.random.default_rng(9)
    ds = _shard_dataset(rng, 30, 50, 0.05, "regression")
    spec = ModelSpec("squared", 0.1, 0.3)
    z = _z_straddling(rng, 50, 0.3)
    w_t = rng.standard_normal(50)
    a, _ = dense_worker_epoch(ds, np.arange(30), spec, z, w_t, 0.4, 1, np.random.default_rng(2))
    b, _ = lazy_worker_epoch(ds, np.arange(30), spec, z, w_t, 0.4, 1, np.random.default_rng(2))
    assert np.max(np.abs(a - b)) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.0, 1e-4, 0.3]), st.floats(0.0, 0.5))
def test_lazy_epoch_equivalence_property(seed, lam1, lam2):
    rng = np.random.default_rng(seed)
    ds = _shard_dataset(rng, 40, 80, 0.05, "regression")
    spec = ModelSpec("squared", lam1, lam2)
    z = _z_straddling(rng, 80, lam2) if lam2 > 0 else rng.standard_normal(80) * 0.1
    w_t = rng.standard_normal(80)
    a, _ = dense_worker_epoch(ds, np.arange(40), spec, z, w_t, 0.2, 60, np.random.default_rng(seed))
    b, t = lazy_worker_epoch(ds, np.arange(40), spec, z, w_t, 0.2, 60, np.random.default_rng(seed))
    assert np.max(np.abs(a - b)) <= 1e-9
    nnz = sum(len(ds.row(i)[0]) for i in range(40))
    assert t <= 60 * max(len(ds.row(i)[0]) for i in range(40)) + 80
    assert nnz > 0


def test_touch_bound_matches_sampled_support():
    rng = np.random.default_rng(4)
    ds = _shard_dataset(rng, 100, 500, 0.01, "regression")
    spec = ModelSpec("squared", 0.0, 0.1)
    z = _z_straddling(rng, 500, 0.1)
    gen = np.random.default_rng(8)
    samples = np.arange(100)[np.random.default_rng(8).integers(0, 100, size=80)]
    _, touches = lazy_worker_epoch(ds, np.arange(100), spec, z, np.zeros(500), 0.1, 80, gen)
    assert touches == sum(len(ds.row(s)[0]) for s in samples) + 500
