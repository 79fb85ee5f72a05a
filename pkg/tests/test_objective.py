import math

import numpy as np
import pytest
from hypothesis import example, given
from hypothesis import strategies as st

from pscope.objective import (Loss, ModelSpec, evaluate_objective, full_gradient,
                              instance_smooth_grad_scalar, loss_values, mean_smooth_gradient,
                              prox_l1, scalar_loss_derivative, soft_threshold)
from pscope.sparse_data import Dataset, SparseVector, parse_libsvm
from pscope.synth import make_synthetic

SQ = ModelSpec(Loss.SQUARED)
LOG = ModelSpec(Loss.LOGISTIC)


def test_loss_derivative_examples():
    assert scalar_loss_derivative(SQ, 3.0, 1.0) == 2.0
    assert scalar_loss_derivative(LOG, 0.0, 1.0) == -0.5
    big = scalar_loss_derivative(LOG, 1000.0, 1.0)
    assert math.isfinite(big) and abs(big) < 1e-300
    assert scalar_loss_derivative(LOG, -1000.0, 1.0) == -1.0


@pytest.mark.parametrize("u, thr, expected", [(0.5, 0.2, 0.3), (0.1, 0.2, 0.0), (-0.7, 0.0, -0.7)])
def test_prox_l1_examples(u, thr, expected):
    assert prox_l1(u, thr) == pytest.approx(expected, abs=1e-15)


reals = st.floats(-1e6, 1e6)
thresholds = st.floats(0, 1e3)


@example(237571.0, 262146.0, 1.5022914195648127)
@given(reals, reals, thresholds)
def test_prox_nonexpansive(a, b, t):
    # exact in real arithmetic; each shifted output and their difference round once
    ulp = np.spacing(max(abs(a), abs(b), t))
    assert abs(prox_l1(a, t) - prox_l1(b, t)) <= abs(a - b) + 2 * ulp


@given(reals, thresholds)
def test_prox_shrinks_without_sign_flip(u, t):
    v = prox_l1(u, t)
    assert abs(v) <= abs(u)
    assert v * u >= 0


@given(st.lists(reals, min_size=1, max_size=20), thresholds)
def test_soft_threshold_matches_scalar_bitwise(us, t):
    vec = soft_threshold(np.array(us), t)
    assert [float(v) for v in vec] == [prox_l1(u, t) for u in us]


def test_instance_grad_examples():
    x = SparseVector([0], [2.0], 2)
    h = instance_smooth_grad_scalar(SQ, x, np.array([1.0, 0.0]), 1.0)
    assert h == 1.0 and (h * x.to_dense()).tolist() == [2.0, 0.0]
    empty = SparseVector([], [], 2)
    assert (instance_smooth_grad_scalar(SQ, empty, np.ones(2), 1.0) * empty.to_dense() == 0).all()
    assert instance_smooth_grad_scalar(LOG, SparseVector([0], [1.0], 3), np.zeros(3), -1.0) == 0.5


def test_mean_smooth_gradient_examples():
    ds = parse_libsvm("0 1:1")
    assert mean_smooth_gradient(SQ, ds, np.array([2.0])).tolist() == [2.0]
    assert mean_smooth_gradient(SQ, ds, np.array([2.0]), np.array([], dtype=int)).tolist() == [0.0]
    twice = parse_libsvm("0.5 1:1.5\n0.5 1:1.5")
    once = parse_libsvm("0.5 1:1.5")
    w = np.array([0.7])
    assert mean_smooth_gradient(SQ, twice, w)[0] == 2 * mean_smooth_gradient(SQ, once, w)[0]


def test_evaluate_objective_examples():
    ds, _ = make_synthetic(30, 4, seed=3)
    lasso = ModelSpec.lasso(0.3)
    assert evaluate_objective(lasso, ds, np.zeros(4)) == pytest.approx(
        np.sum(ds.labels ** 2) / (2 * ds.n), rel=1e-14)
    X = ds.csr.toarray()
    w = np.array([1.0, -2.0, 0.5, 0.0])
    exact = Dataset.from_dense(X, X @ w)
    assert evaluate_objective(SQ, exact, w) == pytest.approx(0.0, abs=1e-28)
    cls, _ = make_synthetic(25, 4, task="classification", seed=1)
    assert evaluate_objective(ModelSpec.logistic(3.0, 5.0), cls, np.zeros(4)) == pytest.approx(
        math.log(2), rel=1e-15)


def test_logistic_stable_on_separable_margins():
    ds = parse_libsvm("1 1:1000\n-1 1:-1000")
    assert evaluate_objective(LOG, ds, np.array([10.0])) == pytest.approx(0.0, abs=1e-300)
    assert np.isfinite(loss_values(LOG, np.array([-1e5]), np.array([1.0]))).all()


@pytest.mark.parametrize("spec", [ModelSpec(Loss.SQUARED, 0.1, 0.0),
                                  ModelSpec(Loss.LOGISTIC, 0.05, 0.0)])
def test_gradient_finite_differences(spec):
    task = "classification" if spec.loss is Loss.LOGISTIC else "regression"
    ds, _ = make_synthetic(20, 6, density=0.6, task=task, seed=8)
    rng = np.random.default_rng(0)
    for _ in range(5):
        w = rng.standard_normal(6)
        g = full_gradient(spec, ds, w)
        eps = 1e-6
        for j in range(6):
            e = np.zeros(6)
            e[j] = eps
            fd = (evaluate_objective(spec, ds, w + e) - evaluate_objective(spec, ds, w - e)) / (2 * eps)
            assert fd == pytest.approx(g[j], rel=1e-5, abs=1e-8)


@given(st.integers(0, 2**31), st.floats(0, 1), st.sampled_from(["logistic", "squared"]))
def test_objective_convex_along_segments(seed, theta, loss):
    task = "classification" if loss == "logistic" else "regression"
    ds, _ = make_synthetic(15, 5, density=0.5, task=task, seed=seed % 1000)
    spec = ModelSpec(loss, 0.1, 0.2)
    rng = np.random.default_rng(seed)
    a, b = 3 * rng.standard_normal(5), 3 * rng.standard_normal(5)
    mid = evaluate_objective(spec, ds, theta * a + (1 - theta) * b)
    chord = theta * evaluate_objective(spec, ds, a) + (1 - theta) * evaluate_objective(spec, ds, b)
    assert mid <= chord + 1e-12


def test_model_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec(Loss.SQUARED, -1.0, 0.0)
    with pytest.raises(ValueError):
        ModelSpec.logistic(0.1, 0.1).check_labels(parse_libsvm("0.5 1:1"))
