"""pSCOPE training, its serial proximal-SVRG special case, proximal GD
and reference solutions."""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import runtime
from .lazy_recovery import draw_samples, lazy_worker_epoch
from .objective import (ModelSpec, evaluate_objective, full_gradient, mean_smooth_gradient,
                        prox_grad_residual, scalar_loss_derivative, smoothness_bound,
                        soft_threshold)
from .partition import PartitionPlan
from .sparse_data import Dataset, _dot

log = logging.getLogger(__name__)

TRACE_HEADER = ("outer_iter", "objective", "suboptimality", "elapsed_s",
                "comm_bytes", "coord_touches")


class SolverError(RuntimeError):
    """Numerical failure or non-convergence; carries the best iterate seen."""

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


@dataclass(frozen=True)
class SolverConfig:
    eta: float
    inner_m: int
    outer_t: int = 30
    workers: int = 1
    seed: int = 0
    lazy: bool = False
    record_trace: bool = True

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.inner_m < 1 or self.outer_t < 1 or self.workers < 1:
            raise ValueError("inner_m, outer_t and workers must be >= 1")

    def check(self, spec: ModelSpec) -> None:
        if not self.eta * spec.lambda1 < 1:
            raise ValueError(f"eta * lambda1 = {self.eta * spec.lambda1} must be < 1")

    @classmethod
    def default(cls, dataset: Dataset, spec: ModelSpec, workers: int = 1, **overrides):
        """eta = 0.1 / L_hat, M = 2 * ceil(n / p), T = 30."""
        eta = 0.1 / smoothness_bound(spec, dataset)
        inner_m = 2 * math.ceil(dataset.n / workers)
        kw = dict(eta=eta, inner_m=inner_m, workers=workers)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)


@dataclass
class TrainTrace:
    objective: list = field(default_factory=list)
    suboptimality: list = field(default_factory=list)
    elapsed_s: list = field(default_factory=list)
    comm_bytes: list = field(default_factory=list)
    coord_touches: list = field(default_factory=list)

    def append(self, objective, suboptimality, elapsed, comm, touches):
        self.objective.append(objective)
        self.suboptimality.append(suboptimality)
        self.elapsed_s.append(elapsed)
        self.comm_bytes.append(comm)
        self.coord_touches.append(touches)

    def __len__(self):
        return len(self.objective)

    def rows(self, with_time: bool = True):
        for t in range(len(self)):
            row = [t, self.objective[t], self.suboptimality[t],
                   self.elapsed_s[t] if with_time else None,
                   self.comm_bytes[t], self.coord_touches[t]]
            yield tuple(row)

    def same_numbers(self, other: "TrainTrace") -> bool:
        """Equality of every column except wall time."""
        return list(self.rows(False)) == list(other.rows(False))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(TRACE_HEADER)
        for t, obj, sub, el, comm, tc in self.rows():
            wr.writerow([t, repr(obj), "" if sub is None else repr(sub),
                         f"{el:.6f}", comm, tc])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def worker_rng(seed: int, worker_id: int) -> np.random.Generator:
    """Independent per-worker stream, a pure function of (seed, worker_id)."""
    return np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), worker_id]))


def dense_worker_epoch(dataset: Dataset, shard: np.ndarray, spec: ModelSpec,
                       z: np.ndarray, w_t: np.ndarray, eta: float, M: int,
                       rng: np.random.Generator, on_sample=None) -> tuple[np.ndarray, int]:
    """M variance-reduced proximal steps on the shard, updating all d coordinates.

    The L2 part enters as the (1 - eta*lambda1) scaling, so ``v`` only
    carries h-part gradients: v = (h'(x_s.u) - h'(x_s.w_t)) x_s + z.
    """
    r = 1.0 - eta * spec.lambda1
    thr = eta * spec.lambda2
    u = np.array(w_t, dtype=np.float64)
    labels = dataset.labels
    for s in draw_samples(rng, shard, M):
        if on_sample is not None:
            on_sample(s)
        idx, vals = dataset.row(s)
        y = labels[s]
        g = (scalar_loss_derivative(spec, _dot(idx, vals, u), y)
             - scalar_loss_derivative(spec, _dot(idx, vals, w_t), y))
        v = z.copy()
        v[idx] += g * vals
        u = soft_threshold(r * u - eta * v, thr)
    return u, M * dataset.dim


class Worker:
    """State owned by worker k: its shard, RNG stream and round counter."""

    def __init__(self, k: int, dataset: Dataset, shard: np.ndarray, spec: ModelSpec,
                 config: SolverConfig, on_sample=None):
        self.k = k
        self.dataset = dataset
        self.shard = np.asarray(shard, dtype=np.int64)
        self.spec = spec
        self.config = config
        self.rng = worker_rng(config.seed, k)
        self.round = -1
        self.w_t = None
        self.on_sample = on_sample

    def grad_sum(self, t: int, w: np.ndarray) -> np.ndarray:
        if t != self.round + 1:
            raise runtime.ProtocolError(f"worker {self.k}: round {t} after {self.round}")
        self.round = t
        self.w_t = np.array(w, dtype=np.float64)
        return mean_smooth_gradient(self.spec, self.dataset, self.w_t, self.shard)

    def local_epoch(self, t: int, z: np.ndarray) -> tuple[np.ndarray, int]:
        if t != self.round:
            raise runtime.ProtocolError(f"worker {self.k}: epoch for round {t} in round {self.round}")
        cfg = self.config
        if cfg.lazy:
            u, touches = lazy_worker_epoch(self.dataset, self.shard, self.spec, z, self.w_t,
                                           cfg.eta, cfg.inner_m, self.rng)
        else:
            u, touches = dense_worker_epoch(self.dataset, self.shard, self.spec, z, self.w_t,
                                            cfg.eta, cfg.inner_m, self.rng, self.on_sample)
        if not np.all(np.isfinite(u)):
            raise SolverError(f"non-finite iterate in outer iteration {t}, worker {self.k}")
        return u, touches


def _record(trace, spec, dataset, w, reference, t0, comm, touches):
    obj = evaluate_objective(spec, dataset, w)
    sub = None if reference is None else obj - reference
    trace.append(obj, sub, time.perf_counter() - t0, comm, touches)


def _reference_value(reference):
    if reference is None:
        return None
    if isinstance(reference, tuple):
        return float(reference[1])
    return float(reference)


def _prepare(dataset, spec, config, w0):
    config.check(spec)
    spec.check_labels(dataset)
    if w0 is None:
        w0 = np.zeros(dataset.dim)
    w0 = np.array(w0, dtype=np.float64)
    if w0.shape != (dataset.dim,):
        raise ValueError(f"dimension mismatch: w0 has shape {w0.shape}, dataset.dim={dataset.dim}")
    return w0


def pscope_train(dataset: Dataset, spec: ModelSpec, plan: PartitionPlan,
                 config: SolverConfig, w0=None, reference=None, engine="inproc",
                 on_sample=None):
    """Run pSCOPE for ``config.outer_t`` outer iterations.

    Parameters
    ----------
    reference : float or (w, value), optional
        Optimal objective P(w*); enables the suboptimality column.
    engine : {"inproc", "tcp"} or engine object
        ``"tcp"`` runs the workers as loopback socket peers. An already
        connected engine (e.g. ``TcpEngine.accept``) may be passed directly.
    on_sample : callable, optional
        Called as ``on_sample(k, i)`` for every sampled instance (dense path).

    Returns
    -------
    w : ndarray
    trace : TrainTrace
    """
    if plan.p != config.workers:
        raise ValueError(f"plan has p={plan.p} shards but config.workers={config.workers}")
    w = _prepare(dataset, spec, config, w0)
    ref = _reference_value(reference)

    def hook(k):
        return None if on_sample is None else (lambda i: on_sample(k, i))

    own_engine = isinstance(engine, str)
    if own_engine:
        workers = [Worker(k, dataset, shard, spec, config, hook(k))
                   for k, shard in enumerate(plan.shards)]
        if engine == "inproc":
            engine = runtime.InProcessEngine(workers)
        elif engine == "tcp":
            engine = runtime.TcpEngine.spawn_local(workers, plan.shards, dataset.dim)
        else:
            raise ValueError(f"unknown engine {engine!r}")

    held = sum(plan.sizes())
    trace = TrainTrace()
    t0 = time.perf_counter()
    comm = touches = 0
    try:
        if config.record_trace:
            _record(trace, spec, dataset, w, ref, t0, comm, touches)
        for t in range(config.outer_t):
            res = runtime.run_round(engine, w, t, held)
            if not np.all(np.isfinite(res.w)):
                raise SolverError(f"non-finite average in outer iteration {t}")
            w = res.w
            comm += res.comm_bytes
            touches += res.touches
            if config.record_trace:
                _record(trace, spec, dataset, w, ref, t0, comm, touches)
    finally:
        if own_engine:
            engine.close()
    return w, trace


def prox_svrg_train(dataset: Dataset, spec: ModelSpec, config: SolverConfig, w0=None,
                    reference=None):
    """Serial proximal SVRG: one worker holding all instances.

    Uses worker 0's RNG stream, so it reproduces ``pscope_train`` with a
    single-shard plan exactly. Communication is accounted as in the p = 1
    protocol.
    """
    if config.workers != 1:
        config = replace(config, workers=1)
    w = _prepare(dataset, spec, config, w0)
    ref = _reference_value(reference)
    shard = np.arange(dataset.n)
    rng = worker_rng(config.seed, 0)
    epoch = lazy_worker_epoch if config.lazy else dense_worker_epoch
    trace = TrainTrace()
    t0 = time.perf_counter()
    comm = touches = 0
    if config.record_trace:
        _record(trace, spec, dataset, w, ref, t0, comm, touches)
    for t in range(config.outer_t):
        z = np.zeros(dataset.dim)
        z += mean_smooth_gradient(spec, dataset, w, shard)
        z /= dataset.n
        w, k_touches = epoch(dataset, shard, spec, z, w, config.eta, config.inner_m, rng)
        if not np.all(np.isfinite(w)):
            raise SolverError(f"non-finite iterate in outer iteration {t}, worker 0")
        comm += 4 * dataset.dim * 8
        touches += k_touches
        if config.record_trace:
            _record(trace, spec, dataset, w, ref, t0, comm, touches)
    return w, trace


def pgd_train(dataset: Dataset, spec: ModelSpec, steps: int, eta: float, w0=None) -> np.ndarray:
    """Proximal gradient descent, w <- prox(w - eta * grad F(w))."""
    w = np.zeros(dataset.dim) if w0 is None else np.array(w0, dtype=np.float64)
    if w.shape != (dataset.dim,):
        raise ValueError("dimension mismatch")
    for t in range(steps):
        w = soft_threshold(w - eta * full_gradient(spec, dataset, w), eta * spec.lambda2)
        if not np.all(np.isfinite(w)):
            raise SolverError(f"non-finite iterate at step {t}")
    return w


def reference_solution(dataset: Dataset, spec: ModelSpec, tol: float, seed: int = 0,
                       max_outer: int = 5000, w0=None):
    """High-accuracy minimizer by proximal SVRG with escalating epoch budgets.

    Stops once ``prox_grad_residual`` with step 1/L_hat is <= ``tol``.
    Returns ``(w, P(w))``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    L = smoothness_bound(spec, dataset)
    step = 1.0 / L
    config = SolverConfig(eta=0.1 / L, inner_m=2 * dataset.n, outer_t=5, seed=seed,
                          record_trace=False)
    w = np.zeros(dataset.dim) if w0 is None else np.array(w0, dtype=np.float64)
    best, best_res = w, prox_grad_residual(spec, dataset, w, step)
    done = 0
    stage = 0
    while best_res > tol:
        if done >= max_outer:
            raise SolverError(f"reference solution did not reach residual {tol:g} "
                              f"(best {best_res:.3g})", best, best_res)
        T = min(config.outer_t * 2 ** stage, max_outer - done)
        # fresh seed per stage so each stage draws new samples
        w, _ = prox_svrg_train(dataset, spec, replace(config, outer_t=T, seed=seed + stage), w)
        done += T
        stage += 1
        res = prox_grad_residual(spec, dataset, w, step)
        log.debug("reference stage %d: %d epochs, residual %.3g", stage, done, res)
        if res < best_res:
            best, best_res = w, res
    return best, evaluate_objective(spec, dataset, best)
