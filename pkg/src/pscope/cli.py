"""Command-line front end: ``pscope {train,gap,effect,synth,worker}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver failure.
Every command writes ``<out>.manifest.json`` next to its CSV output.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import EFFECT_HEADER, partition_effect
from .objective import ModelSpec, evaluate_objective
from .partition import GapReport, SubproblemError, estimate_gamma, local_global_gap, make_partition, parse_kind
from .runtime import EngineError, ProtocolError, TcpEngine, parse_address, serve_worker, shard_hash
from .solver import SolverConfig, SolverError, Worker, prox_svrg_train, pscope_train, reference_solution
from .sparse_data import LibSVMParseError, load_libsvm, save_libsvm
from .synth import make_synthetic

log = logging.getLogger("pscope")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3
GAP_HEADER = ("partition", "epsilon", "anchors", "gamma", "min_gap", "max_gap")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunManifest:
    command: str
    config: dict
    dataset: dict | None
    version: str
    outputs: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"


def artifact_version() -> str:
    """Package version plus the git revision of the source tree, when available."""
    try:
        rev = subprocess.run(["git", "describe", "--always", "--dirty"],
                             cwd=Path(__file__).parent, capture_output=True, text=True,
                             timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _add_model_flags(p):
    p.add_argument("--data", required=True, help="LibSVM file")
    p.add_argument("--model", choices=("logistic", "lasso"), default="logistic",
                   help="logistic: elastic-net logistic regression; lasso: squared loss "
                        "(default: %(default)s)")
    p.add_argument("--lambda1", type=float, default=0.0, help="L2 weight (default: %(default)s)")
    p.add_argument("--lambda2", type=float, default=1e-5, help="L1 weight (default: %(default)s)")


def _add_solver_flags(p):
    p.add_argument("--eta", type=float, default=None,
                   help="learning rate (default: 0.1 / L_hat)")
    p.add_argument("--inner", type=int, default=None,
                   help="inner iterations M per worker (default: 2 * ceil(n / workers))")
    p.add_argument("--outer", type=int, default=30, help="outer iterations T (default: %(default)s)")
    p.add_argument("--workers", type=int, default=1, help="p (default: %(default)s)")
    p.add_argument("--partition", default="uniform",
                   help="uniform | skew:<f> | labelsplit | replicate (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="sampling and partition seed (default: %(default)s)")
    p.add_argument("--lazy", action="store_true", help="sparse lazy-recovery worker epochs")


def _add_output_flags(p, default_out):
    p.add_argument("--out", default=default_out, help="output CSV (default: %(default)s)")
    p.add_argument("--dry-run", action="store_true",
                   help="print the resolved manifest and exit without computing")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pscope", description="Proximal SCOPE distributed sparse learning.")
    parser.add_argument("--version", action="version", version=f"pscope {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    tr = sub.add_parser("train", help="run pSCOPE and write a trace CSV")
    _add_model_flags(tr)
    _add_solver_flags(tr)
    tr.add_argument("--engine", choices=("inproc", "tcp", "serial"), default="inproc",
                    help="inproc: threads; tcp: socket workers; serial: prox-SVRG, needs "
                         "--workers 1 (default: %(default)s)")
    tr.add_argument("--listen", default=None,
                    help="host:port for --engine tcp with external workers; without it the "
                         "workers run as loopback threads")
    tr.add_argument("--ref-tol", type=float, default=None,
                    help="compute a reference solution to this residual and report suboptimality")
    tr.add_argument("--reference", default=None,
                    help="weights CSV of a reference solution (overrides --ref-tol)")
    _add_output_flags(tr, "trace.csv")

    gp = sub.add_parser("gap", help="local-global gap and gamma estimates")
    _add_model_flags(gp)
    gp.add_argument("--workers", type=int, default=4, help="p (default: %(default)s)")
    gp.add_argument("--partition", default="uniform", help="partition kind (default: %(default)s)")
    gp.add_argument("--compare", default=None,
                    help="comma-separated kinds; one output row per kind")
    gp.add_argument("--seed", type=int, default=0, help="(default: %(default)s)")
    gp.add_argument("--epsilon", type=float, default=1e-2,
                    help="squared-distance threshold for gamma (default: %(default)s)")
    gp.add_argument("--samples", type=int, default=64, help="anchors (default: %(default)s)")
    gp.add_argument("--radius", type=float, default=None,
                    help="anchor shell radius (default: 10 * max(sqrt(eps), ||w*|| + 1))")
    gp.add_argument("--anchors-at-optimum", action="store_true",
                    help="evaluate the gap at w* only")
    gp.add_argument("--ref-tol", type=float, default=1e-8,
                    help="residual for w* and the local subproblems (default: %(default)s)")
    gp.add_argument("--reference", default=None, help="weights CSV to use as w*")
    _add_output_flags(gp, "gap.csv")

    ef = sub.add_parser("effect", help="partition-effect study: one training run per kind")
    _add_model_flags(ef)
    _add_solver_flags(ef)
    ef.add_argument("--compare", default="replicate,uniform,skew:0.75,labelsplit",
                    help="comma-separated kinds (default: %(default)s)")
    ef.add_argument("--target", type=float, default=1e-6,
                    help="suboptimality target (default: %(default)s)")
    ef.add_argument("--ref-tol", type=float, default=1e-11, help="(default: %(default)s)")
    ef.add_argument("--reference", default=None)
    _add_output_flags(ef, "effect.csv")

    sy = sub.add_parser("synth", help="write a synthetic LibSVM dataset")
    sy.add_argument("--n", type=int, required=True)
    sy.add_argument("--d", type=int, required=True)
    sy.add_argument("--density", type=float, default=1.0, help="(default: %(default)s)")
    sy.add_argument("--task", choices=("classification", "regression"), default="regression")
    sy.add_argument("--noise", type=float, default=0.1, help="(default: %(default)s)")
    sy.add_argument("--seed", type=int, default=0, help="(default: %(default)s)")
    _add_output_flags(sy, "synth.svm")

    wk = sub.add_parser("worker", help="serve one shard to a master started with --listen")
    _add_model_flags(wk)
    _add_solver_flags(wk)
    wk.add_argument("--connect", required=True, help="master host:port")
    wk.add_argument("--worker-id", type=int, required=True)
    wk.add_argument("--timeout", type=float, default=600.0, help="(default: %(default)s)")
    _add_output_flags(wk, None)
    return parser


def _load(path) -> object:
    try:
        return load_libsvm(path)
    except LibSVMParseError as e:
        raise DataError(f"{path}: {e}") from e
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e


def _spec(args, dataset) -> ModelSpec:
    try:
        spec = ModelSpec("squared" if args.model == "lasso" else "logistic",
                         args.lambda1, args.lambda2)
    except ValueError as e:
        raise UsageError(str(e)) from e
    try:
        spec.check_labels(dataset)
    except ValueError as e:
        raise DataError(str(e)) from e
    return spec


def _plan(dataset, kind, p, seed):
    try:
        parse_kind(kind)
    except ValueError as e:
        raise UsageError(str(e)) from e
    try:
        return make_partition(dataset, kind, p, seed)
    except ValueError as e:
        raise DataError(str(e)) from e


def _config(args, dataset, spec) -> SolverConfig:
    try:
        cfg = SolverConfig.default(dataset, spec, workers=args.workers, eta=args.eta,
                                   inner_m=args.inner, outer_t=args.outer, seed=args.seed,
                                   lazy=args.lazy)
        cfg.check(spec)
    except ValueError as e:
        raise UsageError(str(e)) from e
    return cfg


def _dataset_info(path, dataset) -> dict:
    return {"path": str(path), "n": dataset.n, "d": dataset.dim, "sha256": dataset.fingerprint()}


def save_weights(w: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(("index", "value"))
        for j, v in enumerate(w):
            wr.writerow((j, repr(float(v))))


def load_weights(path, dim: int) -> np.ndarray:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as e:
        raise DataError(f"cannot read weights {path}: {e}") from e
    if not rows or rows[0] != ["index", "value"]:
        raise DataError(f"{path}: expected header 'index,value'")
    w = np.zeros(dim)
    try:
        for idx, val in rows[1:]:
            w[int(idx)] = float(val)
    except (ValueError, IndexError) as e:
        raise DataError(f"{path}: bad weights row ({e})") from e
    return w


def _sidecar(out, suffix) -> Path:
    return Path(str(out) + suffix)


def _weights_path(out) -> Path:
    return Path(out).with_suffix(".weights.csv")


def _write_manifest(manifest: RunManifest, out) -> None:
    path = _sidecar(out, ".manifest.json")
    manifest.outputs["manifest"] = str(path)
    path.write_text(manifest.to_json())


def _reference(args, dataset, spec):
    """(w*, P(w*)) from --reference or --ref-tol, else None."""
    if args.reference:
        w = load_weights(args.reference, dataset.dim)
        return w, evaluate_objective(spec, dataset, w)
    if args.ref_tol is not None:
        return reference_solution(dataset, spec, args.ref_tol, seed=args.seed)
    return None


def cmd_train(args) -> int:
    dataset = _load(args.data)
    spec = _spec(args, dataset)
    cfg = _config(args, dataset, spec)
    if args.engine == "serial" and cfg.workers != 1:
        raise UsageError("--engine serial requires --workers 1")
    if args.listen and args.engine != "tcp":
        raise UsageError("--listen requires --engine tcp")
    plan = _plan(dataset, args.partition, cfg.workers, args.seed)
    resolved = {**vars(args), "eta": cfg.eta, "inner": cfg.inner_m}
    manifest = RunManifest("train", _clean(resolved), _dataset_info(args.data, dataset),
                           artifact_version(),
                           {"trace": str(args.out), "weights": str(_weights_path(args.out))})
    if args.dry_run:
        print(manifest.to_json(), end="")
        return EXIT_OK
    ref = _reference(args, dataset, spec)
    ref_val = None if ref is None else ref[1]
    if args.engine == "serial":
        w, trace = prox_svrg_train(dataset, spec, cfg, reference=ref_val)
    else:
        engine = args.engine
        if args.listen:
            import socket
            server = socket.create_server(parse_address(args.listen))
            log.info("waiting for %d workers on %s", cfg.workers, args.listen)
            try:
                engine = TcpEngine.accept(server, [shard_hash(s) for s in plan.shards],
                                          dataset.dim)
            finally:
                server.close()
            with engine:
                w, trace = pscope_train(dataset, spec, plan, cfg, reference=ref_val,
                                        engine=engine)
        else:
            w, trace = pscope_train(dataset, spec, plan, cfg, reference=ref_val, engine=engine)
    trace.to_csv(args.out)
    save_weights(w, _weights_path(args.out))
    _write_manifest(manifest, args.out)
    print(f"final objective {trace.objective[-1]!r}")
    return EXIT_OK


def cmd_gap(args) -> int:
    dataset = _load(args.data)
    spec = _spec(args, dataset)
    kinds = args.compare.split(",") if args.compare else [args.partition]
    if args.samples < 1 or not args.epsilon > 0 or not args.ref_tol > 0:
        raise UsageError("--samples must be >= 1 and --epsilon, --ref-tol positive")
    plans = [_plan(dataset, k, args.workers, args.seed) for k in kinds]
    anchors_out = _sidecar(args.out, ".anchors.csv")
    manifest = RunManifest("gap", _clean(vars(args)), _dataset_info(args.data, dataset),
                           artifact_version(), {"gap": str(args.out), "anchors": str(anchors_out)})
    if args.dry_run:
        print(manifest.to_json(), end="")
        return EXIT_OK
    w_star, _ = _reference(args, dataset, spec)
    rows, anchor_rows = [], []
    for kind, plan in zip(kinds, plans):
        if args.anchors_at_optimum:
            reports = [local_global_gap(spec, dataset, plan, w_star, w_star, args.ref_tol)]
            gamma = 0.0
        else:
            gamma, reports = estimate_gamma(spec, dataset, plan, args.epsilon, w_star,
                                            args.ref_tol, args.samples, args.radius, args.seed,
                                            return_reports=True)
        gaps = [r.gap for r in reports]
        rows.append([kind, repr(args.epsilon), len(reports), repr(gamma), repr(min(gaps)),
                     repr(max(gaps))])
        anchor_rows += [[kind] + r.csv_row() for r in reports]
    with open(args.out, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(GAP_HEADER)
        wr.writerows(rows)
    with open(anchors_out, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(("partition",) + GapReport.CSV_HEADER)
        wr.writerows(anchor_rows)
    _write_manifest(manifest, args.out)
    for row in rows:
        print(f"{row[0]}: gamma {row[3]}, gap range [{row[4]}, {row[5]}]")
    return EXIT_OK


def cmd_effect(args) -> int:
    dataset = _load(args.data)
    spec = _spec(args, dataset)
    cfg = _config(args, dataset, spec)
    kinds = args.compare.split(",")
    for k in kinds:
        _plan(dataset, k, cfg.workers, args.seed)
    resolved = {**vars(args), "eta": cfg.eta, "inner": cfg.inner_m}
    manifest = RunManifest("effect", _clean(resolved), _dataset_info(args.data, dataset),
                           artifact_version(), {"effect": str(args.out)})
    if args.dry_run:
        print(manifest.to_json(), end="")
        return EXIT_OK
    _, ref_val = _reference(args, dataset, spec)
    rows = partition_effect(dataset, spec, kinds, cfg, ref_val, args.target, args.seed)
    with open(args.out, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(EFFECT_HEADER)
        for r in rows:
            wr.writerow(r.csv_row())
    for r in rows:
        trace_path = _sidecar(args.out, f".{r.partition.replace(':', '_')}.trace.csv")
        r.trace.to_csv(trace_path)
        manifest.outputs[f"trace:{r.partition}"] = str(trace_path)
    _write_manifest(manifest, args.out)
    for r in rows:
        print(f"{r.partition}: {r.iters} iterations, final suboptimality {r.final_suboptimality:.3g}")
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        ds, w_true = make_synthetic(args.n, args.d, args.density, args.task, args.seed, args.noise)
    except ValueError as e:
        raise UsageError(str(e)) from e
    w_path = _sidecar(args.out, ".w_true.csv")
    manifest = RunManifest("synth", _clean(vars(args)), None, artifact_version(),
                           {"data": str(args.out), "w_true": str(w_path)})
    if args.dry_run:
        print(manifest.to_json(), end="")
        return EXIT_OK
    save_libsvm(ds, args.out)
    save_weights(w_true, w_path)
    manifest.dataset = _dataset_info(args.out, ds)
    _write_manifest(manifest, args.out)
    return EXIT_OK


def cmd_worker(args) -> int:
    dataset = _load(args.data)
    spec = _spec(args, dataset)
    cfg = _config(args, dataset, spec)
    plan = _plan(dataset, args.partition, cfg.workers, args.seed)
    k = args.worker_id
    if not 0 <= k < plan.p:
        raise UsageError(f"--worker-id must lie in [0, {plan.p})")
    resolved = {**vars(args), "eta": cfg.eta, "inner": cfg.inner_m}
    manifest = RunManifest("worker", _clean(resolved), _dataset_info(args.data, dataset),
                           artifact_version())
    if args.dry_run:
        print(manifest.to_json(), end="")
        return EXIT_OK
    worker = Worker(k, dataset, plan.shards[k], spec, cfg)
    rounds = serve_worker(parse_address(args.connect), k, shard_hash(plan.shards[k]), worker,
                          timeout=args.timeout)
    if args.out:
        _write_manifest(manifest, args.out)
    log.info("worker %d served %d rounds", k, rounds)
    return EXIT_OK


def _clean(d: dict) -> dict:
    return {k: v for k, v in sorted(d.items()) if k not in ("func", "verbose", "dry_run")}


COMMANDS = {"train": cmd_train, "gap": cmd_gap, "effect": cmd_effect, "synth": cmd_synth,
            "worker": cmd_worker}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"pscope: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"pscope: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (SolverError, SubproblemError, EngineError, ProtocolError) as e:
        print(f"pscope: solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
