"""Train on the LibSVM benchmark datasets with their published regularization.

Not part of the test suite: the files are large (kdd2012 is ~150M
instances) and must be downloaded first, e.g.

    python scripts/real_datasets.py download rcv1 --dest data/
    python scripts/real_datasets.py run rcv1 --dest data/ --workers 8 --outer 30

``run`` forwards to ``pscope train`` with the lambdas in ``PUBLISHED_LAMBDAS``.
"""
import argparse
import bz2
import shutil
import sys
import urllib.request
from pathlib import Path

from pscope.cli import main as pscope_main

BASE = "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/binary/"

# (file, label map) per dataset; label maps send the raw labels to +-1
SOURCES = {
    "cov": ("covtype.libsvm.binary.bz2", {"1": "1", "2": "-1"}),
    "rcv1": ("rcv1_train.binary.bz2", None),
    "avazu": ("avazu-app.bz2", {"0": "-1", "1": "1"}),
    "kdd2012": ("kdd12.bz2", {"0": "-1", "1": "1"}),
}

# logistic regression with elastic net; lambda1 is the L2 weight, lambda2 the L1 weight
PUBLISHED_LAMBDAS = {
    "cov": {"lambda1": 1e-5, "lambda2": 1e-5},
    "rcv1": {"lambda1": 1e-5, "lambda2": 1e-5},
    "avazu": {"lambda1": 1e-7, "lambda2": 1e-5},
    "kdd2012": {"lambda1": 1e-8, "lambda2": 1e-5},
}


def local_path(name: str, dest: Path) -> Path:
    return dest / f"{name}.svm"


def download(name: str, dest: Path) -> Path:
    fname, label_map = SOURCES[name]
    dest.mkdir(parents=True, exist_ok=True)
    raw = dest / fname
    if not raw.exists():
        print(f"downloading {BASE + fname}")
        with urllib.request.urlopen(BASE + fname) as resp, open(raw, "wb") as fh:
            shutil.copyfileobj(resp, fh)
    out = local_path(name, dest)
    with bz2.open(raw, "rt") as src, open(out, "w") as dst:
        for line in src:
            if label_map is not None:
                label, _, rest = line.partition(" ")
                line = f"{label_map.get(label, label)} {rest}"
            dst.write(line)
    return out


def run(name: str, dest: Path, extra: list[str]) -> int:
    lam = PUBLISHED_LAMBDAS[name]
    argv = ["train", "--data", str(local_path(name, dest)), "--model", "logistic",
            "--lambda1", repr(lam["lambda1"]), "--lambda2", repr(lam["lambda2"]),
            "--out", str(dest / f"{name}.trace.csv"), *extra]
    return pscope_main(argv)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("action", choices=("download", "run", "show"))
    p.add_argument("dataset", choices=sorted(PUBLISHED_LAMBDAS))
    p.add_argument("--dest", type=Path, default=Path("data"))
    args, extra = p.parse_known_args(argv)
    if args.action == "show":
        print(args.dataset, PUBLISHED_LAMBDAS[args.dataset])
        return 0
    if args.action == "download":
        print(download(args.dataset, args.dest))
        return 0
    return run(args.dataset, args.dest, extra)


if __name__ == "__main__":
    sys.exit(main())
