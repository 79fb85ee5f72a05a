"""Regenerate tests/data/rcv1_excerpt.svm.

An rcv1-shaped stand-in: 100 documents over 47,236 term ids, Zipf-like
term popularity, tf-idf-like positive weights, unit-norm rows and +-1
labels, written in the same LibSVM text layout as rcv1_train.binary.
"""
from pathlib import Path

import numpy as np

N_FEATURES = 47_236
OUT = Path(__file__).resolve().parent.parent / "tests" / "data" / "rcv1_excerpt.svm"


def main(seed: int = 20040101):
    rng = np.random.default_rng(seed)
    popularity = 1.0 / np.arange(1, N_FEATURES + 1) ** 1.1
    popularity /= popularity.sum()
    perm = rng.permutation(N_FEATURES)
    lines = []
    for _ in range(100):
        k = int(np.clip(rng.lognormal(4.2, 0.5), 8, 600))
        terms = np.unique(perm[rng.choice(N_FEATURES, size=k, p=popularity)])
        tf = 1.0 + np.log(rng.geometric(0.5, size=terms.size))
        idf = np.log(N_FEATURES / (1.0 + terms % 997 + 1.0))
        vals = tf * idf
        vals /= np.linalg.norm(vals)
        label = "1" if rng.random() < 0.47 else "-1"
        feats = " ".join(f"{j + 1}:{v:.7g}" for j, v in zip(terms, vals))
        lines.append(f"{label} {feats}")
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text("\n".join(lines) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
