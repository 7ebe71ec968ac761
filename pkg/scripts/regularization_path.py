"""Validation error and unfairness of the linear learner along an alpha grid.

Writes one CSV row per (seed, alpha) and prints the per-alpha medians.

    python3 scripts/regularization_path.py --bias 0.8 --seeds 10 --out runs/regularization_path.csv
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from fairbo.data import generate_synthetic, split_train_validation, standardize
from fairbo.learners import LinearLearnerConfig, LinearLearnerPipeline

ALPHAS = (1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--bias", type=float, default=0.8)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--out", default="runs/regularization_path.csv")
    args = p.parse_args()

    rows = []
    for seed in range(args.seeds):
        ds = generate_synthetic(args.n, args.bias, args.noise, np.random.default_rng(seed))
        tr, va = standardize(*split_train_validation(ds, 0.7, np.random.default_rng([seed, 1])))
        pipe = LinearLearnerPipeline(tr, va, seed=seed)
        for alpha in ALPHAS:
            out = pipe(LinearLearnerConfig(alpha=alpha).as_dict())
            rows.append({"seed": seed, "alpha": alpha, "error": out.validation_error,
                         **{k.lower(): v for k, v in out.fairness.as_dict().items()}})

    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)

    print(f"{'alpha':>8} {'error':>7} {'DSP':>7} {'DEO':>7} {'DFP':>7}")
    for alpha in ALPHAS:
        sel = [r for r in rows if r["alpha"] == alpha]
        med = {k: np.median([r[k] for r in sel]) for k in ("error", "dsp", "deo", "dfp")}
        print(f"{alpha:>8g} {med['error']:>7.4f} {med['dsp']:>7.4f} {med['deo']:>7.4f} {med['dfp']:>7.4f}")
    print(f"rows written to {path}")


if __name__ == "__main__":
    main()
