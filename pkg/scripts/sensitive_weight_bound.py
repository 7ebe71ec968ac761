"""DSP of a fixed linear rule as the weight on the sensitive feature varies.

For each weight the script reports the empirical DSP, the one-sided window
probability P(-w_s <= score < 0 | S=0) and the sign-aware window actually used
by the bound check.  Negative weights show where the one-sided window is empty.

    python3 scripts/sensitive_weight_bound.py
"""

import argparse

import numpy as np

from fairbo.data import generate_synthetic, split_train_validation, standardize
from fairbo.learners import LearnerModel, dsp_linear_bound_check


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    ds = generate_synthetic(args.n, 0.0, 0.1, np.random.default_rng(args.seed), include_sensitive_as_feature=True)
    _, va = standardize(*split_train_validation(ds, 0.7, np.random.default_rng([args.seed, 1])))
    base = np.r_[0.8, 0.5, 0.1]
    print(f"{'w_s':>6} {'DSP':>7} {'one-sided':>9} {'sign-aware':>10} {'holds':>6}")
    for ws in np.linspace(-3, 3, 13):
        model = LearnerModel(np.r_[base, ws], 0.0)
        c = dsp_linear_bound_check(model, va, va.sensitive_index, premise=True)
        print(f"{ws:>6.2f} {c.dsp:>7.4f} {c.printed_bound:>9.4f} {c.bound:>10.4f} {str(c.holds):>6}")


if __name__ == "__main__":
    main()
