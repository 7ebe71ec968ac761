"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line PASS/FAIL verdict (printed in the terminal
summary) and then asserts it.  Criterion 10 needs a user-supplied copy of
the UCI Adult data and is skipped unless ``FAIRBO_ADULT_CSV`` points to it.
"""

import math
import os
import statistics
import time
from fractions import Fraction

import numpy as np
import pytest

from fairbo.acquisition import expected_improvement
from fairbo.cli import main
from fairbo.data import generate_synthetic, load_csv, split_train_validation, standardize
from fairbo.fairness import ConstraintSpec, deo, dfp, dsp, tally
from fairbo.gp import KernelParams, condition_gp, fit_gp_classifier, log_marginal_likelihood
from fairbo.learners import LinearLearnerConfig, LinearLearnerPipeline, linear_learner_space
from fairbo.toy import EPS, ToyPipeline, toy_space
from fairbo.tuner import first_feasible_iteration, run_fairbo, run_strategy

from acceptance_log import record
from oracles import dense_posterior, gaussian_sigmoid_average, monte_carlo_ei


def central_difference(fn, theta, h=1e-5):
    g = np.zeros_like(theta)
    for i in range(len(theta)):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (fn(theta + e) - fn(theta - e)) / (2 * h)
    return g


def test_criterion_01_ei_monte_carlo():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        # f_min within 3 sigma of the mean; further out every sample is 0 and the SE vanishes
        mean, sigma = rng.uniform(-1, 1), rng.uniform(0.05, 1.0)
        f_min = mean + sigma * rng.uniform(-3, 3)
        est, se = monte_carlo_ei(mean, sigma, f_min, 10**7, rng)
        worst = max(worst, abs(expected_improvement(mean, sigma**2, f_min) - est) / se)
    elapsed = time.perf_counter() - start
    ok = worst <= 3.0 and elapsed < 30
    assert record(1, "EI vs Monte Carlo", ok, f"max |error|/SE = {worst:.2f} <= 3, {elapsed:.1f}s < 30s")


def test_criterion_02_gp_dense_oracle():
    rng = np.random.default_rng(102)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n, d = int(rng.integers(1, 51)), int(rng.integers(1, 7))
        X, y, Xq = rng.random((n, d)), rng.normal(size=n), rng.random((10, d))
        p = KernelParams(float(rng.uniform(0.5, 2.0)), tuple(rng.uniform(0.1, 1.0, size=d)),
                         float(10 ** rng.uniform(-3, -1)))
        mean, var = condition_gp(X, y, p).predict(Xq)
        m2, v2 = dense_posterior(X, y, Xq, p.amplitude, p.lengthscales, p.noise_variance)
        worst = max(worst, np.max(np.abs(mean - m2)), np.max(np.abs(var - v2)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 10
    assert record(2, "GP posterior vs dense solve", ok, f"max abs diff {worst:.1e} <= 1e-8, {elapsed:.1f}s < 10s")


def test_criterion_03_lml_gradient():
    rng = np.random.default_rng(103)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        n, d = int(rng.integers(2, 30)), int(rng.integers(1, 6))
        X, y = rng.random((n, d)), rng.normal(size=n)
        theta = np.log([rng.uniform(0.5, 2.0), *rng.uniform(0.1, 1.0, size=d), 10 ** rng.uniform(-3, -1)])
        _, grad = log_marginal_likelihood(KernelParams.from_log(theta), X, y)
        fd = central_difference(lambda t: log_marginal_likelihood(KernelParams.from_log(t), X, y)[0], theta)
        worst = max(worst, np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-12))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-4 and elapsed < 10
    assert record(3, "LML gradient vs finite differences", ok, f"max rel error {worst:.1e} <= 1e-4, {elapsed:.1f}s < 10s")


def test_criterion_04_laplace_classifier():
    rng = np.random.default_rng(104)
    worst_p, worst_r = 0.0, 0.0
    for _ in range(10):
        n = int(rng.integers(6, 15))
        X = rng.random((n, 1))
        labels = np.where(np.sin(6 * X[:, 0] + rng.uniform(0, 6)) + 0.3 * rng.normal(size=n) > 0, 1.0, -1.0)
        clf = fit_gp_classifier(X, labels, seed=int(rng.integers(1000)))
        Xq = np.linspace(0, 1, 41)[:, None]
        mean, var = clf.latent(Xq)
        ref = np.array([gaussian_sigmoid_average(m, v) for m, v in zip(mean, var)])
        worst_p = max(worst_p, np.max(np.abs(clf.predict_proba(Xq) - ref)))
        worst_r = max(worst_r, clf.stationarity_residual)
    ok = worst_p <= 0.05 and worst_r <= 1e-6
    assert record(4, "Laplace classifier vs quadrature", ok,
                  f"max |p - quad| {worst_p:.4f} <= 0.05, stationarity residual {worst_r:.1e} <= 1e-6")


def test_criterion_05_fairness_metrics():
    rng = np.random.default_rng(105)
    mismatches = 0
    for _ in range(20):
        preds, labels, sens, table = [], [], [], {}
        for g in (0, 1):
            tp, fn, fp, tn = (int(v) for v in rng.integers(1, 15, size=4))
            table[g] = (tp, fn, fp, tn)
            for p, y, k in ((1, 1, tp), (0, 1, fn), (1, 0, fp), (0, 0, tn)):
                preds += [p] * k
                labels += [y] * k
                sens += [g] * k
        perm = rng.permutation(len(preds))
        c = tally(np.array(preds)[perm], np.array(labels)[perm], np.array(sens)[perm])
        (tp0, fn0, fp0, tn0), (tp1, fn1, fp1, tn1) = table[0], table[1]
        exact = {
            "DSP": abs(Fraction(tp0 + fp0, tp0 + fn0 + fp0 + tn0) - Fraction(tp1 + fp1, tp1 + fn1 + fp1 + tn1)),
            "DEO": abs(Fraction(tp0, tp0 + fn0) - Fraction(tp1, tp1 + fn1)),
            "DFP": abs(Fraction(fp0, fp0 + tn0) - Fraction(fp1, fp1 + tn1)),
        }
        hand = {
            "DSP": abs((tp0 + fp0) / (tp0 + fn0 + fp0 + tn0) - (tp1 + fp1) / (tp1 + fn1 + fp1 + tn1)),
            "DEO": abs(tp0 / (tp0 + fn0) - tp1 / (tp1 + fn1)),
            "DFP": abs(fp0 / (fp0 + tn0) - fp1 / (fp1 + tn1)),
        }
        got = {"DSP": dsp(c), "DEO": deo(c), "DFP": dfp(c)}
        for m in got:
            mismatches += got[m] != hand[m] or abs(Fraction(got[m]) - exact[m]) > Fraction(1, 10**15)
    y = rng.integers(0, 2, 500)
    s = rng.integers(0, 2, 500)
    const_ok = all(dsp(tally(np.full(500, v), y, s)) == 0 for v in (0, 1))
    perfect = tally(y, y, s)
    perfect_ok = deo(perfect) == 0 and dfp(perfect) == 0
    ok = mismatches == 0 and const_ok and perfect_ok
    assert record(5, "fairness metrics vs hand counts", ok,
                  f"{mismatches} mismatches over 20 tables x 3 metrics; constant DSP = 0: {const_ok}; "
                  f"perfect DEO = DFP = 0: {perfect_ok}")


# --------------------------------------------------------------------------
# toy benchmark shared by criteria 6 and 7

SEEDS = range(20)


@pytest.fixture(scope="module")
def toy_benchmark():
    space, specs = toy_space(), [ConstraintSpec("DSP", EPS)]
    start = time.perf_counter()
    runs = {s: [run_strategy(s, space, ToyPipeline(), specs, 5, 50, seed) for seed in SEEDS]
            for s in ("fairbo", "bo", "rs")}
    return runs, time.perf_counter() - start


def test_criterion_06_algorithm_semantics(toy_benchmark):
    runs, _ = toy_benchmark
    problems = []
    for h in runs["fairbo"]:
        if len(h.records) != 50:
            problems.append(f"seed {h.seed}: {len(h.records)} records")
        first = first_feasible_iteration(h)
        if any(r.phase == "cEI" and (first is None or r.index <= first) for r in h.records):
            problems.append(f"seed {h.seed}: cEI before first feasible")
        feas = [r for r in h.records if r.valid and r.feasible]
        expected = min(feas, key=lambda r: (r.objective, r.index)) if feas else None
        if h.best_fair is not expected:
            problems.append(f"seed {h.seed}: incumbent mismatch")
    ok = not problems
    assert record(6, "phase correctness, budget, incumbent", ok,
                  "20 seeds clean" if ok else "; ".join(problems[:3]))


def test_criterion_07_fairbo_vs_baselines(toy_benchmark):
    runs, elapsed = toy_benchmark

    def first(h):
        f = first_feasible_iteration(h)
        return math.inf if f is None else f

    def final(h):
        return math.inf if h.best_fair is None else h.best_fair.objective

    med_f = statistics.median(first(h) for h in runs["fairbo"])
    med_r = statistics.median(first(h) for h in runs["rs"])
    beats_rs = sum(final(f) <= final(r) for f, r in zip(runs["fairbo"], runs["rs"]))
    bo_worse = sum(final(b) > final(f) for f, b in zip(runs["fairbo"], runs["bo"]))
    ok = med_f < med_r and beats_rs >= 15 and bo_worse >= 14 and elapsed < 300
    assert record(7, "FairBO vs RS and BO on the toy", ok,
                  f"median first feasible {med_f:g} vs RS {med_r:g}; FairBO <= RS in {beats_rs}/20 (>= 15); "
                  f"BO worse in {bo_worse}/20 (>= 14); {elapsed:.0f}s < 300s")


def test_criterion_08_regularization_fairness():
    exact_zero, endpoint_ok = 0, 0
    for seed in range(10):
        ds = generate_synthetic(5000, 0.8, 0.1, np.random.default_rng(seed))
        tr, va = standardize(*split_train_validation(ds, 0.7, np.random.default_rng([seed, 1])))
        pipe = LinearLearnerPipeline(tr, va, seed=seed)
        strong = pipe(LinearLearnerConfig(alpha=1e3).as_dict()).fairness
        weak = pipe(LinearLearnerConfig(alpha=1e-3).as_dict()).fairness
        exact_zero += strong.dsp == 0 and strong.deo == 0 and strong.dfp == 0
        endpoint_ok += strong.dsp <= weak.dsp
    ok = exact_zero == 10 and endpoint_ok >= 9
    assert record(8, "regularization drives unfairness to zero", ok,
                  f"all metrics exactly 0 at alpha=1e3 in {exact_zero}/10; "
                  f"DSP(1e3) <= DSP(1e-3) in {endpoint_ok}/10 (>= 9)")


def test_criterion_09_multi_constraint():
    specs = [ConstraintSpec(m, 0.05) for m in ("DSP", "DEO", "DFP")]
    space = linear_learner_space()
    feasible, flagged, silent = 0, 0, 0
    for seed in range(10):
        ds = generate_synthetic(2000, 0.8, 0.1, np.random.default_rng(seed))
        tr, va = standardize(*split_train_validation(ds, 0.7, np.random.default_rng([seed, 1])))
        pipe = LinearLearnerPipeline(tr, va, specs, seed=seed)
        h = run_fairbo(space, pipe, specs, 5, 20, seed)
        result = h.result
        # re-evaluate the returned configuration from scratch
        report = pipe(result.config).fairness
        satisfied = all(report.value(s.metric) <= s.eps for s in specs)
        if h.feasible_found and satisfied:
            feasible += 1
        elif not h.feasible_found and not result.feasible:
            flagged += 1
        else:
            silent += 1
    ok = silent == 0
    assert record(9, "three simultaneous constraints", ok,
                  f"{feasible} feasible, {flagged} flagged infeasible, {silent} silent violations over 10 seeds")


ADULT = os.environ.get("FAIRBO_ADULT_CSV")


@pytest.mark.skipif(not ADULT, reason="set FAIRBO_ADULT_CSV to a local Adult CSV")
def test_criterion_10_adult_soft_check():
    ds = load_csv(ADULT, os.environ.get("FAIRBO_ADULT_LABEL", "income"), os.environ.get("FAIRBO_ADULT_SENSITIVE", "sex"),
                  os.environ.get("FAIRBO_ADULT_POSITIVE", ">50K"), os.environ.get("FAIRBO_ADULT_REFERENCE", "Male"),
                  include_sensitive_as_feature=True)
    specs = [ConstraintSpec("DSP", 0.1)]
    errors = []
    for seed in range(10):
        tr, va = standardize(*split_train_validation(ds, 0.7, np.random.default_rng([seed, 100])))
        h = run_fairbo(linear_learner_space(), LinearLearnerPipeline(tr, va, specs, seed), specs, 5, 100, seed)
        errors.append(h.best_fair.objective if h.best_fair else 1.0)
    mean = float(np.mean(errors))
    assert record(10, "Adult soft check", mean <= 0.21, f"mean best feasible error {mean:.3f} <= 0.21")


def test_criterion_10_marker():
    if not ADULT:
        record(10, "Adult soft check", True, "FAIRBO_ADULT_CSV not set", skipped=True)
        pytest.skip("needs a user-supplied Adult CSV")


CONFIG = """\
dataset:
  synthetic: {{n: 600, bias: 0.8, noise: 0.1}}
constraints:
  - {{metric: DSP, eps: 0.05, feedback: numeric}}
  - {{metric: DEO, eps: 0.1, feedback: binary}}
strategies: [fairbo, bo, rs]
budget: 10
initial: 4
seeds: [0, 1]
output_dir: {out}
"""


def test_criterion_11_determinism(tmp_path):
    digests = []
    for name in ("a", "b"):
        cfg = tmp_path / f"{name}.yaml"
        cfg.write_text(CONFIG.format(out=tmp_path / name))
        assert main(["run", str(cfg)]) == 0
        files = sorted((tmp_path / name / "records").glob("*.jsonl"))
        digests.append({f.name: f.read_bytes() for f in files})
    ok = digests[0] == digests[1] and len(digests[0]) == 6
    assert record(11, "byte-identical records across runs", ok, f"{len(digests[0])} record files compared")
