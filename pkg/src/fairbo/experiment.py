"""Experiment harness: config parsing, strategy x seed grids, record and curve files.

Output directory layout::

    records/<strategy>_seed<seed>.jsonl   one JSON object per evaluation
    curves.csv                            strategy,seed,iteration,best_feasible_error
    curves_median.csv                     strategy,iteration,median_best_feasible_error,n_defined
    results.json                          per-run result configuration and status
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .data import Dataset, generate_synthetic, load_csv, split_train_validation, standardize
from .errors import ConfigError, DomainError, LoadError
from .fairness import ConstraintSpec
from .learners import LinearLearnerConfig, LinearLearnerPipeline, linear_learner_space
from .space import SearchSpace
from .toy import ToyPipeline, toy_space
from .tuner import STRATEGIES, History, best_feasible_curve, first_feasible_iteration, run_strategy

log = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "FAIRBO_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2
SPLIT_STREAM = 100
BOOTSTRAP_RESAMPLES = 10_000


@dataclass
class ExperimentConfig:
    dataset: dict
    constraints: list
    strategies: list
    budget: int
    initial: int
    seeds: list
    output_dir: str
    search_space: Any = "linear_learner"
    split_fraction: float = 0.7
    merge_constraints: bool = False
    data_seed: int = 0
    summary_seed: int = 0
    lines: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def specs(self) -> list:
        return [ConstraintSpec(**c) for c in self.constraints]

    @property
    def problem(self) -> str:
        return next(iter(self.dataset))

    def space(self) -> SearchSpace:
        if self.problem == "toy":
            return toy_space()
        if self.search_space == "linear_learner":
            return linear_learner_space()
        return SearchSpace.from_declaration(self.search_space)


# --------------------------------------------------------------------------
# parsing


def _line_index(node, path=(), out=None) -> dict:
    """Map dotted field paths to 1-based source lines."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            p = path + (str(k.value),)
            out[".".join(p)] = k.start_mark.line + 1
            _line_index(v, p, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            p = path + (str(i),)
            out[".".join(p)] = v.start_mark.line + 1
            _line_index(v, p, out)
    return out


def _fail(lines, field_, message):
    line = None
    parts = field_.split(".")
    while parts and line is None:
        line = lines.get(".".join(parts))
        parts.pop()
    raise ConfigError(message, field=field_, line=line)


REQUIRED = ("dataset", "strategies", "budget", "initial", "seeds")
KNOWN = set(REQUIRED) | {"constraints", "output_dir", "search_space", "split_fraction",
                         "merge_constraints", "data_seed", "summary_seed"}
CSV_KEYS = {"path", "label_column", "sensitive_column", "positive_label", "sensitive_reference"}


def parse_config(text: str, base_dir: str | Path = ".") -> ExperimentConfig:
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {exc}", line=mark.line + 1 if mark else None) from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping at the top level", line=1)
    lines = _line_index(node)

    for key in raw:
        if key not in KNOWN:
            _fail(lines, key, f"unknown field; expected one of {sorted(KNOWN)}")
    for key in REQUIRED:
        if key not in raw:
            raise ConfigError("required field missing", field=key)

    ds = raw["dataset"]
    if not isinstance(ds, dict) or len(ds) != 1 or next(iter(ds)) not in ("synthetic", "csv", "toy"):
        _fail(lines, "dataset", "must have exactly one of the keys synthetic, csv, toy")
    kind, opts = next(iter(ds.items()))
    opts = dict(opts or {})
    if kind == "synthetic":
        for k in ("n", "bias", "noise"):
            if k not in opts:
                _fail(lines, f"dataset.synthetic", f"missing key {k!r}")
    elif kind == "csv":
        missing = CSV_KEYS - set(opts)
        if missing:
            _fail(lines, "dataset.csv", f"missing keys {sorted(missing)}")
        path = Path(opts["path"])
        if not path.is_absolute():
            opts["path"] = str(Path(base_dir) / path)
        opts.setdefault("include_sensitive_as_feature", False)

    strategies = raw["strategies"]
    if not isinstance(strategies, list) or not strategies:
        _fail(lines, "strategies", "must be a non-empty list")
    for i, s in enumerate(strategies):
        if s not in STRATEGIES:
            _fail(lines, f"strategies.{i}", f"unknown strategy {s!r}; expected one of {sorted(STRATEGIES)}")

    constraints = raw.get("constraints") or []
    if not isinstance(constraints, list):
        _fail(lines, "constraints", "must be a list")
    parsed_constraints = []
    for i, c in enumerate(constraints):
        if not isinstance(c, dict):
            _fail(lines, f"constraints.{i}", "must be a mapping with metric, eps, feedback")
        entry = {"metric": c.get("metric"), "eps": c.get("eps"), "feedback": c.get("feedback", "numeric")}
        try:
            if entry["metric"] is None or entry["eps"] is None:
                raise DomainError("metric and eps are required")
            ConstraintSpec(str(entry["metric"]), float(entry["eps"]), entry["feedback"])
        except (DomainError, TypeError, ValueError) as exc:
            _fail(lines, f"constraints.{i}", str(exc))
        parsed_constraints.append({"metric": str(entry["metric"]).upper(), "eps": float(entry["eps"]),
                                   "feedback": entry["feedback"]})
    if "fairbo" in strategies and not parsed_constraints:
        _fail(lines, "constraints", "fairbo needs at least one constraint")

    budget, initial = raw["budget"], raw["initial"]
    for name, v in (("budget", budget), ("initial", initial)):
        if not isinstance(v, int) or isinstance(v, bool):
            _fail(lines, name, "must be an integer")
    if not (budget > initial >= 1):
        _fail(lines, "budget", f"need budget > initial >= 1 (got budget={budget}, initial={initial})")

    seeds = raw["seeds"]
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
        _fail(lines, "seeds", "must be a non-empty list of non-negative integers")
    if len(set(seeds)) != len(seeds):
        _fail(lines, "seeds", "seeds must be distinct")

    fraction = raw.get("split_fraction", 0.7)
    if not isinstance(fraction, (int, float)) or not 0 < fraction < 1:
        _fail(lines, "split_fraction", "must lie strictly between 0 and 1")

    output_dir = raw.get("output_dir") or os.environ.get(OUTPUT_DIR_ENV) or "runs"
    cfg = ExperimentConfig(
        dataset={kind: opts}, constraints=parsed_constraints, strategies=list(strategies),
        budget=budget, initial=initial, seeds=list(seeds), output_dir=str(output_dir),
        search_space=raw.get("search_space", "linear_learner"), split_fraction=float(fraction),
        merge_constraints=bool(raw.get("merge_constraints", False)),
        data_seed=int(raw.get("data_seed", 0)), summary_seed=int(raw.get("summary_seed", 0)),
        lines=lines,
    )
    try:
        space = cfg.space()
    except (DomainError, KeyError, TypeError) as exc:
        _fail(lines, "search_space", f"invalid search space: {exc}")
    if kind != "toy" and cfg.search_space != "linear_learner":
        allowed = set(LinearLearnerConfig.__dataclass_fields__)
        for i, name in enumerate(space.names):
            if name not in allowed:
                _fail(lines, f"search_space.{i}", f"{name!r} is not a linear-learner hyperparameter {sorted(allowed)}")
        reference = linear_learner_space()
        for i, d in enumerate(space.dimensions):
            ref = next(r for r in reference.dimensions if r.name == d.name)
            if d.kind == "categorical":
                bad = set(d.categories) - set(ref.categories)
            else:
                bad = d.lower < ref.lower or d.upper > ref.upper
            if bad:
                _fail(lines, f"search_space.{i}", f"{d.name!r} must stay within the learner's allowed range")
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config(text, base_dir=path.parent)


# --------------------------------------------------------------------------
# running


class _PartialPipeline:
    """Fills hyperparameters missing from a narrowed space with learner defaults."""

    def __init__(self, inner):
        self.inner = inner
        self.defaults = LinearLearnerConfig().as_dict()

    def __call__(self, config):
        return self.inner({**self.defaults, **config})


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    kind, opts = next(iter(cfg.dataset.items()))
    if kind == "synthetic":
        return generate_synthetic(int(opts["n"]), float(opts["bias"]), float(opts["noise"]),
                                  np.random.default_rng([cfg.data_seed]),
                                  include_sensitive_as_feature=bool(opts.get("include_sensitive_as_feature", False)))
    return load_csv(**opts)


def build_pipeline(cfg: ExperimentConfig, seed: int, dataset: Dataset | None = None):
    if cfg.problem == "toy":
        return ToyPipeline()
    dataset = load_dataset(cfg) if dataset is None else dataset
    train, validation = split_train_validation(dataset, cfg.split_fraction,
                                               np.random.default_rng([seed, SPLIT_STREAM]))
    train, validation = standardize(train, validation)
    return _PartialPipeline(LinearLearnerPipeline(train, validation, cfg.specs, seed))


def record_path(out_dir, strategy, seed) -> Path:
    return Path(out_dir) / "records" / f"{strategy}_seed{seed}.jsonl"


def _num(v):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else v


def write_records(history: History, path: Path) -> None:
    curve = best_feasible_curve(history)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for r, best in zip(history.records, curve):
            line = {
                "iteration": r.index,
                "phase": r.phase,
                "config": r.config,
                "objective": _num(r.objective),
                "constraints": {s.metric: _num(v) for s, v in zip(history.specs, r.constraint_values)},
                "feasible": r.feasible,
                "valid": r.valid,
                "best_feasible": best,
            }
            if r.error:
                line["error"] = r.error
            fh.write(json.dumps(line) + "\n")


def _run_one(args):
    cfg, strategy, seed = args
    space = cfg.space()
    pipeline = build_pipeline(cfg, seed)
    history = run_strategy(strategy, space, pipeline, cfg.specs, cfg.initial, cfg.budget, seed,
                           cfg.merge_constraints)
    write_records(history, record_path(cfg.output_dir, strategy, seed))
    result = history.result
    return {
        "strategy": strategy,
        "seed": seed,
        "feasible_found": history.feasible_found,
        "first_feasible_iteration": first_feasible_iteration(history),
        "result_config": None if result is None else result.config,
        "result_objective": None if result is None else _num(result.objective),
        "result_feasible": history.feasible_found,
        "invalid_evaluations": sum(not r.valid for r in history.records),
        "aborted": history.aborted,
    }


def read_records(path) -> list:
    path = Path(path)
    try:
        with path.open(encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]
    except (OSError, json.JSONDecodeError) as exc:
        raise LoadError(f"{path}: unreadable record file ({exc})") from exc


def curve_from_records(records) -> list:
    curve, best = [], None
    for r in records:
        if r["valid"] and r["feasible"] and (best is None or r["objective"] < best):
            best = r["objective"]
        curve.append(best)
    return curve


def write_curves(out_dir, runs) -> None:
    """``runs``: iterable of (strategy, seed) whose record files exist."""
    out_dir = Path(out_dir)
    per_strategy: dict = {}
    with (out_dir / "curves.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "seed", "iteration", "best_feasible_error"])
        for strategy, seed in runs:
            curve = curve_from_records(read_records(record_path(out_dir, strategy, seed)))
            per_strategy.setdefault(strategy, []).append(curve)
            for i, v in enumerate(curve, start=1):
                w.writerow([strategy, seed, i, "" if v is None else repr(v)])
    with (out_dir / "curves_median.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "iteration", "median_best_feasible_error", "n_defined"])
        for strategy, curves in per_strategy.items():
            for i in range(max(len(c) for c in curves)):
                vals = [c[i] for c in curves if i < len(c) and c[i] is not None]
                med = repr(float(np.median(vals))) if vals else ""
                w.writerow([strategy, i + 1, med, len(vals)])


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, strategies=None, seed_offset: int = 0) -> int:
    """Run every (strategy, seed) pair; return an exit status (0 ok, 2 partial failure)."""
    chosen = [s for s in cfg.strategies if not strategies or s in strategies]
    seeds = [s + seed_offset for s in cfg.seeds]
    out_dir = Path(cfg.output_dir)
    (out_dir / "records").mkdir(parents=True, exist_ok=True)
    tasks = [(cfg, strategy, seed) for seed in seeds for strategy in chosen]

    results, failed = [], []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_one, t) for t in tasks]
            outcomes = []
            for t, fut in zip(tasks, futures):
                try:
                    outcomes.append((t, fut.result(), None))
                except Exception as exc:
                    outcomes.append((t, None, exc))
    else:
        outcomes = []
        for t in tasks:
            try:
                outcomes.append((t, _run_one(t), None))
            except Exception as exc:
                outcomes.append((t, None, exc))
    for (_, strategy, seed), res, exc in outcomes:
        if exc is not None:
            log.error("run %s seed %d failed: %s", strategy, seed, exc)
            failed.append({"strategy": strategy, "seed": seed, "error": f"{type(exc).__name__}: {exc}"})
        else:
            results.append(res)

    done = [(r["strategy"], r["seed"]) for r in results]
    write_curves(out_dir, done)
    with (out_dir / "results.json").open("w", encoding="utf-8") as fh:
        json.dump({"runs": results, "failed": failed,
                   "constraints": cfg.constraints, "budget": cfg.budget, "initial": cfg.initial,
                   "summary_seed": cfg.summary_seed}, fh, indent=2)
        fh.write("\n")
    partial = bool(failed) or any(r["aborted"] for r in results)
    return EXIT_PARTIAL if partial else EXIT_OK


# --------------------------------------------------------------------------
# summary


def bootstrap_mean_ci(values, rng: np.random.Generator, n_resamples: int = BOOTSTRAP_RESAMPLES,
                      level: float = 0.95):
    """Percentile bootstrap interval for the mean of ``values``."""
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        raise DomainError("bootstrap needs at least one value")
    idx = rng.integers(len(values), size=(n_resamples, len(values)))
    means = values[idx].mean(axis=1)
    lo, hi = np.percentile(means, [50 * (1 - level), 50 * (1 + level)])
    return float(lo), float(hi)


def summarize(output_dir, summary_seed: int | None = None) -> list:
    """Per-strategy summary rows from the record files in ``output_dir``."""
    out_dir = Path(output_dir)
    rec_dir = out_dir / "records"
    files = sorted(rec_dir.glob("*.jsonl")) if rec_dir.is_dir() else []
    if not files:
        raise LoadError(f"{rec_dir}: no record files found")
    if summary_seed is None:
        summary_seed = 0
        meta = out_dir / "results.json"
        if meta.exists():
            try:
                summary_seed = int(json.loads(meta.read_text()).get("summary_seed", 0))
            except (json.JSONDecodeError, ValueError) as exc:
                raise LoadError(f"{meta}: corrupt results file ({exc})") from exc
    runs: dict = {}
    for f in files:
        strategy, _, seed = f.stem.rpartition("_seed")
        if not strategy or not seed.isdigit():
            raise LoadError(f"{f}: unexpected record file name")
        records = read_records(f)
        for r in records:
            if not {"iteration", "feasible", "valid", "objective"} <= set(r):
                raise LoadError(f"{f}: record missing required fields")
        runs.setdefault(strategy, []).append((int(seed), records))

    rows = []
    for strategy in sorted(runs):
        firsts, finals = [], []
        for seed, records in sorted(runs[strategy]):
            first = next((r["iteration"] for r in records if r["valid"] and r["feasible"]), None)
            firsts.append(math.inf if first is None else first)
            curve = curve_from_records(records)
            if curve and curve[-1] is not None:
                finals.append(curve[-1])
        med = float(np.median(firsts))
        row = {
            "strategy": strategy,
            "n_seeds": len(firsts),
            "n_feasible_seeds": len(finals),
            "median_first_feasible": None if math.isinf(med) else med,
            "final_best_mean": None,
            "ci_low": None,
            "ci_high": None,
        }
        if finals:
            rng = np.random.default_rng(summary_seed)
            row["final_best_mean"] = float(np.mean(finals))
            row["ci_low"], row["ci_high"] = bootstrap_mean_ci(finals, rng)
        rows.append(row)
    return rows


def format_summary(rows) -> str:
    def fmt(v):
        return "-" if v is None else f"{v:.4g}"

    header = f"{'strategy':<8} {'seeds':>5} {'feasible':>8} {'median_first':>12} {'final_best_mean':>15} {'95% CI':>21}"
    lines = [header]
    for r in rows:
        ci = "-" if r["ci_low"] is None else f"[{r['ci_low']:.4g}, {r['ci_high']:.4g}]"
        lines.append(f"{r['strategy']:<8} {r['n_seeds']:>5} {r['n_feasible_seeds']:>8} "
                     f"{fmt(r['median_first_feasible']):>12} {fmt(r['final_best_mean']):>15} {ci:>21}")
    return "\n".join(lines)
