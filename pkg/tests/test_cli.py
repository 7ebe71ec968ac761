import csv
import json
import statistics

import numpy as np
import pytest

from fairbo import experiment
from fairbo.cli import main
from fairbo.errors import ConfigError, LoadError

TOY = """\
dataset:
  toy: {}
constraints:
  - {metric: DSP, eps: 0.1, feedback: numeric}
strategies: [fairbo, bo, rs]
budget: 8
initial: 3
seeds: [0, 1]
"""

SYNTHETIC = """\
dataset:
  synthetic: {n: 300, bias: 0.8, noise: 0.1}
search_space:
  - {name: iterations, kind: integer-linear, lower: 1, upper: 8}
  - {name: alpha, kind: continuous-log, lower: 0.001, upper: 1000}
constraints:
  - {metric: DSP, eps: 0.05, feedback: numeric}
strategies: [fairbo, rs]
budget: 6
initial: 3
seeds: [4]
"""


def write_config(tmp_path, text, out="out"):
    p = tmp_path / "exp.yaml"
    p.write_text(text + f"output_dir: {tmp_path / out}\n")
    return p


def test_parse_reports_line_and_field():
    bad = TOY.replace("[fairbo, bo, rs]", "[fairbo, sa]")
    with pytest.raises(ConfigError) as info:
        experiment.parse_config(bad)
    assert info.value.line == 5 and info.value.field == "strategies.1"
    assert str(info.value).startswith("line 5: strategies.1:")


@pytest.mark.parametrize("edit, field", [
    (("budget: 8", "budget: 3"), "budget"),
    (("seeds: [0, 1]", "seeds: []"), "seeds"),
    (("eps: 0.1", "eps: -1"), "constraints.0"),
    (("metric: DSP", "metric: XYZ"), "constraints.0"),
    (("toy: {}", "parquet: {}"), "dataset"),
    (("budget: 8", "budget: 8\nbudgett: 9"), "budgett"),
])
def test_parse_rejects(edit, field):
    with pytest.raises(ConfigError) as info:
        experiment.parse_config(TOY.replace(*edit))
    assert info.value.field == field
    assert info.value.line is not None


def test_fairbo_needs_constraints():
    text = TOY.replace("  - {metric: DSP, eps: 0.1, feedback: numeric}\n", "").replace("constraints:\n", "")
    with pytest.raises(ConfigError, match="constraint"):
        experiment.parse_config(text)


def test_search_space_must_fit_learner():
    text = SYNTHETIC.replace("upper: 1000", "upper: 5000")
    with pytest.raises(ConfigError) as info:
        experiment.parse_config(text)
    assert info.value.field == "search_space.1"


def test_invalid_yaml():
    with pytest.raises(ConfigError):
        experiment.parse_config("a: [1, 2\n")


def test_validate_exit_codes(tmp_path, capsys):
    assert main(["validate", str(write_config(tmp_path, TOY))]) == 0
    bad = tmp_path / "bad.yaml"
    bad.write_text(TOY.replace("initial: 3", "initial: 0"))
    assert main(["validate", str(bad)]) == 1
    assert "budget > initial >= 1" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "missing.yaml")]) == 1


def test_output_dir_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv(experiment.OUTPUT_DIR_ENV, str(tmp_path / "envdir"))
    assert experiment.parse_config(TOY).output_dir == str(tmp_path / "envdir")


@pytest.fixture(scope="module")
def toy_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("toy")
    cfg = write_config(tmp, TOY)
    assert main(["run", str(cfg)]) == 0
    return tmp / "out", cfg


def test_file_counts(toy_run):
    out, _ = toy_run
    assert len(list((out / "records").glob("*.jsonl"))) == 6
    assert (out / "curves.csv").exists() and (out / "results.json").exists()


def test_record_format(toy_run):
    out, _ = toy_run
    lines = experiment.read_records(out / "records" / "fairbo_seed0.jsonl")
    assert [r["iteration"] for r in lines] == list(range(1, 9))
    first = lines[0]
    assert set(first) >= {"iteration", "phase", "config", "objective", "constraints", "feasible", "best_feasible"}
    assert set(first["config"]) == {"x1", "x2"} and set(first["constraints"]) == {"DSP"}


def test_initial_design_shared_in_records(toy_run):
    out, _ = toy_run
    for seed in (0, 1):
        heads = [[r["config"] for r in experiment.read_records(out / "records" / f"{s}_seed{seed}.jsonl")[:3]]
                 for s in ("fairbo", "bo", "rs")]
        assert heads[0] == heads[1] == heads[2]


def test_rerun_is_byte_identical(toy_run, tmp_path):
    out, cfg = toy_run
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "again")]) == 0
    for f in (out / "records").glob("*.jsonl"):
        assert f.read_bytes() == (tmp_path / "again" / "records" / f.name).read_bytes()


def test_curves_match_rescan(toy_run):
    out, _ = toy_run
    with open(out / "curves.csv") as fh:
        rows = list(csv.DictReader(fh))
    per_run = {}
    for f in (out / "records").glob("*.jsonl"):
        strategy, seed = f.stem.split("_seed")
        best, curve = None, []
        with open(f) as fh:
            for line in fh:
                r = json.loads(line)
                if r["feasible"] and r["valid"]:
                    best = r["objective"] if best is None else min(best, r["objective"])
                curve.append(best)
                assert r["best_feasible"] == best
        per_run[(strategy, int(seed))] = curve
    for row in rows:
        v = per_run[(row["strategy"], int(row["seed"]))][int(row["iteration"]) - 1]
        assert (row["best_feasible_error"] == "") == (v is None)
        if v is not None:
            assert float(row["best_feasible_error"]) == v
    with open(out / "curves_median.csv") as fh:
        for row in csv.DictReader(fh):
            i = int(row["iteration"]) - 1
            vals = [c[i] for (s, _), c in per_run.items() if s == row["strategy"] and c[i] is not None]
            if vals:
                assert float(row["median_best_feasible_error"]) == pytest.approx(statistics.median(vals), abs=0)
            else:
                assert row["median_best_feasible_error"] == ""


def test_summarize(toy_run, capsys):
    out, _ = toy_run
    rows = experiment.summarize(out)
    assert [r["strategy"] for r in rows] == ["bo", "fairbo", "rs"]
    for r in rows:
        if r["final_best_mean"] is not None:
            assert r["ci_low"] <= r["final_best_mean"] <= r["ci_high"]
    assert experiment.summarize(out) == rows  # deterministic under the summary seed
    assert main(["summarize", str(out)]) == 0
    assert "fairbo" in capsys.readouterr().out


def test_summarize_single_seed_and_all_infeasible(tmp_path):
    rec = tmp_path / "records"
    rec.mkdir()
    one = [{"iteration": 1, "phase": "initial", "objective": 0.3, "feasible": True, "valid": True},
           {"iteration": 2, "phase": "ei", "objective": 0.2, "feasible": True, "valid": True}]
    none = [{"iteration": i, "phase": "initial", "objective": 0.1, "feasible": False, "valid": True}
            for i in (1, 2)]
    (rec / "fairbo_seed0.jsonl").write_text("".join(json.dumps(r) + "\n" for r in one))
    for seed in (0, 1):
        (rec / f"bo_seed{seed}.jsonl").write_text("".join(json.dumps(r) + "\n" for r in none))
    rows = {r["strategy"]: r for r in experiment.summarize(tmp_path)}
    assert rows["fairbo"]["ci_low"] == rows["fairbo"]["ci_high"] == rows["fairbo"]["final_best_mean"] == 0.2
    assert rows["fairbo"]["median_first_feasible"] == 1
    assert rows["bo"]["median_first_feasible"] is None
    assert rows["bo"]["final_best_mean"] is None


def test_summarize_errors(tmp_path):
    with pytest.raises(LoadError):
        experiment.summarize(tmp_path)
    rec = tmp_path / "records"
    rec.mkdir()
    (rec / "rs_seed0.jsonl").write_text("{not json\n")
    with pytest.raises(LoadError, match="rs_seed0"):
        experiment.summarize(tmp_path)
    assert main(["summarize", str(tmp_path)]) == 1


def test_bootstrap_interval_contains_mean():
    rng = np.random.default_rng(0)
    values = rng.normal(size=12)
    lo, hi = experiment.bootstrap_mean_ci(values, np.random.default_rng(1))
    assert lo <= values.mean() <= hi


def test_partial_failure_keeps_other_runs(tmp_path, monkeypatch):
    real = experiment.build_pipeline

    def broken(cfg, seed, dataset=None):
        if seed == 1:
            raise RuntimeError("disk on fire")
        return real(cfg, seed, dataset)

    monkeypatch.setattr(experiment, "build_pipeline", broken)
    cfg = write_config(tmp_path, TOY)
    assert main(["run", str(cfg), "--strategy", "rs"]) == 2
    out = tmp_path / "out"
    assert [f.name for f in (out / "records").iterdir()] == ["rs_seed0.jsonl"]
    failed = json.loads((out / "results.json").read_text())["failed"]
    assert failed == [{"strategy": "rs", "seed": 1, "error": "RuntimeError: disk on fire"}]


def test_seed_offset_and_jobs(tmp_path):
    cfg = write_config(tmp_path, TOY)
    assert main(["run", str(cfg), "--strategy", "rs", "--seed-offset", "10", "--jobs", "2"]) == 0
    names = sorted(f.name for f in (tmp_path / "out" / "records").iterdir())
    assert names == ["rs_seed10.jsonl", "rs_seed11.jsonl"]


def test_synthetic_learner_run(tmp_path):
    cfg = write_config(tmp_path, SYNTHETIC)
    assert main(["run", str(cfg)]) == 0
    for r in experiment.read_records(tmp_path / "out" / "records" / "fairbo_seed4.jsonl"):
        assert set(r["config"]) == {"iterations", "alpha"}
        assert 0 <= r["objective"] <= 1
