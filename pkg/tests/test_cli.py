from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from tea_lab import cli
from tea_lab.metrics import two_sample_ttest
from tea_lab.runner import (
    ConfigError, ExperimentConfig, TableRow, cmd_report, parse_config, read_results_csv, summarize,
    write_results_csv,
)

TINY = {
    "schema_version": 1,
    "dataset": {"generator": {"entities": 40, "latent_dim": 4}},
    "variants": ["Reg", "TEA"],
    "train": {"latent_dim": 4, "max_iters": 60, "val_period": 20},
    "runs": 2,
    "seed": 5,
}


def write_cfg(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def csv_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# config schema

def test_defaults_follow_the_protocol():
    cfg = ExperimentConfig()
    assert cfg.runs == 10
    assert cfg.sweep.nu == [0.0, 3e-5, 3e-4, 3e-3, 3e-2]
    assert cfg.sweep.lam == [round(0.1 * k, 1) for k in range(11)]


def test_config_round_trips_through_json():
    cfg = parse_config(TINY)
    assert parse_config(cfg.to_json()) == cfg


@pytest.mark.parametrize("patch", [
    {"runz": 3},
    {"train": {"learning_rate": 0.1}},
    {"dataset": {"generator": {"entites": 10}}},
    {"sweep": {"axes": "nu"}},
    {"stability": {"n_gird": [50]}},
    {"schema_version": 2},
    {"variants": ["TEA+Maybe"]},
    {"reference": "FEA"},
    {"dataset": {}},
])
def test_bad_configs_are_rejected(patch):
    with pytest.raises(ConfigError):
        parse_config({**TINY, **patch})


# exit codes and outputs

def test_train_writes_results_and_refuses_overwrite(tmp_path):
    cfg = write_cfg(tmp_path, TINY)
    out = tmp_path / "out"
    assert cli.run(["train", "--config", cfg, "--out", str(out), "--jobs", "1"]) == 0
    rows = read_results_csv(out / "results.csv")
    metrics = {r[2] for r in rows}
    assert len(rows) == 2 * 2 * len(metrics) - 2  # Reg has no reconstruction metric
    assert {(r[0], r[1]) for r in rows} == {(v, s) for v in ("Reg", "TEA") for s in (0, 1)}
    for v in ("Reg", "TEA"):
        for s in (0, 1):
            run_dir = out / "runs" / v / f"seed_{s}"
            assert (run_dir / "checkpoint" / "manifest.json").exists()
            logs = [json.loads(line) for line in (run_dir / "stage_log.jsonl").read_text().splitlines()]
            assert logs and {"iteration", "stage", "val_loss"} <= set(logs[0])
    assert cli.run(["train", "--config", cfg, "--out", str(out)]) == 3
    assert cli.run(["train", "--config", cfg, "--out", str(out), "--force", "--jobs", "1"]) == 0


def test_train_is_byte_deterministic_across_job_counts(tmp_path):
    cfg = write_cfg(tmp_path, TINY)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.run(["train", "--config", cfg, "--out", str(a), "--jobs", "1"]) == 0
    assert cli.run(["train", "--config", cfg, "--out", str(b), "--jobs", "2"]) == 0
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()


def test_seed_flag_changes_results(tmp_path):
    cfg = write_cfg(tmp_path, {**TINY, "variants": ["Reg"], "runs": 1})
    a, b = tmp_path / "a", tmp_path / "b"
    cli.run(["train", "--config", cfg, "--out", str(a), "--jobs", "1"])
    cli.run(["train", "--config", cfg, "--out", str(b), "--jobs", "1", "--seed", "6"])
    assert (a / "results.csv").read_bytes() != (b / "results.csv").read_bytes()


def test_exit_codes(tmp_path, capsys):
    bad = write_cfg(tmp_path, {**TINY, "extra": 1}, "bad.json")
    assert cli.run(["train", "--config", bad, "--out", str(tmp_path / "x")]) == 1
    diverge = write_cfg(tmp_path, {**TINY, "train": {**TINY["train"], "lr": 1e200}}, "div.json")
    with np.errstate(all="ignore"):
        assert cli.run(["train", "--config", diverge, "--out", str(tmp_path / "y"), "--jobs", "1"]) == 2
    assert "run 0" in capsys.readouterr().err
    gru = write_cfg(tmp_path, {**TINY, "train": {**TINY["train"], "model": "gru"}}, "gru.json")
    assert cli.run(["stability", "--config", gru, "--out", str(tmp_path / "z")]) == 1
    assert cli.run(["report", str(tmp_path / "nowhere")]) == 3
    sweep_n = write_cfg(tmp_path, {**TINY, "sweep": {"axis": "n", "n": [8]}}, "n.json")
    assert cli.run(["sweep", "--config", sweep_n, "--out", str(tmp_path / "w")]) == 1


def test_log_level_validation(tmp_path, monkeypatch):
    monkeypatch.setenv("TEA_LAB_LOG", "loud")
    assert cli.run(["generate", "--generator", "adversarial-blocks", "--out", str(tmp_path)]) == 1


def test_generate_adversarial(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.run(["generate", "--generator", "adversarial-blocks", "--out", str(a)]) == 0
    assert cli.run(["generate", "--generator", "adversarial-blocks", "--out", str(b)]) == 0
    rows = csv_rows(a / "dataset.csv")
    assert len(rows) - 1 == 1000 * 1
    assert sum(1 for c in rows[0] if c.startswith("y")) == 50
    assert (a / "dataset.csv").read_bytes() == (b / "dataset.csv").read_bytes()
    meta = json.loads((a / "dataset.json").read_text())
    assert meta["dims"]["targets"] == 50


def test_generate_from_config_row_count(tmp_path):
    cfg = write_cfg(tmp_path, TINY)
    assert cli.run(["generate", "--config", cfg, "--out", str(tmp_path / "g")]) == 0
    assert len(csv_rows(tmp_path / "g" / "dataset.csv")) - 1 == 40 * 7


def test_lambda_sweep_tables(tmp_path):
    doc = {**TINY, "sweep": {"axis": "lambda", "lambda": [0.0, 1.0], "variants": ["TEA"], "baselines": ["Reg"]}}
    cfg = write_cfg(tmp_path, doc)
    assert cli.run(["sweep", "--config", cfg, "--out", str(tmp_path / "s"), "--jobs", "1"]) == 0
    table = csv_rows(tmp_path / "s" / "sweep_lambda.csv")
    assert table[0] == ["lambda", "variant", "seed", "metric", "value"]
    variants = {r[1] for r in table[1:]}
    assert variants == {"TEA+NoStaged", "Reg"}
    summary = csv_rows(tmp_path / "s" / "sweep_lambda_summary.csv")
    assert summary[0] == ["lambda", "variant", "metric", "mean", "se", "n"]
    assert all(r[-1] == "2" for r in summary[1:])
    # the direct predictor ignores lambda, so both grid points carry the same runs
    reg = {lam: sorted(r[2:] for r in table[1:] if r[1] == "Reg" and r[0] == lam) for lam in ("0.0", "1.0")}
    assert reg["0.0"] and reg["0.0"] == reg["1.0"]


def test_stability_command(tmp_path):
    doc = {**TINY, "stability": {"n_grid": [50, 100, 200], "replacements": 5, "probe_size": 100,
                                 "entities": 600, "pretrain_fraction": 0.2}}
    cfg = write_cfg(tmp_path, doc)
    assert cli.run(["stability", "--config", cfg, "--out", str(tmp_path / "st")]) == 0
    rep = json.loads((tmp_path / "st" / "stability.json").read_text())
    assert "slope" in rep and "slope_se" in rep
    bound = [rep["bound"][str(n)] for n in (50, 100, 200)]
    assert bound[0] > bound[1] > bound[2]
    rows = csv_rows(tmp_path / "st" / "stability.csv")
    assert rows[0] == ["N", "trial", "replacement", "gamma", "gamma_hat", "bound"]
    assert len(rows) - 1 == 3 * 5


# reporting

def test_report_single_variant_has_no_significance_column(tmp_path):
    write_results_csv(tmp_path / "results.csv", [("TEA", s, "mse", 0.1 + s) for s in range(3)])
    txt, _ = cmd_report(tmp_path)
    assert "p vs" not in txt.read_text() and "*" not in txt.read_text()


def test_report_identical_sets_give_p_one(tmp_path):
    vals = [0.3, 0.5, 0.4]
    write_results_csv(tmp_path / "results.csv",
                      [(v, s, "mse", x) for v in ("Reg", "TEA") for s, x in enumerate(vals)])
    txt, tab = cmd_report(tmp_path, reference="Reg")
    rows = csv_rows(tab)
    tea = next(r for r in rows if r[1] == "TEA")
    assert float(tea[5]) == 1.0 and tea[6] == "0"
    assert "*" not in txt.read_text()
    assert cli.run(["report", str(tmp_path)]) == 3
    assert cli.run(["report", str(tmp_path), "--force", "--reference", "Reg"]) == 0


def test_asterisks_match_direct_ttests():
    g = np.random.default_rng(0)
    rows = []
    for v, shift in (("Reg", 0.0), ("A", 0.02), ("B", 1.0), ("C", -0.7)):
        rows += [(v, s, "mse", float(x)) for s, x in enumerate(g.normal(shift, 0.5, 10))]
    tables = summarize(rows, reference="Reg")
    ref = [r[3] for r in rows if r[0] == "Reg"]
    for row in tables["mse"]:
        if row.variant == "Reg":
            assert row.p_value is None
            continue
        _, p = two_sample_ttest([r[3] for r in rows if r[0] == row.variant], ref)
        assert row.p_value == p and row.significant == (p < 0.05)
    assert [r.best for r in tables["mse"]] == [False, False, False, True]


def test_partial_runs_warn():
    rows = [("Reg", s, "mse", 0.1 * s) for s in range(3)] + [("TEA", 0, "mse", 0.2), ("TEA", 1, "mse", 0.3)]
    with pytest.warns(UserWarning, match="partial"):
        summarize(rows, "Reg", expected_runs=3)


def test_auc_tables_prefer_higher_values():
    rows = [(v, s, "roc_auc", x) for v, x in (("Reg", 0.6), ("TEA", 0.7)) for s in range(2)]
    best = {r.variant: r.best for r in summarize(rows)["roc_auc"]}
    assert best == {"Reg": False, "TEA": True}
    assert isinstance(summarize(rows)["roc_auc"][0], TableRow)
