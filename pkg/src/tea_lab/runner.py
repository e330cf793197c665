"""Experiment configuration, multi-seed orchestration and result tables.

Configs are JSON documents with a ``schema_version`` field. Every section is
checked against a fixed key set so a typo fails loudly instead of silently
falling back to a default.

Per-run seeds come from the seed tree: run ``r`` uses
``child_seed(seed, "split", r)`` for its entity split and
``child_seed(seed, "train", r)`` for training, so every output depends only
on the config and never on job scheduling.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import components as comp
from .datagen import GeneratorSpec, RawSequences, generate_raw, read_dataset, window_and_split, write_dataset
from .metrics import two_sample_ttest
from .seeding import child_seed
from .stability import StabilityConfig, stability_report
from .trainer import (
    TrainConfig, Variant, arch_spec_for, build_plan, tune_hyperparameters, train_components, train_variant,
    validate_plan,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SWEEP_AXES = ("nu", "lambda", "n")
DEFAULT_NU_GRID = [0.0, 3e-5, 3e-4, 3e-3, 3e-2]
DEFAULT_LAMBDA_GRID = [round(0.1 * k, 1) for k in range(11)]
LOWER_IS_BETTER = ("mse", "recon_mse")


class ConfigError(ValueError):
    pass


class RunError(RuntimeError):
    """A training job failed; the message names the variant and run."""


def _dataclass_keys(cls) -> set[str]:
    return {f.name for f in fields(cls)}


def _reject_unknown(section: str, given: dict, allowed: set[str]) -> None:
    if not isinstance(given, dict):
        raise ConfigError(f"section {section!r} must be an object")
    extra = sorted(set(given) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(extra)}")


@dataclass
class DatasetConfig:
    generator: GeneratorSpec | None = None
    path: str | None = None
    w_x: int | None = None
    w_y: int | None = None
    split: tuple[float, float, float] | None = None
    # False: the generator seed is derived from the experiment seed
    generator_seeded: bool = False

    def windows(self, meta: dict | None = None) -> tuple[int, int]:
        if self.w_x is not None and self.w_y is not None:
            return self.w_x, self.w_y
        if self.generator is not None:
            return self.generator.w_x, self.generator.w_y
        if meta and meta.get("windows"):
            return tuple(meta["windows"])
        raise ConfigError("dataset windows w_x/w_y are not known")

    def fractions(self, meta: dict | None = None):
        if self.split is not None:
            return self.split
        if self.generator is not None:
            return self.generator.split
        if meta and meta.get("split_fractions"):
            return tuple(meta["split_fractions"])
        return (0.8, 0.0, 0.2)


@dataclass
class SweepConfig:
    axis: str = "lambda"
    nu: list[float] = field(default_factory=lambda: list(DEFAULT_NU_GRID))
    lam: list[float] = field(default_factory=lambda: list(DEFAULT_LAMBDA_GRID))
    n: list[int] = field(default_factory=list)
    variants: list[str] = field(default_factory=lambda: ["TEA"])
    baselines: list[str] = field(default_factory=lambda: ["Reg"])

    def grid(self, axis: str | None = None) -> list:
        return list({"nu": self.nu, "lambda": self.lam, "n": self.n}[axis or self.axis])


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=lambda: DatasetConfig(generator=GeneratorSpec()))
    variants: list[str] = field(default_factory=lambda: ["Reg", "TEA"])
    train: TrainConfig = field(default_factory=TrainConfig)
    runs: int = 10
    seed: int = 0
    reference: str | None = None
    tune: bool = False
    sweep: SweepConfig = field(default_factory=SweepConfig)
    stability: StabilityConfig = field(default_factory=StabilityConfig)
    stability_entities: int = 3000
    stability_pretrain_fraction: float = 0.2

    @property
    def reference_variant(self) -> str:
        if self.reference is not None:
            return self.reference
        return "Reg" if "Reg" in self.variants else self.variants[0]

    def to_json(self) -> dict:
        ds = {k: v for k, v in asdict(self.dataset).items() if v is not None and k != "generator_seeded"}
        if self.dataset.generator is not None:
            ds["generator"] = self.dataset.generator.to_json()
            if not self.dataset.generator_seeded:
                del ds["generator"]["seed"]
        if "split" in ds:
            ds["split"] = list(ds["split"])
        sweep = asdict(self.sweep)
        sweep["lambda"] = sweep.pop("lam")
        stab = asdict(self.stability)
        stab["n_grid"] = list(stab["n_grid"])
        stab["entities"] = self.stability_entities
        stab["pretrain_fraction"] = self.stability_pretrain_fraction
        return {
            "schema_version": SCHEMA_VERSION, "dataset": ds, "variants": list(self.variants),
            "train": asdict(self.train), "runs": self.runs, "seed": self.seed,
            "reference": self.reference, "tune": self.tune, "sweep": sweep, "stability": stab,
        }


TOP_KEYS = {"schema_version", "dataset", "variants", "train", "runs", "seed", "reference", "tune", "sweep", "stability"}
DATASET_KEYS = {"generator", "path", "w_x", "w_y", "split"}
SWEEP_KEYS = {"axis", "nu", "lambda", "n", "variants", "baselines"}
STABILITY_KEYS = _dataclass_keys(StabilityConfig) | {"entities", "pretrain_fraction"}


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a config document and build an :class:`ExperimentConfig`."""
    _reject_unknown("config", doc, TOP_KEYS)
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    try:
        ds_doc = doc.get("dataset", {"generator": {}})
        _reject_unknown("dataset", ds_doc, DATASET_KEYS)
        gen = None
        if "generator" in ds_doc:
            gdoc = ds_doc["generator"]
            _reject_unknown("dataset.generator", gdoc, _dataclass_keys(GeneratorSpec))
            gen = GeneratorSpec.from_json(gdoc)
        if (gen is None) == ("path" not in ds_doc):
            raise ConfigError("dataset needs exactly one of 'generator' or 'path'")
        dataset = DatasetConfig(
            generator=gen, path=ds_doc.get("path"), w_x=ds_doc.get("w_x"), w_y=ds_doc.get("w_y"),
            split=tuple(ds_doc["split"]) if "split" in ds_doc else None,
            generator_seeded=gen is not None and "seed" in ds_doc["generator"],
        )
        tdoc = doc.get("train", {})
        _reject_unknown("train", tdoc, _dataclass_keys(TrainConfig))
        train = TrainConfig(**tdoc)
        sdoc = doc.get("sweep", {})
        _reject_unknown("sweep", sdoc, SWEEP_KEYS)
        sdoc = dict(sdoc)
        if "lambda" in sdoc:
            sdoc["lam"] = sdoc.pop("lambda")
        sweep = SweepConfig(**sdoc)
        if sweep.axis not in SWEEP_AXES:
            raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {sweep.axis!r}")
        stdoc = dict(doc.get("stability", {}))
        _reject_unknown("stability", stdoc, STABILITY_KEYS)
        entities = stdoc.pop("entities", 3000)
        pretrain = stdoc.pop("pretrain_fraction", 0.2)
        stability = StabilityConfig(**stdoc)
        cfg = ExperimentConfig(
            dataset=dataset, variants=list(doc.get("variants", ["Reg", "TEA"])), train=train,
            runs=int(doc.get("runs", 10)), seed=int(doc.get("seed", 0)), reference=doc.get("reference"),
            tune=bool(doc.get("tune", False)), sweep=sweep, stability=stability,
            stability_entities=int(entities), stability_pretrain_fraction=float(pretrain),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.runs < 1:
        raise ConfigError("runs must be at least 1")
    if not cfg.variants:
        raise ConfigError("variant list is empty")
    for v in cfg.variants + sweep.variants + sweep.baselines:
        try:
            Variant.parse(v)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if cfg.reference is not None and cfg.reference not in cfg.variants:
        raise ConfigError(f"reference variant {cfg.reference!r} is not in the variant list")
    if not 0.0 < cfg.stability_pretrain_fraction < 1.0:
        raise ConfigError("stability pretrain_fraction must lie in (0, 1)")
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(doc)


# datasets

def load_raw(cfg: ExperimentConfig) -> tuple[RawSequences, dict]:
    if cfg.dataset.path is not None:
        return read_dataset(cfg.dataset.path)
    return generate_raw(experiment_generator(cfg)), {}


def experiment_generator(cfg: ExperimentConfig) -> GeneratorSpec:
    gen = cfg.dataset.generator
    if gen is None:
        raise ConfigError("dataset has no generator")
    return gen if cfg.dataset.generator_seeded else replace(gen, seed=child_seed(cfg.seed, "data"))


def run_dataset(cfg: ExperimentConfig, raw: RawSequences, meta: dict, run: int):
    w_x, w_y = cfg.dataset.windows(meta)
    return window_and_split(raw, w_x, w_y, cfg.dataset.fractions(meta), seed=child_seed(cfg.seed, "split", run))


def run_train_config(cfg: ExperimentConfig, run: int, **overrides) -> TrainConfig:
    return replace(cfg.train, seed=child_seed(cfg.seed, "train", run), **overrides)


# training jobs

def check_variants(labels, data, tcfg: TrainConfig) -> None:
    """Fail fast on architecture or plan problems before any job starts."""
    for label in labels:
        v = Variant.parse(label)
        try:
            arch_spec_for(v, data, tcfg)
            validate_plan(build_plan(v, tcfg.model))
        except ValueError as exc:
            raise ConfigError(f"{label}: {exc}") from exc


def _train_job(args):
    label, run, data, tcfg = args
    try:
        cs, result = train_variant(Variant.parse(label), data, tcfg)
    except Exception as exc:  # re-raised with the job identity attached
        raise RunError(f"{label} run {run}: {type(exc).__name__}: {exc}") from exc
    return {
        "variant": label, "run": run, "metrics": result.metrics.as_dict(), "logs": result.stage_logs,
        "spec": cs.spec, "seed": cs.seed, "stage_reached": cs.stage_reached, "params": cs.snapshot(),
    }


def execute(jobs: list, n_jobs: int | None) -> list[dict]:
    """Run jobs, serially or in a process pool; results keep submission order."""
    n_jobs = n_jobs or os.cpu_count() or 1
    if n_jobs <= 1 or len(jobs) <= 1:
        return [_train_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(_train_job, jobs))


def _fmt(v) -> str:
    return repr(float(v))


def write_results_csv(path: Path, rows: list[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "seed", "metric", "value"])
        for variant, seed, metric, value in rows:
            w.writerow([variant, seed, metric, _fmt(value)])


def read_results_csv(path: Path) -> list[tuple[str, int, str, float]]:
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        return [(r["variant"], int(r["seed"]), r["metric"], float(r["value"])) for r in rd]


def _guard(paths: list[Path], force: bool) -> None:
    existing = [str(p) for p in paths if p.exists()]
    if existing and not force:
        raise FileExistsError(f"refusing to overwrite {', '.join(existing)} (pass --force)")


def _tuned(cfg: ExperimentConfig, raw, meta) -> TrainConfig:
    if not cfg.tune:
        return cfg.train
    ref = "Reg" if "Reg" in cfg.variants else cfg.variants[0]
    data = run_dataset(cfg, raw, meta, 0)
    tuned = tune_hyperparameters(Variant.parse(ref), data, base=cfg.train, seed=child_seed(cfg.seed, "tune"))
    log.info("tuned setting from %s reused for every variant: lr=%g batch=%d nu=%g layers=%d",
             ref, tuned.lr, tuned.batch_size, tuned.nu, tuned.layers)
    return tuned


def cmd_train(cfg: ExperimentConfig, out: str | Path, jobs: int | None = None, force: bool = False) -> Path:
    """Train every variant for every run; write checkpoints, stage logs and ``results.csv``."""
    out = Path(out)
    results = out / "results.csv"
    _guard([results, out / "runs"], force)
    raw, meta = load_raw(cfg)
    check_variants(cfg.variants, run_dataset(cfg, raw, meta, 0), cfg.train)
    base = _tuned(cfg, raw, meta)
    work = []
    for run in range(cfg.runs):
        data = run_dataset(cfg, raw, meta, run)
        tcfg = replace(base, seed=child_seed(cfg.seed, "train", run))
        work.extend((label, run, data, tcfg) for label in cfg.variants)
    done = execute(work, jobs)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for res in sorted(done, key=lambda r: (cfg.variants.index(r["variant"]), r["run"])):
        run_dir = out / "runs" / res["variant"] / f"seed_{res['run']}"
        cs = comp.init_components(res["spec"], res["seed"])
        cs.restore(res["params"])
        cs.stage_reached = res["stage_reached"]
        comp.save_checkpoint(cs, run_dir / "checkpoint")
        with open(run_dir / "stage_log.jsonl", "w") as fh:
            for entry in res["logs"]:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
        rows.extend((res["variant"], res["run"], m, v) for m, v in sorted(res["metrics"].items()))
    write_results_csv(results, rows)
    (out / "config.json").write_text(json.dumps(cfg.to_json(), indent=2, sort_keys=True) + "\n")
    return results


# sweeps

def cmd_sweep(cfg: ExperimentConfig, out: str | Path, axis: str | None = None,
              jobs: int | None = None, force: bool = False) -> Path:
    """Vary one setting and record per-run metrics plus mean and SE per grid point.

    Lambda sweeps train Stage 3 only; N sweeps subsample the training split.
    """
    axis = axis or cfg.sweep.axis
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    grid = cfg.sweep.grid(axis)
    if not grid:
        raise ConfigError(f"sweep grid for {axis!r} is empty")
    if axis == "n" and min(grid) < cfg.train.batch_size:
        raise ConfigError(f"N={min(grid)} is smaller than the minibatch size {cfg.train.batch_size}")
    out = Path(out)
    table, summary = out / f"sweep_{axis}.csv", out / f"sweep_{axis}_summary.csv"
    _guard([table, summary], force)
    variants = [_stage3_only(v) if axis == "lambda" else v for v in cfg.sweep.variants]
    raw, meta = load_raw(cfg)
    work, keys = [], []
    for run in range(cfg.runs):
        data = run_dataset(cfg, raw, meta, run)
        for value in grid:
            over = {"nu": {"nu": value}, "lambda": {"lam": value}, "n": {"n_train": int(value)}}[axis]
            tcfg = run_train_config(cfg, run, **over)
            for label in variants:
                work.append((label, run, data, tcfg))
                keys.append((value, label, run))
            for label in cfg.sweep.baselines:
                # lambda does not enter a direct predictor: train it once per run
                if axis == "lambda" and value != grid[0]:
                    keys.append((value, label, run))
                    work.append(None)
                    continue
                work.append((label, run, data, tcfg))
                keys.append((value, label, run))
    check_variants(variants + list(cfg.sweep.baselines), run_dataset(cfg, raw, meta, 0), cfg.train)
    real = [w for w in work if w is not None]
    done = iter(execute(real, jobs))
    results, last = [], {}
    for key, w in zip(keys, work):
        res = next(done) if w is not None else last[(key[1], key[2])]
        last[(key[1], key[2])] = res
        results.append((key, res["metrics"]))
    out.mkdir(parents=True, exist_ok=True)
    order = variants + list(cfg.sweep.baselines)
    results.sort(key=lambda kr: (grid.index(kr[0][0]), order.index(kr[0][1]), kr[0][2]))
    with open(table, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([axis, "variant", "seed", "metric", "value"])
        for (value, label, run), metrics in results:
            for m, v in sorted(metrics.items()):
                w.writerow([_fmt(value), label, run, m, _fmt(v)])
    groups: dict[tuple, list[float]] = {}
    for (value, label, _), metrics in results:
        for m, v in metrics.items():
            groups.setdefault((value, label, m), []).append(v)
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([axis, "variant", "metric", "mean", "se", "n"])
        for value in grid:
            for label in order:
                for m in sorted({k[2] for k in groups if k[:2] == (value, label)}):
                    vals = groups[(value, label, m)]
                    mean, se = mean_se(vals)
                    w.writerow([_fmt(value), label, m, _fmt(mean), _fmt(se), len(vals)])
    return summary


def _stage3_only(label: str) -> str:
    v = Variant.parse(label)
    if v.kind in ("Base", "Reg") or v.no_staged or v.order is not None:
        return label
    return Variant(v.kind, no_staged=True).label


# stability

def stability_pool(cfg: ExperimentConfig):
    """Pretrain a linear TEA on part of a large latent-factor sample and return
    its frozen ``W_u``, ``W_e`` plus the held-back pool (row-major)."""
    if cfg.train.model != "linear":
        raise ConfigError(f"stability analysis needs a linear architecture, got model={cfg.train.model!r}")
    if cfg.train.latent_dim is None:
        raise ConfigError("stability analysis needs train.latent_dim")
    gen = cfg.dataset.generator or GeneratorSpec()
    gen = replace(gen, entities=cfg.stability_entities, binary_fraction=0.0,
                  seed=child_seed(cfg.seed, "stability/data"))
    frac = cfg.stability_pretrain_fraction
    data = window_and_split(generate_raw(gen), gen.w_x, gen.w_y, (frac, 0.0, 1.0 - frac),
                            seed=child_seed(cfg.seed, "stability/split"))
    cs, _, _ = train_components(Variant("TEA"), data, replace(cfg.train, seed=child_seed(cfg.seed, "stability/train")))
    pool = data.part("test")
    return cs["u"].params["W"].value, cs["e"].params["W"].value, pool.x_flat, pool.y_flat


def cmd_stability(cfg: ExperimentConfig, out: str | Path, force: bool = False) -> Path:
    out = Path(out)
    report_path, table = out / "stability.json", out / "stability.csv"
    _guard([report_path, table], force)
    W_u, W_e, px, py = stability_pool(cfg)
    scfg = replace(cfg.stability, seed=child_seed(cfg.seed, "stability"))
    report = stability_report(W_u, W_e, px, py, scfg)
    rows = report.pop("rows")
    out.mkdir(parents=True, exist_ok=True)
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    with open(table, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "trial", "replacement", "gamma", "gamma_hat", "bound"])
        for r in rows:
            n = str(r["N"])
            w.writerow([r["N"], r["trial"], r["replacement"], _fmt(r["gamma"]),
                        _fmt(report["gamma_hat"][n]), _fmt(report["bound"][n])])
    return report_path


# reporting

def mean_se(values) -> tuple[float, float]:
    a = np.asarray(values, dtype=np.float64)
    se = float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else math.nan
    return float(a.mean()), se


@dataclass
class TableRow:
    variant: str
    n: int
    mean: float
    se: float
    p_value: float | None = None
    significant: bool = False
    best: bool = False


def summarize(rows: list[tuple], reference: str | None = None, expected_runs: int | None = None) -> dict[str, list[TableRow]]:
    """Per-metric tables of mean and SE with Welch tests against ``reference``."""
    variants = list(dict.fromkeys(r[0] for r in rows))
    metrics = sorted({r[2] for r in rows})
    values: dict[tuple[str, str], dict[int, float]] = {}
    for variant, seed, metric, value in rows:
        values.setdefault((variant, metric), {})[seed] = value
    ref = reference if reference in variants else (variants[0] if variants else None)
    tables = {}
    for m in metrics:
        present = [v for v in variants if (v, m) in values]
        table = []
        for v in present:
            vals = [values[(v, m)][s] for s in sorted(values[(v, m)])]
            if expected_runs is not None and len(vals) != expected_runs:
                warnings.warn(f"{v} has {len(vals)} runs of {m}, expected {expected_runs}; table is partial",
                              stacklevel=2)
            mean, se = mean_se(vals)
            row = TableRow(v, len(vals), mean, se)
            if len(present) > 1 and v != ref and (ref, m) in values and len(vals) > 1 and len(values[(ref, m)]) > 1:
                ref_vals = [values[(ref, m)][s] for s in sorted(values[(ref, m)])]
                _, p = two_sample_ttest(vals, ref_vals)
                row.p_value, row.significant = p, p < 0.05
            table.append(row)
        if table:
            pick = min if m in LOWER_IS_BETTER or m.startswith("mse") else max
            best = pick(r.mean for r in table)
            for r in table:
                r.best = r.mean == best
        tables[m] = table
    return tables


def render_text(tables: dict[str, list[TableRow]], reference: str | None) -> str:
    buf = io.StringIO()
    multi = any(len(t) > 1 for t in tables.values())
    for m, table in tables.items():
        buf.write(f"{m}\n")
        width = max(len("variant"), *(len(r.variant) for r in table))
        head = f"  {'variant':<{width}}  {'mean':>12}  {'se':>10}  {'n':>3}"
        if multi and len(table) > 1:
            head += f"  {'p vs ' + str(reference):>14}"
        buf.write(head + "\n")
        for r in table:
            mark = ("*" if r.significant else "") + (" (best)" if r.best and len(table) > 1 else "")
            line = f"  {r.variant:<{width}}  {r.mean:>12.6g}  {r.se:>10.3g}  {r.n:>3}"
            if multi and len(table) > 1:
                line += f"  {'' if r.p_value is None else format(r.p_value, '.3g'):>14}"
            buf.write(line + ("  " + mark if mark else "") + "\n")
        buf.write("\n")
    return buf.getvalue()


def cmd_report(results_dir: str | Path, reference: str | None = None, force: bool = False) -> tuple[Path, Path]:
    results_dir = Path(results_dir)
    src = results_dir / "results.csv"
    if not src.exists():
        raise FileNotFoundError(f"no results.csv in {results_dir}")
    txt, tab = results_dir / "report.txt", results_dir / "report.csv"
    _guard([txt, tab], force)
    expected = None
    cfg_path = results_dir / "config.json"
    if cfg_path.exists():
        saved = json.loads(cfg_path.read_text())
        expected = saved.get("runs")
        if reference is None:
            reference = saved.get("reference") or ("Reg" if "Reg" in saved.get("variants", []) else None)
    rows = read_results_csv(src)
    tables = summarize(rows, reference, expected)
    ref = reference if reference in {r[0] for r in rows} else (rows[0][0] if rows else None)
    txt.write_text(render_text(tables, ref))
    with open(tab, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "variant", "n", "mean", "se", "p_value", "significant", "best"])
        for m, table in tables.items():
            for r in table:
                w.writerow([m, r.variant, r.n, _fmt(r.mean), _fmt(r.se),
                            "" if r.p_value is None else _fmt(r.p_value), int(r.significant), int(r.best)])
    return txt, tab


# dataset generation

def cmd_generate(spec: GeneratorSpec, out: str | Path, force: bool = False) -> tuple[Path, Path]:
    out = Path(out)
    csv_path = out / "dataset.csv"
    _guard([csv_path, csv_path.with_suffix(".json")], force)
    out.mkdir(parents=True, exist_ok=True)
    return write_dataset(generate_raw(spec), csv_path, (spec.w_x, spec.w_y), spec.split)
