"""Experiment harness: config loading, difficulty sweeps, single runs,
ingestion and synthetic-data export.

Everything here is reachable from the command line (`spmax.cli`) but is
plain Python, so tests and demos call it directly.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .baselines import KnapsackProblem, bruteforce, greedy_1d, linprog_mckp, mixedint_mckp
from .criterion import SuccessRegion, criterion_closed_form
from .data import (
    BootstrapSpec,
    CsvSchema,
    DataError,
    SyntheticConfig,
    estimate_stats,
    fit_bucketizer,
    generate_synthetic,
    ingest_csv,
    preset_stats,
    split_train_test,
)
from .model import PolicyCellStats, ValidationError
from .optimizer import OptimizerConfig, run

METHODS = ("spm", "bruteforce", "greedy1d", "linprog", "mixedint")

# Per-source optimizer defaults (init, learning rate, steps).  Real data
# (CSV or stats files) uses the large-scale setting.
HYPERPARAMETERS = {
    "table1_large": {"init": "uniform", "learning_rate": 0.1, "n_steps": 10_000},
    "table1_small": {"init": "explore", "learning_rate": 0.1, "n_steps": 10_000},
    "table2_case_i": {"init": "uniform", "learning_rate": 1e-2, "n_steps": 10_000},
    "table2_case_ii": {"init": "uniform", "learning_rate": 1e-2, "n_steps": 10_000},
    "bernoulli_alignment": {"init": "uniform", "learning_rate": 0.1, "n_steps": 10_000},
    "inline": {"init": "uniform", "learning_rate": 0.1, "n_steps": 10_000},
    "real": {"init": "explore", "learning_rate": 1e-3, "n_steps": 1_000_000},
}


class ConfigError(ValueError):
    """Invalid experiment configuration (exit code 1)."""


def _schema() -> dict:
    text = resources.files("spmax").joinpath("config_schema.json").read_text()
    return json.loads(text)


def validate_config(doc: dict) -> dict:
    """Check ``doc`` against the bundled JSON schema plus cross-field rules."""
    import jsonschema

    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config {where}: {exc.message}") from None
    src = doc.get("stats", {})
    sources = [k for k in ("preset", "stats_json", "inline", "inline_1d", "inline_2d", "csv") if k in src]
    if len(sources) > 1:
        raise ConfigError(f"stats: give one source, got {sources}")
    if "csv" in src and "bucketizer" not in src:
        raise ConfigError("stats: csv source needs a bucketizer")
    if "methods" in doc and not doc["methods"]:
        raise ConfigError("methods: at least one method is required")
    return doc


def load_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    doc = validate_config(doc)
    # relative data paths are taken relative to the config file
    src = doc.get("stats", {})
    for key in ("csv", "stats_json"):
        if key in src and not Path(src[key]).is_absolute():
            src[key] = str(Path(path).parent / src[key])
    return doc


def _source_kind(src: dict) -> str:
    if "preset" in src:
        return src["preset"]
    if any(k in src for k in ("inline", "inline_1d", "inline_2d")):
        return "inline"
    return "real"


def optimizer_config(doc: dict, seed: int) -> OptimizerConfig:
    """Hyperparameter defaults for the stats source, overridden by ``doc["optimizer"]``."""
    base = dict(HYPERPARAMETERS[_source_kind(doc.get("stats", {}))])
    base["explore_seed"] = seed
    base["mc_seed"] = seed
    base.update(doc.get("optimizer", {}))
    try:
        return OptimizerConfig.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"optimizer: {exc}") from None


# ---------------------------------------------------------------------------
# stats sources

def _csv_parts(src: dict, seed: int):
    schema = CsvSchema.from_dict(src.get("schema", {}))
    data = ingest_csv(src["csv"], schema)
    split = src.get("split", {})
    train, test = split_train_test(data, split.get("fraction", 0.5), split.get("seed", seed))
    bucket = src["bucketizer"]
    spec = fit_bucketizer(train, bucket["feature"], bucket["n_buckets"])
    boot = dict(src.get("bootstrap", {}))
    boot.setdefault("seed", seed)
    try:
        boot_spec = BootstrapSpec(**boot)
    except ValueError as exc:
        raise ConfigError(f"bootstrap: {exc}") from None
    kwargs = dict(
        spec=boot_spec,
        normalization=src.get("normalization", "reference_relative"),
        estimand=src.get("estimand", "bucket_total"),
        n_policies=data.n_policies,
    )
    return spec, train, test, kwargs


def load_stats(doc: dict, seed: int = 0) -> PolicyCellStats:
    src = doc.get("stats")
    if not src:
        raise ConfigError("stats: a source is required")
    try:
        if "preset" in src:
            return preset_stats(src["preset"])
        if "inline" in src:
            return PolicyCellStats.from_dict(src["inline"])
        if "inline_1d" in src:
            return PolicyCellStats.from_1d(src["inline_1d"]["mean"], src["inline_1d"]["var"])
        if "inline_2d" in src:
            p = src["inline_2d"]
            return PolicyCellStats.from_2d(p["mean_v"], p["var_v"], p["mean_c"], p["var_c"], p["rho"])
    except ValidationError as exc:
        raise ConfigError(f"stats: {exc}") from None
    if "stats_json" in src:
        try:
            return PolicyCellStats.load(src["stats_json"])
        except FileNotFoundError:
            raise DataError(f"stats file {src['stats_json']} not found") from None
        except (ValidationError, json.JSONDecodeError) as exc:
            raise DataError(f"{src['stats_json']}: {exc}") from None
    if "csv" in src:
        spec, train, test, kwargs = _csv_parts(src, seed)
        part = train if src.get("use", "train") == "train" else test
        return estimate_stats(part, spec, **kwargs)
    raise ConfigError("stats: no recognised source")


def region_grid(doc: dict, dim: int) -> list:
    grid = doc.get("grid")
    if not grid:
        raise ConfigError("grid: a nonempty grid is required")
    if dim == 1:
        if "r" not in grid or "r_v" in grid or "r_c" in grid:
            raise ConfigError("grid: one-dimensional stats need exactly the 'r' list")
        return [SuccessRegion.one_dim(r) for r in grid["r"]]
    if "r" in grid or "r_v" not in grid or "r_c" not in grid:
        raise ConfigError("grid: two-dimensional stats need 'r_v' and 'r_c' lists")
    return [SuccessRegion.two_dim(rv, rc) for rv, rc in itertools.product(grid["r_v"], grid["r_c"])]


def single_region(doc: dict, dim: int) -> SuccessRegion:
    if "region" in doc:
        reg = doc["region"]
        try:
            if dim == 1:
                return SuccessRegion.one_dim(reg["r"])
            return SuccessRegion.two_dim(reg["r_v"], reg["r_c"])
        except KeyError as exc:
            raise ConfigError(f"region: missing {exc} for {dim}-dimensional stats") from None
    regions = region_grid(doc, dim)
    if len(regions) != 1:
        raise ConfigError("optimize needs a single region point")
    return regions[0]


# ---------------------------------------------------------------------------
# sweep

@dataclass
class SweepRow:
    region: SuccessRegion
    method: str
    criterion: Optional[float] = None
    psi: Optional[np.ndarray] = None
    wall_time_ms: float = 0.0
    stalled: bool = False
    error: str = ""


def _evaluate(stats, region, method, opt_config, value_projection):
    """Run one method at one region point; failures become the row's error text."""
    t0 = time.perf_counter()
    row = SweepRow(region, method)
    try:
        if method == "spm":
            res = run(stats, region, opt_config)
            row.psi, row.criterion, row.stalled = res.psi_final, res.criterion_final.p, res.stalled
        elif method == "bruteforce":
            row.psi, val = bruteforce(stats, region)
            row.criterion = val.p
        elif method == "greedy1d":
            row.psi = greedy_1d(stats, allow_value_projection=value_projection)
        else:
            problem = KnapsackProblem.from_stats(stats, region)
            sol = linprog_mckp(problem) if method == "linprog" else mixedint_mckp(problem)
            if not sol.feasible:
                raise ValueError("infeasible: no allocation meets the cost budget")
            row.psi = sol.allocation
        if row.criterion is None:
            row.criterion = criterion_closed_form(stats, row.psi, region).p
    except FloatingPointError:
        raise
    except ValueError as exc:
        row.error = str(exc).replace("\n", " ")
        row.psi = None
        row.criterion = None
    row.wall_time_ms = (time.perf_counter() - t0) * 1e3
    return row


def sweep(stats: PolicyCellStats, regions, methods, opt_config: OptimizerConfig,
          threads: int = 1, value_projection: bool = False) -> list:
    """Evaluate every method at every region point; rows ordered by grid then method."""
    if not methods:
        raise ConfigError("methods: at least one method is required")
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ConfigError(f"methods: unknown {unknown}")
    if not regions:
        raise ConfigError("grid: at least one region point is required")

    def point(region):
        return [_evaluate(stats, region, m, opt_config, value_projection) for m in methods]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(point, regions))
    else:
        blocks = [point(r) for r in regions]
    return [row for block in blocks for row in block]


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def sweep_header(dim: int, M: int, K: int) -> list:
    coords = ["r"] if dim == 1 else ["r_v", "r_c"]
    psi_cols = [f"psi_{g}_{k}" for g in range(M) for k in range(K)]
    return coords + ["method", "criterion", "stall", "wall_time_ms"] + psi_cols + ["error"]


def sweep_records(rows, M: int, K: int, record_wall_time: bool = True) -> list:
    """Rows as plain dicts in the CSV column order."""
    out = []
    for row in rows:
        rec = {}
        if row.region.dim == 1:
            rec["r"] = row.region.value_threshold
        else:
            rec["r_v"], rec["r_c"] = row.region.value_threshold, row.region.cost_threshold
        rec["method"] = row.method
        rec["criterion"] = row.criterion
        rec["stall"] = int(row.stalled)
        rec["wall_time_ms"] = round(row.wall_time_ms, 3) if record_wall_time else 0.0
        psi = row.psi if row.psi is not None else np.full((M, K), np.nan)
        for g in range(M):
            for k in range(K):
                rec[f"psi_{g}_{k}"] = None if np.isnan(psi[g, k]) else float(psi[g, k])
        rec["error"] = row.error
        out.append(rec)
    return out


def write_sweep_csv(records, header, path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for rec in records:
        writer.writerow([
            rec[c] if c in ("method", "error", "stall") else _fmt(rec[c]) for c in header
        ])
    Path(path).write_text(buf.getvalue())


def write_sweep_svg(records, dim: int, path) -> None:
    """Criterion against the difficulty level, one line per method (per r_v for 2-D)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "spmax"
    fig, ax = plt.subplots(figsize=(6, 4))
    xkey = "r" if dim == 1 else "r_c"
    keys = sorted({(rec["method"], rec.get("r_v")) for rec in records}, key=str)
    for method, rv in keys:
        pts = [(rec[xkey], rec["criterion"]) for rec in records
               if rec["method"] == method and rec.get("r_v") == rv and rec["criterion"] is not None]
        if pts:
            xs, ys = zip(*pts)
            label = method if dim == 1 else f"{method} r_v={rv:g}"
            ax.plot(xs, ys, marker="o", label=label)
    ax.set_xlabel(xkey)
    ax.set_ylabel("success probability")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_sweep(doc: dict, out_dir, seed: Optional[int] = None, threads: int = 1, fmt: str = "csv") -> Path:
    """Run a sweep described by ``doc``; returns the path of the table written."""
    seed = doc.get("seed", 0) if seed is None else seed
    if not doc.get("methods"):
        raise ConfigError("methods: at least one method is required")
    stats = load_stats(doc, seed)
    M, K, d = stats.mean.shape
    regions = region_grid(doc, d)
    rows = sweep(stats, regions, doc["methods"], optimizer_config(doc, seed), threads,
                 doc.get("greedy_value_projection", False))
    records = sweep_records(rows, M, K, doc.get("record_wall_time", True))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = out / "sweep.json"
        path.write_text(json.dumps(records, indent=2) + "\n")
    else:
        path = out / "sweep.csv"
        write_sweep_csv(records, sweep_header(d, M, K), path)
    if doc.get("svg", False):
        write_sweep_svg(records, d, out / "sweep.svg")
    return path


# ---------------------------------------------------------------------------
# single run, ingestion, synthetic export

def cmd_optimize(doc: dict, out_dir, seed: Optional[int] = None, fmt: str = "csv") -> dict:
    """One optimizer run; writes ``allocation.json`` and the trace table."""
    seed = doc.get("seed", 0) if seed is None else seed
    stats = load_stats(doc, seed)
    region = single_region(doc, stats.mean.shape[-1])
    config = optimizer_config(doc, seed)
    res = run(stats, region, config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {
        "region": region.to_dict(),
        "optimizer": config.to_dict(),
        "psi_init": res.psi_init.tolist(),
        "psi_final": res.psi_final.tolist(),
        "criterion_final": res.criterion_final.p,
        "stalled": res.stalled,
    }
    (out / "allocation.json").write_text(json.dumps(summary, indent=2) + "\n")
    if fmt == "json":
        (out / "trace.json").write_text(
            json.dumps([{"step": s, "criterion": v} for s, v in res.trace], indent=2) + "\n"
        )
    else:
        res.write_trace(out / "trace.csv")
    return summary


def cmd_ingest(doc: dict, out_dir, seed: Optional[int] = None) -> tuple:
    """CSV -> train/test stats JSON (plus the fitted bucketizer)."""
    seed = doc.get("seed", 0) if seed is None else seed
    src = doc.get("stats", {})
    if "csv" not in src:
        raise ConfigError("ingest needs stats.csv and stats.bucketizer")
    spec, train, test, kwargs = _csv_parts(src, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = (out / "stats_train.json", out / "stats_test.json")
    for part, path in zip((train, test), paths):
        estimate_stats(part, spec, **kwargs).save(path)
    (out / "bucketizer.json").write_text(json.dumps(spec.to_dict(), indent=2) + "\n")
    return paths


def cmd_gen_synthetic(doc: dict, out_dir, seed: Optional[int] = None) -> tuple:
    """Write a preset's ground-truth stats and its sampled rows."""
    syn = dict(doc.get("synthetic", {}))
    if seed is not None:
        syn["seed"] = seed
    else:
        syn.setdefault("seed", doc.get("seed", 0))
    try:
        config = SyntheticConfig(**syn)
        truth, data = generate_synthetic(config)
    except ValidationError as exc:
        raise ConfigError(f"synthetic: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"synthetic: {exc}") from None
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    truth.save(out / "ground_truth.json")
    data.write_csv(out / "samples.csv")
    return out / "ground_truth.json", out / "samples.csv"
