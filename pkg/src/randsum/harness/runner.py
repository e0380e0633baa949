"""Run a recipe, persist its tables, and emit plot data."""
from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from ..ratefit import RateFit, RateSeries, fit_rate
from .config import ExperimentConfig
from .recipes import RECIPES, Table


def format_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def write_csv(path: Path, table: Table, prefix: dict):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(prefix) + table.header)
        for row in table.rows:
            w.writerow([format_cell(v) for v in list(prefix.values()) + row])


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def resolve_threads(threads) -> int:
    if threads == "auto":
        return max(1, os.cpu_count() or 1)
    return int(threads)


@dataclass
class ResultRecord:
    out_dir: Path
    manifest: dict
    tables: dict[str, Path]
    checks: list[tuple[str, bool]]
    summary: dict
    rate_table: str | None = None
    extra_files: list[Path] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(ok for _, ok in self.checks)


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _jsonable(o):
    if isinstance(o, dict):
        return {k: _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if math.isfinite(f) else None
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def run_experiment(cfg: ExperimentConfig, verbose: bool = False) -> ResultRecord:
    """Execute ``cfg.experiment`` and write manifest.json, CSV tables and summary.json."""
    recipe = RECIPES.get(cfg.experiment)
    if recipe is None:
        raise ValueError(f"unknown experiment {cfg.experiment!r}")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    threads = resolve_threads(cfg.threads)
    start = _dt.datetime.now(_dt.timezone.utc)
    t0 = time.perf_counter()
    with ThreadPoolExecutor(max_workers=threads) as pool:
        # Executor.map yields in submission order, so reductions stay ordered
        result = recipe(cfg, pool.map)
    elapsed = time.perf_counter() - t0
    prefix = {"experiment_id": cfg.experiment_id, "master_seed": cfg.master_seed}
    paths = {}
    for name, table in result.tables.items():
        p = out / f"{name}.csv"
        write_csv(p, table, prefix)
        paths[name] = p
    checks = [(name, bool(ok)) for name, ok in result.checks]
    summary = {"experiment_id": cfg.experiment_id, **result.summary,
               "checks": [{"name": n, "ok": ok} for n, ok in checks]}
    (out / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2) + "\n",
                                      encoding="utf-8")
    manifest = {
        "config": cfg.to_dict(),
        "tool_version": _version(),
        "start": start.isoformat(),
        "end": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "elapsed_seconds": elapsed,
        "threads_used": threads,
        "master_seed": cfg.master_seed,
        "tables": {k: p.name for k, p in paths.items()},
        "all_checks_passed": all(ok for _, ok in checks),
    }
    (out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2) + "\n",
                                       encoding="utf-8")
    rec = ResultRecord(out, manifest, paths, checks, summary, result.rate_table)
    if verbose:
        print_summary(rec)
    return rec


def print_summary(rec: ResultRecord):
    print(f"experiment {rec.summary['experiment_id']} -> {rec.out_dir}")
    for name, p in rec.tables.items():
        print(f"  table {name}: {p}")
    fit = rec.summary.get("fit")
    if fit:
        print(f"  rate fit: p = {fit['p']:.4f} +/- {fit['p_stderr']:.4f} (q = {fit['q']:g}, "
              f"r^2 = {fit['r_squared']:.4f})")
    elif "notice" in rec.summary:
        print(f"  {rec.summary['notice']}")
    for name, ok in rec.checks:
        print(f"  [{'PASS' if ok else 'FAIL'}] {name}")


def emit_plotdata(rec: ResultRecord, q: float | None = None) -> Path:
    """Write plotdata.csv: n, observed value, stderr and the fitted C (log n)^q n^-p."""
    if rec.rate_table is None or rec.rate_table not in rec.tables:
        raise ValueError("record has no rate-series table")
    rows = read_csv(rec.tables[rec.rate_table])
    n = [int(r["n"]) for r in rows]
    v = [float(r[_value_column(rows[0])]) for r in rows]
    se = [float(r.get("stderr_outer", r.get("stderr", 0.0)) or 0.0) for r in rows]
    path = rec.out_dir / "plotdata.csv"
    fit = None
    if q is None:
        q = (rec.summary.get("fit") or {}).get("q", 0.0)
    if len(n) >= 3 and min(v) > 0:
        fit = fit_rate(RateSeries.from_arrays(n, v, se), q)
    else:
        print("notice: fewer than 3 usable points; fitted columns omitted")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "value", "stderr"] + (["fitted", "p", "q", "logC"] if fit else []))
        for i in range(len(n)):
            row = [n[i], v[i], se[i]]
            if fit:
                row += [float(fit.predict(n[i])), fit.p, fit.q, fit.logC]
            w.writerow([format_cell(x) for x in row])
    rec.extra_files.append(path)
    return path


def _value_column(row: dict) -> str:
    for c in ("kappa_mean", "value"):
        if c in row:
            return c
    raise ValueError("rate table has no kappa_mean/value column")


def fit_from_csv(path, q: float, label: str = "") -> RateFit:
    rows = read_csv(path)
    if not rows:
        raise ValueError(f"{path} has no data rows")
    col = _value_column(rows[0])
    se_col = "stderr_outer" if "stderr_outer" in rows[0] else "stderr" if "stderr" in rows[0] \
        else None
    n = [int(r["n"]) for r in rows]
    v = [float(r[col]) for r in rows]
    se = [float(r[se_col]) for r in rows] if se_col else None
    return fit_rate(RateSeries.from_arrays(n, v, se, label or str(path)), q)
