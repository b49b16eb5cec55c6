"""Results tables, per-step logs and aggregation."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .engine import RunReport

RESULT_COLUMNS = (
    "method",
    "N",
    "J",
    "seed",
    "coverage",
    "avg_width",
    "runtime_seconds",
    "updates_total",
    "config_hash",
    "stream_hash",
)
STEP_COLUMNS = ("t", "chosen_model", "set_size", "covered", "updates_performed", "alpha_of_chosen")


def result_row(report: RunReport, stream_hash: str) -> dict:
    cfg = report.config
    graph = cfg.method == "gmocp"
    return {
        "method": cfg.label,
        "N": cfg.n_trials if graph else "",
        "J": cfg.n_selective if graph else "",
        "seed": cfg.seed,
        "coverage": report.coverage,
        "avg_width": report.avg_width,
        "runtime_seconds": report.runtime_seconds,
        "updates_total": report.updates_total,
        "config_hash": cfg.digest(),
        "stream_hash": stream_hash,
    }


def append_results(rows: Iterable[dict], path) -> None:
    """Append rows to a CSV results table, writing the header only once."""
    path = Path(path)
    fresh = not path.exists() or path.stat().st_size == 0
    try:
        with path.open("a", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS, lineterminator="\n")
            if fresh:
                writer.writeheader()
            for row in rows:
                writer.writerow(row)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def read_results(path) -> list[dict]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        missing = set(RESULT_COLUMNS) - set(reader.fieldnames)
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        return list(reader)


def step_log_name(report: RunReport) -> str:
    cfg = report.config
    if cfg.method == "gmocp":
        return f"gmocp_N{cfg.n_trials}_J{cfg.n_selective}_seed{cfg.seed}.csv"
    if cfg.method == "single":
        return f"single{cfg.model}_seed{cfg.seed}.csv"
    return f"mocp_seed{cfg.seed}.csv"


def write_step_log(report: RunReport, path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(STEP_COLUMNS)
            for s in report.per_step:
                writer.writerow([s.t, s.chosen_model, s.set_size, int(s.covered),
                                 s.updates_performed, repr(s.alpha_of_chosen)])
    except OSError as exc:
        raise OSError(f"cannot write step log to {path}: {exc}") from exc


def read_step_log(path) -> dict:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return {
        "t": np.array([int(r["t"]) for r in rows], dtype=np.int64),
        "covered": np.array([int(r["covered"]) for r in rows], dtype=bool),
        "set_size": np.array([int(r["set_size"]) for r in rows], dtype=np.int64),
    }


def rolling_coverage(covered: Sequence[bool], window: int) -> np.ndarray:
    """Mean coverage over the trailing ``window`` steps (shorter at the start)."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    c = np.asarray(covered, dtype=np.float64)
    csum = np.concatenate(([0.0], np.cumsum(c)))
    idx = np.arange(1, c.shape[0] + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


def format_mean_std(values: Sequence[float], scale: float = 1.0, digits: int = 2) -> str:
    """``"mean ± std"`` with the sample standard deviation (0 for one value)."""
    v = np.asarray(values, dtype=np.float64) * scale
    std = float(v.std(ddof=1)) if v.shape[0] > 1 else 0.0
    return f"{v.mean():.{digits}f} ± {std:.{digits}f}"


def aggregate(rows: Sequence[dict]) -> list[dict]:
    """Group rows by (method, N, J) in first-seen order.

    Refuses to mix streams, or different settings under one group key.
    """
    if not rows:
        raise ValueError("no rows to aggregate")
    streams = {r["stream_hash"] for r in rows}
    if len(streams) > 1:
        raise ValueError(f"rows come from {len(streams)} different streams: {sorted(streams)}")
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["method"], str(r["N"]), str(r["J"])), []).append(r)
    out = []
    for (method, n, j), members in groups.items():
        hashes = {r["config_hash"] for r in members}
        if len(hashes) > 1:
            raise ValueError(f"group {method} N={n} J={j} mixes configurations {sorted(hashes)}")
        col = lambda name: [float(r[name]) for r in members]  # noqa: E731
        out.append({
            "method": method,
            "N": n,
            "J": j,
            "runs": len(members),
            "coverage": format_mean_std(col("coverage"), scale=100.0),
            "avg_width": format_mean_std(col("avg_width")),
            "runtime_seconds": format_mean_std(col("runtime_seconds"), digits=4),
        })
    return out


def format_table(groups: Sequence[dict]) -> str:
    header = ("N", "J", "Method", "Coverage (%)", "Avg Width", "Run Time (s)", "Runs")
    body = [(g["N"], g["J"], g["method"].upper() if not g["method"].startswith("single") else g["method"],
             g["coverage"], g["avg_width"], g["runtime_seconds"], str(g["runs"])) for g in groups]
    widths = [max(len(str(x)) for x in col) for col in zip(header, *body)]
    lines = [" | ".join(str(x).ljust(w) for x, w in zip(line, widths)) for line in (header, *body)]
    lines.insert(1, "-+-".join("-" * w for w in widths))
    return "\n".join(lines)
