"""Delimited output and figures for experiment runs.

Every CSV starts with one clearly delimited ``#`` metadata line (the only
timestamped, non-reproducible byte in the output); the rest is
deterministic given config and seeds. Floats are written with ``repr`` so
values round-trip exactly, and non-finite values appear as ``inf``/``nan``
rather than being dropped. Figures are rendered with the Agg backend and
saved next to the CSVs.
"""

from __future__ import annotations

import csv
import datetime
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .continual import RunTrace  # noqa: E402
from .experiments import CellResult, ExperimentConfig  # noqa: E402

__all__ = [
    "TRACE_COLUMNS",
    "SUMMARY_COLUMNS",
    "MEDIAN_COLUMNS",
    "trace_filename",
    "write_trace_csv",
    "write_summary_csv",
    "write_median_csv",
    "summary_rows",
    "median_rows",
    "emit_outputs",
]

TRACE_COLUMNS = ("t", "forgetting", "forgetting_unique", "rel_step", "dist_to_gen", "diverged")
SUMMARY_COLUMNS = ("n_m", "M", "seed", "status", "final_forgetting",
                   "final_forgetting_unique", "final_rel_step", "final_dist",
                   "diverged", "reason")
MEDIAN_COLUMNS = ("n_m", "M", "status", "seeds", "diverged_count",
                  "median_final_forgetting", "median_final_rel_step", "median_final_dist")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _meta_line(cfg: ExperimentConfig, extra: str = "") -> str:
    from . import __version__

    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    stride = cfg.eval_stride if cfg.eval_stride is not None else "auto(cycle-aligned)"
    parts = [
        f"cocoasim {__version__}", f"generated={stamp}", f"name={cfg.name}",
        f"p={cfg.p}", "partition=" + "/".join(map(str, cfg.partition_sizes)),
        f"schedule={cfg.schedule_mode}", f"repeats={cfg.repeats}",
        f"generator={cfg.generator_kind}", f"eval_stride={stride}",
    ]
    if extra:
        parts.append(extra)
    return "# " + " ".join(parts) + "\n"


def _write_csv(path, meta: str, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(meta)
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def trace_filename(num_samples: int, num_tasks: int, seed: int) -> str:
    return f"trace_n{num_samples}_M{num_tasks}_seed{seed}.csv"


def write_trace_csv(path, trace: RunTrace, cfg: ExperimentConfig, cell: str) -> None:
    rows = [
        (r.t, r.forgetting, r.forgetting_unique, r.rel_step, r.dist_to_gen, r.diverged)
        for r in trace.records
    ]
    _write_csv(path, _meta_line(cfg, cell), TRACE_COLUMNS, rows)


def summary_rows(results: list[CellResult]) -> list[tuple]:
    rows = []
    for res in results:
        if res.trace is not None and res.trace.records:
            last = res.trace.records[-1]
            values = (last.forgetting, last.forgetting_unique, last.rel_step,
                      last.dist_to_gen, last.diverged)
        else:
            values = (math.nan, math.nan, math.nan, math.nan, False)
        rows.append((res.num_samples, res.num_tasks, res.seed, res.status)
                    + values + (res.reason,))
    return rows


def median_rows(cfg: ExperimentConfig, results: list[CellResult]) -> list[tuple]:
    by_cell: dict[tuple[int, int], list[CellResult]] = {}
    for res in results:
        by_cell.setdefault((res.num_samples, res.num_tasks), []).append(res)
    rows = []
    for (n, m) in cfg.cells():
        group = by_cell.get((n, m), [])
        statuses = {res.status for res in group}
        diverged_count = sum(res.status == "diverged" for res in group)
        if statuses == {"skipped"}:
            rows.append((n, m, "skipped", len(group), 0, math.nan, math.nan, math.nan))
            continue
        finals = {"forgetting": [], "rel_step": [], "dist": []}
        for res in group:
            if res.trace is None or not res.trace.records:
                continue
            last = res.trace.records[-1]
            finals["forgetting"].append(math.inf if res.status == "diverged" else last.forgetting)
            finals["rel_step"].append(math.inf if res.status == "diverged" else last.rel_step)
            finals["dist"].append(math.inf if res.status == "diverged" else last.dist_to_gen)
        status = "diverged" if diverged_count > len(group) / 2 else "ok"
        rows.append((
            n, m, status, len(group), diverged_count,
            float(np.median(finals["forgetting"])),
            float(np.median(finals["rel_step"])),
            float(np.median(finals["dist"])),
        ))
    return rows


def write_summary_csv(path, cfg: ExperimentConfig, results: list[CellResult]) -> None:
    _write_csv(path, _meta_line(cfg), SUMMARY_COLUMNS, summary_rows(results))


def write_median_csv(path, cfg: ExperimentConfig, results: list[CellResult]) -> None:
    _write_csv(path, _meta_line(cfg), MEDIAN_COLUMNS, median_rows(cfg, results))


def _log10_grid(cfg: ExperimentConfig, med_rows: list[tuple], column: int) -> np.ndarray:
    lookup = {(row[0], row[1]): row[column] for row in med_rows}
    grid = np.full((len(cfg.samples_grid), len(cfg.tasks_grid)), np.nan)
    for i, n in enumerate(cfg.samples_grid):
        for j, m in enumerate(cfg.tasks_grid):
            value = lookup[(n, m)]
            if math.isfinite(value) and value > 0:
                grid[i, j] = math.log10(value)
            elif value == 0:
                grid[i, j] = -30.0  # floor for exactly-zero medians
    return grid


def _render_heatmap(path: Path, cfg: ExperimentConfig, med_rows: list[tuple],
                    column: int, title: str) -> None:
    grid = _log10_grid(cfg, med_rows, column)
    status = {(row[0], row[1]): row[2] for row in med_rows}
    fig, ax = plt.subplots(figsize=(1.2 + 0.55 * len(cfg.tasks_grid),
                                    1.2 + 0.45 * len(cfg.samples_grid)))
    masked = np.ma.masked_invalid(grid)
    image = ax.imshow(masked, aspect="auto", origin="lower", cmap="viridis")
    fig.colorbar(image, ax=ax, label=f"log10 {title}")
    ax.set_xticks(range(len(cfg.tasks_grid)), [str(m) for m in cfg.tasks_grid])
    ax.set_yticks(range(len(cfg.samples_grid)), [str(n) for n in cfg.samples_grid])
    ax.set_xlabel("number of tasks M")
    ax.set_ylabel("samples per task n_m")
    ax.set_title(f"median {title} ({cfg.name})")
    for i, n in enumerate(cfg.samples_grid):
        for j, m in enumerate(cfg.tasks_grid):
            mark = {"skipped": "s", "diverged": "D"}.get(status[(n, m)])
            if mark:
                ax.text(j, i, mark, ha="center", va="center", color="red", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _render_trace_figure(path: Path, cfg: ExperimentConfig,
                         results: list[CellResult]) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    first_seed = min(cfg.seeds)
    for res in results:
        if res.seed != first_seed or res.trace is None or not res.trace.records:
            continue
        ts = [r.t for r in res.trace.records]
        values = [max(r.forgetting, 1e-300) for r in res.trace.records]
        label = f"M={res.num_tasks}, n_m={res.num_samples}"
        if res.status == "diverged":
            label += " (diverged)"
        ax.plot(ts, values, label=label)
    ax.set_yscale("log")
    ax.set_xlabel("outer step t")
    ax.set_ylabel("forgetting")
    ax.set_title(f"forgetting along training ({cfg.name}, seed {first_seed})")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _render_distance_figure(path: Path, cfg: ExperimentConfig,
                            med_rows: list[tuple]) -> None:
    fig, ax = plt.subplots(figsize=(6.5, 4.2))
    for n in cfg.samples_grid:
        ms = [row[1] for row in med_rows if row[0] == n]
        ds = [max(row[7], 1e-300) for row in med_rows if row[0] == n]
        ax.plot(ms, ds, marker="o", label=f"n_m={n}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("number of tasks M")
    ax.set_ylabel("final distance to generator")
    ax.set_title(f"median distance to generator ({cfg.name})")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def emit_outputs(cfg: ExperimentConfig, results: list[CellResult], out_dir,
                 plots: bool = True) -> list[Path]:
    """Write all CSVs (and figures, unless disabled) for one experiment run.

    Returns the paths written. File names are a pure function of the cell,
    so output is stable regardless of execution order.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    for res in results:
        if res.trace is None:
            continue
        path = out / trace_filename(res.num_samples, res.num_tasks, res.seed)
        cell = f"cell=n{res.num_samples}/M{res.num_tasks}/seed{res.seed} status={res.status}"
        write_trace_csv(path, res.trace, cfg, cell)
        written.append(path)

    summary = out / "summary.csv"
    write_summary_csv(summary, cfg, results)
    written.append(summary)
    med = median_rows(cfg, results)
    median_path = out / "summary_median.csv"
    write_median_csv(median_path, cfg, results)
    written.append(median_path)

    if plots:
        runnable = [row for row in med if row[2] != "skipped"]
        if len(cfg.cells()) > 1 and runnable:
            for column, name in ((5, "forgetting"), (6, "rel_step"), (7, "dist_to_gen")):
                path = out / f"heatmap_{name}.png"
                _render_heatmap(path, cfg, med, column, name)
                written.append(path)
        if any(r.trace is not None for r in results) and len(cfg.cells()) <= 8:
            path = out / "forgetting_vs_t.png"
            _render_trace_figure(path, cfg, results)
            written.append(path)
        if len(cfg.tasks_grid) > 1 and runnable:
            path = out / "dist_vs_M.png"
            _render_distance_figure(path, cfg, med)
            written.append(path)

    return written
