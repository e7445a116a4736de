"""Experiment configs, grid sweeps with seed replication, and named presets.

Config files are flat ``key = value`` text; grids are comma-separated
lists and seed ranges use ``start:stop`` (stop exclusive). See the README
for the full schema. Cells where the sample count reaches the narrowest
block are skipped by default (the one-round path amplifies errors
enormously there); ``force_iterative = on`` runs them with the iterative
solver instead.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, replace
from pathlib import Path

from .cocoa import CocoaConfig
from .continual import ContinualConfig, RunTrace, run_continual
from .tasks import (
    GeneratorSpec,
    TaskSchedule,
    alternating_generator,
    build_sequence,
    make_partition,
    shared_generator,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "CellResult",
    "parse_config",
    "load_config",
    "auto_eval_stride",
    "run_cell",
    "run_cells",
    "preset_config",
    "preset_names",
]


class ConfigError(ValueError):
    """Invalid experiment configuration; names the offending field."""

    def __init__(self, field_name: str, message: str):
        self.field_name = field_name
        super().__init__(f"field {field_name!r}: {message}")


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a grid of (n_m, M) cells replicated over seeds."""

    name: str = "experiment"
    p: int = 160
    partition_sizes: tuple[int, ...] = (16, 32, 48, 64)
    schedule_mode: str = "one_shot"
    repeats: int = 1
    generator_kind: str = "shared"
    samples_grid: tuple[int, ...] = (10,)
    tasks_grid: tuple[int, ...] = (2,)
    seeds: tuple[int, ...] = tuple(range(20))
    inner_iters: int = 1000
    eval_stride: int | None = None  # None = auto (cycle-aligned, ~1000 steps)
    mode: str = "auto"
    force_iterative: bool = False
    out_dir: str | None = None

    def validate(self) -> None:
        if self.p < 1:
            raise ConfigError("p", "must be >= 1")
        if not self.partition_sizes:
            raise ConfigError("partition", "needs at least one block size")
        if any(s < 1 for s in self.partition_sizes):
            raise ConfigError("partition", "block sizes must be >= 1")
        if sum(self.partition_sizes) != self.p:
            raise ConfigError(
                "partition", f"sizes sum to {sum(self.partition_sizes)}, expected p={self.p}")
        if self.schedule_mode not in ("one_shot", "cyclic"):
            raise ConfigError("schedule", f"unknown mode {self.schedule_mode!r}")
        if self.repeats < 1:
            raise ConfigError("repeats", "must be >= 1")
        if self.schedule_mode == "one_shot" and self.repeats != 1:
            raise ConfigError("repeats", "must be 1 for one_shot schedules")
        if self.generator_kind not in ("shared", "alternating"):
            raise ConfigError("generator", f"unknown kind {self.generator_kind!r}")
        if not self.samples_grid or any(v < 1 for v in self.samples_grid):
            raise ConfigError("n_m", "needs positive values")
        if not self.tasks_grid or any(v < 1 for v in self.tasks_grid):
            raise ConfigError("M", "needs positive values")
        if not self.seeds:
            raise ConfigError("seeds", "needs at least one seed")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("seeds", "seeds must be non-negative")
        if self.inner_iters < 1:
            raise ConfigError("t_c", "must be >= 1")
        if self.eval_stride is not None and self.eval_stride < 1:
            raise ConfigError("eval_stride", "must be >= 1 or auto")
        if self.mode not in ("auto", "iterative", "closed_form"):
            raise ConfigError("mode", f"unknown mode {self.mode!r}")

    def cells(self) -> list[tuple[int, int]]:
        return [(n, m) for n in self.samples_grid for m in self.tasks_grid]

    def skip_reason(self, num_samples: int) -> str | None:
        """Why a cell with this sample count is skipped, or None if it runs."""
        narrowest = min(self.partition_sizes)
        if num_samples >= narrowest and not self.force_iterative:
            return (f"n_m={num_samples} >= narrowest block {narrowest}; "
                    "set force_iterative to run anyway")
        return None


@dataclass
class CellResult:
    """Outcome of one (n_m, M, seed) cell."""

    num_samples: int
    num_tasks: int
    seed: int
    status: str  # "ok" | "diverged" | "skipped"
    trace: RunTrace | None = None
    reason: str = ""


_KNOWN_KEYS = {
    "name", "p", "k", "partition", "schedule", "repeats", "generator",
    "n_m", "m", "seeds", "t_c", "eval_stride", "mode", "force_iterative", "out",
}

_BOOL_WORDS = {"on": True, "true": True, "yes": True, "1": True,
               "off": False, "false": False, "no": False, "0": False}


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {raw!r}") from None


def _parse_int_list(key: str, raw: str) -> tuple[int, ...]:
    raw = raw.strip().strip("{}")
    parts = [part.strip() for part in raw.split(",") if part.strip()]
    if not parts:
        raise ConfigError(key, "expected at least one value")
    return tuple(_parse_int(key, part) for part in parts)


def _parse_seeds(raw: str) -> tuple[int, ...]:
    raw = raw.strip()
    if ":" in raw:
        lo, _, hi = raw.partition(":")
        start = _parse_int("seeds", lo)
        stop = _parse_int("seeds", hi)
        if stop <= start:
            raise ConfigError("seeds", f"empty range {raw!r}")
        return tuple(range(start, stop))
    return _parse_int_list("seeds", raw)


def parse_config(text: str, name: str = "experiment") -> ExperimentConfig:
    """Parse the flat key = value config format."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line.strip()!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip().lower()
        if key not in _KNOWN_KEYS:
            raise ConfigError(key, "unknown key")
        values[key] = raw.strip()

    cfg = ExperimentConfig(name=values.get("name", name))
    if "p" in values:
        cfg = replace(cfg, p=_parse_int("p", values["p"]))
    if "partition" in values:
        cfg = replace(cfg, partition_sizes=_parse_int_list("partition", values["partition"]))
    if "k" in values:
        k = _parse_int("k", values["k"])
        if k != len(cfg.partition_sizes):
            raise ConfigError("k", f"k={k} but partition has {len(cfg.partition_sizes)} blocks")
    if "schedule" in values:
        cfg = replace(cfg, schedule_mode=values["schedule"].lower())
    if "repeats" in values:
        cfg = replace(cfg, repeats=_parse_int("repeats", values["repeats"]))
    if "generator" in values:
        cfg = replace(cfg, generator_kind=values["generator"].lower())
    if "n_m" in values:
        cfg = replace(cfg, samples_grid=_parse_int_list("n_m", values["n_m"]))
    if "m" in values:
        cfg = replace(cfg, tasks_grid=_parse_int_list("M", values["m"]))
    if "seeds" in values:
        cfg = replace(cfg, seeds=_parse_seeds(values["seeds"]))
    if "t_c" in values:
        cfg = replace(cfg, inner_iters=_parse_int("t_c", values["t_c"]))
    if "eval_stride" in values:
        raw = values["eval_stride"].lower()
        cfg = replace(cfg, eval_stride=None if raw == "auto" else _parse_int("eval_stride", raw))
    if "mode" in values:
        cfg = replace(cfg, mode=values["mode"].lower())
    if "force_iterative" in values:
        raw = values["force_iterative"].lower()
        if raw not in _BOOL_WORDS:
            raise ConfigError("force_iterative", f"expected on/off, got {raw!r}")
        cfg = replace(cfg, force_iterative=_BOOL_WORDS[raw])
    if "out" in values:
        cfg = replace(cfg, out_dir=values["out"])

    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, name=Path(path).stem)


def auto_eval_stride(schedule_mode: str, num_tasks: int) -> int:
    """Default evaluation stride: every step for one-shot runs; for cyclic
    runs, the multiple of the cycle length closest to 1000 steps, so
    evaluations land on full-cycle boundaries."""
    if schedule_mode == "one_shot":
        return 1
    return num_tasks * max(1, round(1000 / num_tasks))


def _generator_spec(cfg: ExperimentConfig) -> GeneratorSpec:
    if cfg.generator_kind == "shared":
        return shared_generator(cfg.p)
    return alternating_generator(cfg.p)


def run_cell(cfg: ExperimentConfig, num_samples: int, num_tasks: int,
             seed: int) -> CellResult:
    """Run one grid cell; divergence is recorded in the result, not raised."""
    reason = cfg.skip_reason(num_samples)
    if reason is not None:
        return CellResult(num_samples, num_tasks, seed, "skipped", reason=reason)

    partition = make_partition(cfg.p, cfg.partition_sizes)
    spec = _generator_spec(cfg)
    schedule = TaskSchedule(mode=cfg.schedule_mode, num_tasks=num_tasks,
                            repeats=cfg.repeats)
    tasks, sequence = build_sequence(schedule, spec, num_samples, cfg.p, seed)
    mode = cfg.mode
    if cfg.force_iterative and num_samples >= min(cfg.partition_sizes):
        mode = "iterative"
    stride = cfg.eval_stride or auto_eval_stride(cfg.schedule_mode, num_tasks)
    config = ContinualConfig(
        cocoa=CocoaConfig(num_nodes=partition.num_nodes, inner_iters=cfg.inner_iters,
                          mode=mode),
        eval_stride=stride,
    )
    trace = run_continual(tasks, sequence, partition, config, spec.reference)
    status = "diverged" if trace.diverged else "ok"
    return CellResult(num_samples, num_tasks, seed, status, trace=trace)


def _run_cell_args(args) -> CellResult:
    return run_cell(*args)


def run_cells(cfg: ExperimentConfig, jobs: int = 1) -> list[CellResult]:
    """Run every (n_m, M, seed) cell, in deterministic cell order.

    Cells are independent; with ``jobs > 1`` they execute in a process
    pool, and results are ordered by cell regardless of completion order.
    """
    cfg.validate()
    work = [(cfg, n, m, seed) for (n, m) in cfg.cells() for seed in cfg.seeds]
    if jobs <= 1 or len(work) <= 1:
        return [run_cell(*args) for args in work]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_cell_args, work, chunksize=1))


# Presets mirror the simulation study this package ships with: a one-shot
# grid, the cyclic grid, near-square trace runs, distance-to-generator
# versus task count, and the alternating-generator family.
_GRID_M = (2, 4, 8, 16, 32, 40, 64, 80, 128, 160, 256)


def _presets() -> dict[str, ExperimentConfig]:
    return {
        "fig1_2": ExperimentConfig(
            name="fig1_2",
            schedule_mode="one_shot",
            samples_grid=tuple(range(1, 11)),
            tasks_grid=_GRID_M,
            seeds=tuple(range(20)),
        ),
        "fig3_4": ExperimentConfig(
            name="fig3_4",
            schedule_mode="cyclic",
            repeats=1000,
            samples_grid=tuple(range(1, 11)),
            tasks_grid=_GRID_M,
            seeds=tuple(range(20)),
        ),
        "fig5": ExperimentConfig(
            name="fig5",
            schedule_mode="cyclic",
            repeats=2000,
            samples_grid=(2,),
            tasks_grid=(10, 40, 70, 80, 90, 160),
            seeds=tuple(range(5)),
        ),
        "fig6": ExperimentConfig(
            name="fig6",
            schedule_mode="cyclic",
            repeats=1000,
            samples_grid=(2,),
            tasks_grid=(2, 4, 8, 10, 16, 20, 32, 40, 64, 80, 128, 160, 256),
            seeds=tuple(range(5)),
        ),
        "fig7": ExperimentConfig(
            name="fig7",
            schedule_mode="cyclic",
            repeats=1000,
            generator_kind="alternating",
            samples_grid=(2,),
            tasks_grid=(2, 10, 150),
            seeds=tuple(range(5)),
        ),
    }


def preset_names() -> list[str]:
    return sorted(_presets())


def preset_config(name: str, seeds: int | None = None) -> ExperimentConfig:
    presets = _presets()
    if name not in presets:
        raise ConfigError("preset", f"unknown preset {name!r}; known: {', '.join(sorted(presets))}")
    cfg = presets[name]
    if seeds is not None:
        if seeds < 1:
            raise ConfigError("seeds", "must be >= 1")
        cfg = replace(cfg, seeds=tuple(range(seeds)))
    return cfg
