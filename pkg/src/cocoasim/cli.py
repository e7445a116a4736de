"""Command line interface.

Subcommands:
  run CONFIG     one (n_m, M) cell replicated over seeds
  sweep CONFIG   a full (n_m x M x seed) grid
  preset NAME    a named built-in experiment (``preset --list`` to see them)
  selfcheck      cross-module consistency suite

Exit codes: 0 success, 1 configuration error, 2 selfcheck failure.
"""

from __future__ import annotations

import argparse
import sys

from .experiments import (
    ConfigError,
    ExperimentConfig,
    load_config,
    preset_config,
    preset_names,
    run_cells,
)
from .selfcheck import format_report, run_selfcheck

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cocoasim",
        description="Continual learning of linear models with a distributed "
                    "block-coordinate solver.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_output_flags(p):
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--jobs", type=int, default=1,
                       help="worker processes for independent cells")
        p.add_argument("--no-plots", action="store_true",
                       help="emit CSVs only, no figures")

    run_p = sub.add_parser("run", help="run a single-cell experiment config")
    run_p.add_argument("config", help="path to a key = value config file")
    add_output_flags(run_p)

    sweep_p = sub.add_parser("sweep", help="run a grid experiment config")
    sweep_p.add_argument("config", help="path to a key = value config file")
    add_output_flags(sweep_p)

    preset_p = sub.add_parser("preset", help="run a named built-in experiment")
    preset_p.add_argument("name", nargs="?", default=None)
    preset_p.add_argument("--seeds", type=int, default=None,
                          help="replicate seeds per cell (overrides the preset)")
    preset_p.add_argument("--list", action="store_true", help="list preset names")
    add_output_flags(preset_p)

    sub.add_parser("selfcheck", help="run the consistency suite")
    return parser


def _execute(cfg: ExperimentConfig, out: str | None, jobs: int, plots: bool) -> int:
    from .report import emit_outputs  # deferred: pulls in matplotlib

    out_dir = out or cfg.out_dir or f"results/{cfg.name}"
    results = run_cells(cfg, jobs=jobs)
    written = emit_outputs(cfg, results, out_dir, plots=plots)
    by_status = {status: sum(r.status == status for r in results)
                 for status in ("ok", "diverged", "skipped")}
    print(f"{cfg.name}: {len(results)} cells "
          f"(ok={by_status['ok']} diverged={by_status['diverged']} "
          f"skipped={by_status['skipped']}) -> {out_dir} ({len(written)} files)")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            if len(cfg.samples_grid) > 1:
                raise ConfigError("n_m", "run expects a single value; use sweep for grids")
            if len(cfg.tasks_grid) > 1:
                raise ConfigError("M", "run expects a single value; use sweep for grids")
            return _execute(cfg, args.out, args.jobs, not args.no_plots)

        if args.command == "sweep":
            cfg = load_config(args.config)
            return _execute(cfg, args.out, args.jobs, not args.no_plots)

        if args.command == "preset":
            if args.list or args.name is None:
                print("\n".join(preset_names()))
                return 0
            cfg = preset_config(args.name, seeds=args.seeds)
            return _execute(cfg, args.out, args.jobs, not args.no_plots)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    results = run_selfcheck()
    print(format_report(results))
    return 0 if all(r.passed for r in results) else 2


if __name__ == "__main__":
    sys.exit(main())
