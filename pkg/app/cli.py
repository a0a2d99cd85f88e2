"""
Command-line entry point (the ``raddiff`` script).

Subcommands:

* ``run`` runs one simulation from a config file or a preset;
* ``study`` runs the temporal, spatial or efficiency study and writes its
  tables as text and CSV;
* ``preset-dump`` writes a preset as a config file.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from pydantic import ValidationError

from app.core.config import get_settings
from app.core.errors import RadDiffError
from app.core.logging import configure_logging
from app.schemas.run_config import RunConfig, dump_run_config, load_run_config
from app.services.presets import get_preset, preset_names
from app.services.simulation import run_simulation
from app.services.study import StudyTable, efficiency_study, spatial_study, temporal_study

logger = logging.getLogger(__name__)

# desk-scale study defaults
TEMPORAL_DTS = (2.0e-4, 1.0e-4, 5.0e-5)
TEMPORAL_REFERENCE_DT = 2.5e-5
TEMPORAL_SAMPLES = (0.02, 0.05)
SPATIAL_GRIDS = ((16, 1), (16, 2), (16, 3), (64, 1))
SPATIAL_REFERENCE_BASE = 128
SPATIAL_T_FINAL = 0.05
EFFICIENCY_BASES = (16, 32)
EFFICIENCY_LEVELS = (1, 2, 3)


def _grid(text: str) -> tuple[int, int]:
    """Parse ``16b3l`` (or ``16x3``) into (base resolution, levels)."""
    cleaned = text.lower().rstrip("l").replace("b", "x")
    try:
        base, levels = cleaned.split("x")
        return int(base), int(levels)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid grid {text!r}, expected e.g. 16b3l") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="raddiff",
        description="3D SAMR non-equilibrium radiation diffusion solver",
    )
    parser.add_argument("--log-level", default=None, help="Logging level (default from settings)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_source(p: argparse.ArgumentParser, default_preset: str) -> None:
        group = p.add_mutually_exclusive_group()
        group.add_argument("--config", type=Path, help="Run config file (KEY=value lines)")
        group.add_argument(
            "--preset", default=default_preset, choices=preset_names(), help="Built-in problem"
        )
        p.add_argument("--full-scale", action="store_true", help="Use the full-scale preset sizes")
        p.add_argument("--t-final", type=float, default=None, help="Override the final time")
        p.add_argument("--threads", type=int, default=None, help="Worker threads")
        p.add_argument("--seed", type=int, default=None, help="Seed for randomized runs")

    run = sub.add_parser("run", help="Run one simulation")
    add_source(run, "marshak")
    run.add_argument("--out", type=Path, default=None, help="Output directory")

    study = sub.add_parser("study", help="Run an accuracy or efficiency study")
    study.add_argument("mode", choices=("temporal", "spatial", "efficiency"))
    add_source(study, "marshak-single")
    study.add_argument("--out", type=Path, default=None, help="Directory for the table files")
    study.add_argument("--dts", type=float, nargs="+", default=list(TEMPORAL_DTS))
    study.add_argument("--reference-dt", type=float, default=TEMPORAL_REFERENCE_DT)
    study.add_argument("--samples", type=float, nargs="+", default=list(TEMPORAL_SAMPLES))
    study.add_argument("--grids", type=_grid, nargs="+", default=list(SPATIAL_GRIDS))
    study.add_argument("--reference-base", type=int, default=SPATIAL_REFERENCE_BASE)
    study.add_argument("--bases", type=int, nargs="+", default=list(EFFICIENCY_BASES))
    study.add_argument("--levels", type=int, nargs="+", default=list(EFFICIENCY_LEVELS))

    dump = sub.add_parser("preset-dump", help="Write a preset as a config file")
    dump.add_argument("preset", choices=preset_names())
    dump.add_argument("--full-scale", action="store_true")
    dump.add_argument("--out", type=Path, default=None, help="Target file (stdout when omitted)")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Config from ``--config`` or ``--preset`` with the command-line overrides applied."""
    if args.config is not None:
        config = load_run_config(args.config)
    else:
        config = get_preset(args.preset, args.full_scale)
    update: dict[str, object] = {}
    if args.t_final is not None:
        update["t_final"] = args.t_final
    if args.threads is not None:
        update["threads"] = args.threads
    if args.seed is not None:
        update["seed"] = args.seed
    if update:
        # revalidate so overrides obey the same constraints as file values
        config = RunConfig.model_validate({**config.model_dump(), **update})
    return config


def _emit(tables: Sequence[tuple[str, StudyTable]], out: Path | None) -> None:
    for name, table in tables:
        print(table.to_text())
        print()
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            table.write_csv(out / f"{name}.csv")


def _run(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    out = args.out or Path(get_settings().output_dir) / config.problem
    summary = run_simulation(config, out)
    print(f"{summary.status}: {summary.accepted_steps} steps to t={summary.t_reached:.6g}, output in {out}")
    return 0


def _study(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    if args.mode == "temporal":
        table = temporal_study(config, args.dts, args.reference_dt, args.samples)
        _emit([("temporal", table)], args.out)
    elif args.mode == "spatial":
        t_final = args.t_final if args.t_final is not None else SPATIAL_T_FINAL
        table = spatial_study(config, args.grids, args.reference_base, t_final)
        _emit([("spatial", table)], args.out)
    else:
        tables = efficiency_study(config, args.bases, args.levels)
        _emit(list(tables.items()), args.out)
    return 0


def _preset_dump(args: argparse.Namespace) -> int:
    text = dump_run_config(get_preset(args.preset, args.full_scale))
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text, encoding="utf-8")
    return 0


COMMANDS = {"run": _run, "study": _study, "preset-dump": _preset_dump}


def main(argv: Sequence[str] | None = None) -> int:
    """Parse arguments and dispatch; returns the process exit status."""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level or get_settings().log_level)
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        logger.error("invalid configuration:\n%s", exc)
        return 2
    except (RadDiffError, FileNotFoundError) as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
