# Command-line entry point: single runs, ablation ladders, sweeps, comparisons and trace tooling

import argparse
import contextlib
import logging
import os
import sys
from typing import IO, Iterator, List, Optional, Sequence

from ahasdsim import __version__
from ahasdsim.config import (
    ABLATION_LADDER,
    ConfigError,
    ExperimentConfig,
    Variant,
    apply_overrides,
    load_config_file,
)
from ahasdsim.hardware.cost_table import cost_table, random_points
from ahasdsim.metrics import MetricsReport, emit, summarize, with_ratios
from ahasdsim.simulation import SimulationError
from ahasdsim.simulation.runner import run_experiment, run_many
from ahasdsim.workload.trace import TraceFormatError, export_trace, make_workload

logger = logging.getLogger(__name__)

LOG_LEVEL_ENV_VAR = "AHASD_LOG_LEVEL"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_SIMULATION = 5

COMPARE_VARIANTS = (Variant.FULL, Variant.GPU_ONLY, Variant.NPU_ONLY, Variant.OP_SYNC)


def parse_seeds(text: str) -> List[int]:
    """'1..5' is an inclusive range; anything else is a comma-separated list"""
    try:
        if ".." in text:
            low, high = (int(part) for part in text.split("..", 1))
            if high < low:
                raise argparse.ArgumentTypeError(f"empty seed range '{text}'")
            return list(range(low, high + 1))
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed list '{text}'")


def _add_common(parser: argparse.ArgumentParser, multi_seed: bool) -> None:
    parser.add_argument("--config", help="YAML experiment config; defaults apply without one")
    parser.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="dotted config key, e.g. workload.algorithm=svip (repeatable)",
    )
    parser.add_argument("--output", help="write the result here instead of stdout")
    parser.add_argument("--format", choices=("json", "csv"), help="report format")
    if multi_seed:
        parser.add_argument(
            "--seeds", type=parse_seeds, help="seed range '1..5' or list '1,4,9'"
        )
    else:
        parser.add_argument("--seed", type=int, help="replaces the config seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ahasdsim",
        description="Discrete-event simulator of speculative decoding on a mobile NPU + PIM SoC",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="simulate one variant with one seed")
    _add_common(run, multi_seed=False)
    run.add_argument("--variant", choices=[v.value for v in Variant])
    run.add_argument("--event-trace", help="write one JSON line per simulation event here")
    run.add_argument(
        "--debug-dump",
        type=int,
        default=0,
        metavar="N",
        help="add predictor state to the event trace every N events",
    )

    ablate = commands.add_parser("ablate", help="run the ablation ladder over a set of seeds")
    _add_common(ablate, multi_seed=True)

    sweep = commands.add_parser("sweep", help="run one variant over values of a config key")
    _add_common(sweep, multi_seed=True)
    sweep.add_argument("--variant", choices=[v.value for v in Variant])
    sweep.add_argument("--param", required=True, help="dotted config key to sweep")
    sweep.add_argument("--values", required=True, help="comma-separated values")

    compare = commands.add_parser("compare", help="ratios of the full design against baselines")
    _add_common(compare, multi_seed=True)
    compare.add_argument(
        "--baseline", default=Variant.GPU_ONLY.value, choices=[v.value for v in Variant]
    )

    dump = commands.add_parser("cost-dump", help="per-operation cycle table at random points")
    _add_common(dump, multi_seed=False)
    dump.add_argument("--points", type=int, default=50)

    export = commands.add_parser("trace-export", help="write the configured workload as a trace")
    _add_common(export, multi_seed=False)
    export.add_argument("--length", type=int, help="positions to export (generation length)")
    return parser


@contextlib.contextmanager
def _open_output(path: Optional[str]) -> Iterator[IO[str]]:
    if path is None:
        yield sys.stdout
        return
    with open(path, "w", newline="") as f:
        yield f


def _load(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config_file(args.config, args.override)
    seed = getattr(args, "seed", None)
    if seed is not None:
        config = apply_overrides(config, [f"seed={seed}"])
    variant = getattr(args, "variant", None)
    if variant is not None:
        config = apply_overrides(config, [f"variant={variant}"])
    return config


def _expand(
    config: ExperimentConfig, variants: Sequence[Variant], seeds: Optional[Sequence[int]]
) -> List[ExperimentConfig]:
    """One config per (variant, seed), expanded before anything runs"""
    seeds = seeds if seeds else [config.seed]
    return [
        apply_overrides(config, [f"variant={Variant(v).value}", f"seed={s}"])
        for v in variants
        for s in seeds
    ]


def _write_reports(args, reports: Sequence[MetricsReport], default_format: str) -> None:
    with _open_output(args.output) as out:
        out.write(emit(reports, args.format or default_format))


def _run(args) -> None:
    config = _load(args)
    if args.event_trace:
        with open(args.event_trace, "w") as trace:
            report = run_experiment(config, args.override, trace, args.debug_dump)
    else:
        report = run_experiment(config, args.override, debug_dump_every=args.debug_dump)
    with _open_output(args.output) as out:
        out.write(emit(report, args.format or "json"))


def _ablate(args) -> None:
    config = _load(args)
    reports = run_many(_expand(config, ABLATION_LADDER, args.seeds), args.override)
    _write_reports(args, reports, "csv")


def _sweep(args) -> None:
    config = _load(args)
    reports = []
    for value in [v.strip() for v in args.values.split(",") if v.strip()]:
        setting = f"{args.param}={value}"
        swept = apply_overrides(config, [setting]).model_copy(update={"label": setting})
        reports += run_many(_expand(swept, [swept.variant], args.seeds), [*args.override, setting])
    reports.sort(key=lambda r: (r.variant, r.label, r.seed))
    _write_reports(args, reports, "csv")


def _compare(args) -> None:
    config = _load(args)
    variants = list(dict.fromkeys([*COMPARE_VARIANTS, Variant(args.baseline)]))
    reports = run_many(_expand(config, variants, args.seeds), args.override)
    table = with_ratios(summarize(reports), args.baseline)
    with _open_output(args.output) as out:
        if (args.format or "csv") == "json":
            out.write(table.to_json(orient="records", indent=2) + "\n")
        else:
            table.to_csv(out, index=False)


def _cost_dump(args) -> None:
    config = _load(args)
    table = cost_table(config, random_points(config.seed, args.points))
    with _open_output(args.output) as out:
        if (args.format or "csv") == "json":
            out.write(table.to_json(orient="records", indent=2) + "\n")
        else:
            table.to_csv(out, index=False)


def _trace_export(args) -> None:
    config = _load(args)
    length = args.length if args.length is not None else config.generation_length
    if length < 1:
        raise ConfigError("--length must be at least 1")
    with _open_output(args.output) as out:
        export_trace(make_workload(config), length, out)


COMMANDS = {
    "run": _run,
    "ablate": _ablate,
    "sweep": _sweep,
    "compare": _compare,
    "cost-dump": _cost_dump,
    "trace-export": _trace_export,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        level=os.environ.get(LOG_LEVEL_ENV_VAR, "WARNING").upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (ConfigError, TraceFormatError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO
    except SimulationError as e:
        logger.error(f"Simulation failed: {e}")
        return EXIT_SIMULATION
    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
