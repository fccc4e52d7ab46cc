"""Command-line entry point for the offloading simulator and analytics.

Subcommands: ``analytic``, ``simulate``, ``adapt``, ``outage`` and ``reproduce``.
Exit codes: 0 ok, 1 other toolkit failure, 2 configuration error, 3 I/O error,
4 unknown preset.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence

from pydantic import ValidationError

from shared.schemas import ControlTarget, OutageReference

from .commands import runner
from .config import settings
from .errors import ConfigError, DomainError, OffloadError, UnknownPresetError
from .services.presets import PRESETS

_LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_UNKNOWN_PRESET = 4


def _configure_logging() -> None:
    """Configures root and numerics log levels from settings."""
    level = getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO)
    numerics_level = getattr(logging, settings.NUMERICS_LOG_LEVEL.upper(), logging.INFO)
    root_logger = logging.getLogger()
    if not root_logger.handlers:
        logging.basicConfig(
            level=level,
            stream=sys.stderr,
            format="%(asctime)s %(levelname)s [%(name)s] %(message)s",
        )
    else:
        root_logger.setLevel(level)
    _LOGGER.setLevel(level)
    logging.getLogger("offload").setLevel(level)
    logging.getLogger("offload.app.services.numerics").setLevel(numerics_level)
    _LOGGER.debug(
        "Logging configured.",
        extra={"log_level": settings.LOG_LEVEL, "numerics_log_level": settings.NUMERICS_LOG_LEVEL},
    )


def _tau_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text}") from None


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="offload-sim",
        description="Random access-based computation offloading: closed forms and simulation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    analytic_parser = sub.add_parser("analytic", help="evaluate the closed-form results")
    analytic_parser.add_argument("config")
    analytic_parser.add_argument("--out", help="also write the summary as JSON")

    simulate = sub.add_parser("simulate", help="run a simulation campaign")
    simulate.add_argument("config")
    simulate.add_argument("--rounds", type=_positive_int, required=True)
    simulate.add_argument("--seed", type=int)
    simulate.add_argument("--out")

    adapt = sub.add_parser(
        "adapt",
        help="run a campaign under stochastic-approximation control",
        description="Writes the per-round CSV to --out or stdout; the settled-value "
        "summary is logged to stderr.",
    )
    adapt.add_argument("config")
    adapt.add_argument("--target", choices=[target.value for target in ControlTarget], required=True)
    adapt.add_argument("--rounds", type=_positive_int, required=True)
    adapt.add_argument("--gain", type=float)
    adapt.add_argument("--kappa", type=float, default=0.8)
    adapt.add_argument("--seed", type=int)
    adapt.add_argument("--out")

    outage = sub.add_parser("outage", help="measure latency outage against the Chernoff bound")
    outage.add_argument("config")
    outage.add_argument("--tau-grid", type=_tau_list, required=True)
    outage.add_argument("--rounds", type=_positive_int, required=True)
    outage.add_argument("--seed", type=int)
    outage.add_argument("--out")
    outage.add_argument("--n-max", type=int)
    outage.add_argument("--method", choices=["series", "direct"], default="series")
    outage.add_argument(
        "--reference",
        choices=[reference.value for reference in OutageReference],
        default=OutageReference.SAME_ROUND.value,
    )

    reproduce = sub.add_parser("reproduce", help="reproduce a pinned figure preset")
    reproduce.add_argument("preset", help=f"one of: {', '.join(PRESETS)}")
    reproduce.add_argument("--out", dest="out_dir")
    reproduce.add_argument("--rounds", type=_positive_int)
    reproduce.add_argument("--workers", type=_positive_int)
    reproduce.add_argument("--seed", type=int)
    return parser


def _dispatch(args: argparse.Namespace) -> None:
    if args.command == "analytic":
        runner.cmd_analytic(args.config, args.out)
    elif args.command == "simulate":
        runner.cmd_simulate(args.config, rounds=args.rounds, seed=args.seed, out=args.out)
    elif args.command == "adapt":
        runner.cmd_adapt(
            args.config,
            target=ControlTarget(args.target),
            rounds=args.rounds,
            gain=args.gain,
            kappa=args.kappa,
            seed=args.seed,
            out=args.out,
        )
    elif args.command == "outage":
        runner.cmd_outage(
            args.config,
            tau_grid=args.tau_grid,
            rounds=args.rounds,
            seed=args.seed,
            out=args.out,
            n_max=args.n_max,
            method=args.method,
            reference=OutageReference(args.reference),
        )
    else:
        runner.cmd_reproduce(
            args.preset,
            out_dir=args.out_dir,
            rounds=args.rounds,
            workers=args.workers,
            seed=args.seed,
        )


def main(argv: Sequence[str] | None = None) -> int:
    """Parses ``argv``, runs the subcommand and returns the exit code."""
    args = build_parser().parse_args(argv)
    _configure_logging()
    try:
        _dispatch(args)
    except UnknownPresetError as exc:
        _LOGGER.error("Unknown preset: %s", exc)
        return EXIT_UNKNOWN_PRESET
    except (ConfigError, ValidationError, DomainError) as exc:
        _LOGGER.error("Configuration error: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        _LOGGER.error("I/O error: %s", exc)
        return EXIT_IO
    except OffloadError as exc:
        _LOGGER.error("Run failed: %s", exc)
        return EXIT_FAILURE
    return EXIT_OK


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
