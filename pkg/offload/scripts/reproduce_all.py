"""Reproduces every figure preset into one output directory.

It must be run from the root dir of the project as shown below.

Usage:
    python -m offload.scripts.reproduce_all [--out results] [--rounds N] [--workers W]

"""

from __future__ import annotations

import argparse
import logging

from offload.app.commands.runner import cmd_reproduce
from offload.app.config import settings
from offload.app.services.presets import PRESETS

_LOGGER = logging.getLogger(__name__)


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=settings.OUTPUT_DIR)
    parser.add_argument("--rounds", type=int)
    parser.add_argument("--workers", type=int, default=settings.SWEEP_WORKERS)
    parser.add_argument("--only", nargs="*", default=sorted(PRESETS))
    return parser.parse_args()


def main() -> None:
    args = parse_args()
    logging.basicConfig(
        level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s [%(name)s] %(message)s",
    )
    for name in args.only:
        csv_path, summary_path = cmd_reproduce(
            name, out_dir=args.out, rounds=args.rounds, workers=args.workers
        )
        print(f"{name}: {csv_path} {summary_path}")


if __name__ == "__main__":
    main()
