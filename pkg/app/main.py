import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from exceptions.exceptions import (
    IO_EXCEPTIONS,
    NUMERIC_EXCEPTIONS,
    ConfigurationException,
    GhostSimException,
    ValidationException,
)
from schemas.config import parse_config
from services.report_generator import ReportGenerator
from services.runner import VERSION, run

logger = logging.getLogger("ghostsim")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

COMMANDS = {
    "hbt-scan": "Monte Carlo HBT correlation scan (boson, fermion and classical g2 maps)",
    "ghost-image": "Monte Carlo ghost imaging with a bucket detector behind the object mask",
    "analytic": "closed-form ghost images and the point-to-spot width",
    "fit": "fit a dip or peak model to a correlation CSV",
    "section": "extract (and optionally fit) line sections of a correlation CSV",
}

report_generator = ReportGenerator()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ghostsim",
        description="Thermal-source ghost imaging simulator for bosons, fermions and classical particles.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    subcommands = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMANDS.items():
        sub = subcommands.add_parser(name, help=help_text, description=help_text)
        sub.add_argument("--config", required=True, type=Path, help="TOML run configuration")
        sub.add_argument("--seed", type=int, help="master seed (overrides [run] seed)")
        sub.add_argument("--workers", type=int,
                         help="worker threads, 0 = one per CPU (overrides GHOSTSIM_WORKERS and [run] workers)")
        sub.add_argument("--out", type=Path, help="output directory (overrides [run] output_dir)")
        sub.add_argument("--report", action="store_true", help="also write a PDF run report")
    return parser


def exit_code(error: BaseException) -> int:
    if isinstance(error, (ConfigurationException, ValidationException)):
        return EXIT_CONFIG
    if isinstance(error, NUMERIC_EXCEPTIONS):
        return EXIT_NUMERIC
    if isinstance(error, IO_EXCEPTIONS):
        return EXIT_IO
    return EXIT_FAILURE


def _env_workers() -> Optional[int]:
    value = os.getenv("GHOSTSIM_WORKERS")
    if value is None or value.strip() == "":
        return None
    try:
        return int(value)
    except ValueError as e:
        raise ConfigurationException(f"must be an integer, got {value!r}", key="GHOSTSIM_WORKERS") from e


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    logging.basicConfig(
        level=os.getenv("GHOSTSIM_LOG_LEVEL", "INFO").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)

    try:
        try:
            text = args.config.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigurationException(f"cannot read {args.config}: {e.strerror or e}", key="--config") from e

        overrides = {
            "seed": args.seed,
            "workers": args.workers if args.workers is not None else _env_workers(),
            "output_dir": str(args.out.resolve()) if args.out is not None else None,
            "report": True if args.report else None,
        }
        config = parse_config(text, command=args.command.replace("-", "_"), overrides=overrides,
                              base_dir=args.config.resolve().parent)
        manifest = run(config, report_generator)
    except GhostSimException as e:
        logger.error("%s: %s", type(e).__name__, e)
        return exit_code(e)
    except Exception:
        logger.exception("Unexpected failure")
        return EXIT_FAILURE

    logger.info("Wrote %d file(s) to %s", len(manifest.checksums) + 1, config.output_dir)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
