"""
Command-line entry point for adsnull.
"""

import argparse
import logging
import sys
from typing import IO, List, Optional

from pydantic import ValidationError
from pythonjsonlogger import jsonlogger

from src import __description__, __version__
from src.api.commands import COMMANDS, EXIT_FAILURE, EXIT_OK, write_record
from src.config.settings import Settings, build_settings, emit_config
from src.errors import AdsNullError, UsageError
from src.models.responses import ErrorRecord

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

logger = logging.getLogger(__name__)


class CommandParser(argparse.ArgumentParser):
    """Argument parser that reports usage problems as exceptions instead of exiting."""

    def error(self, message: str):
        raise UsageError(message)


def _floats(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def _ints(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")


def build_parser() -> argparse.ArgumentParser:
    common = CommandParser(add_help=False)
    common.add_argument("--config", help="Flat key = value config file")
    common.add_argument("--emit-config", action="store_true", help="Print the effective configuration and exit")
    common.add_argument("--lambda", dest="cosmological_constant", type=float, help="Cosmological constant (negative)")
    common.add_argument("--v-infinity", type=float, help="Width v_I of the slab")
    common.add_argument("--threads", type=int, help="Worker threads for independent runs")
    common.add_argument("--log-level", help="Logging level")
    common.add_argument("--log-format", choices=["text", "json"], help="Log record format on stderr")

    parser = CommandParser(prog="adsnull", description=__description__)
    parser.add_argument("--version", action="version", version=f"adsnull {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-data", parents=[common], help="Construct normalised data from a bump profile")
    p.add_argument("--output", required=True)
    p.add_argument("--profile", required=True, help="e.g. 'kind=bump amp=1e-3 vc=1.5 vw=0.3 pc=1 pw=0.2 lc=0.5 lw=0.1'")
    p.add_argument("--nodes", type=int)

    p = sub.add_parser("normalize", parents=[common], help="Gauge-normalise a data file")
    p.add_argument("--data", required=True)
    p.add_argument("--output", required=True)

    p = sub.add_parser("validate", parents=[common], help="Check a data file")
    p.add_argument("--data", required=True)

    p = sub.add_parser("norm", parents=[common], help="Scale-invariant norm of a data file")
    p.add_argument("--data", required=True)
    p.add_argument("--lattice", type=_ints, help="Samples of U* and V*, e.g. 64,128")

    p = sub.add_parser("geodesic", parents=[common], help="Sample a closed-form AdS geodesic")
    p.add_argument("--v0", type=float, required=True)
    p.add_argument("--energy", type=float, required=True)
    p.add_argument("--l", type=float, default=0.0)
    p.add_argument("--sigma", type=int, default=0)
    p.add_argument("--tau", type=_floats, help="Comma-separated flow times")
    p.add_argument("--samples", type=int, help="Evenly spaced samples from v0 to --tau-end")
    p.add_argument("--tau-end", type=float)
    p.add_argument("--side", choices=["before", "after"])

    p = sub.add_parser("evolve", parents=[common], help="Evolve a data file")
    p.add_argument("--data", required=True)
    p.add_argument("--h", type=float, help="Grid spacing (must divide v_infinity)")
    p.add_argument("--target-u", type=float)
    p.add_argument("--dump-every", type=int)
    p.add_argument("--output-dir")

    p = sub.add_parser("stability", parents=[common], help="Cauchy-stability amplitude experiment")
    p.add_argument("--family", required=True, help="Unit-amplitude bump profile")
    p.add_argument("--eps", type=_floats, required=True, help="Comma-separated amplitudes")
    p.add_argument("--target-u", type=float, required=True)
    p.add_argument("--norm-every", type=int, default=8)
    return parser


def configure_logging(settings: Settings) -> None:
    """Text or JSON log records on stderr."""
    handler = logging.StreamHandler(sys.stderr)
    if settings.log_format == "json":
        handler.setFormatter(jsonlogger.JsonFormatter(LOG_FORMAT))
    else:
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logging.basicConfig(level=settings.log_level.upper(), handlers=[handler], force=True)


def _request_fields(args: argparse.Namespace) -> dict:
    if args.command == "geodesic":
        tau = args.tau
        if tau is None and args.samples and args.tau_end is not None:
            step = (args.tau_end - args.v0) / max(args.samples - 1, 1)
            tau = [args.v0 + i * step for i in range(args.samples)]
        if tau is None:
            raise UsageError("geodesic needs --tau or --samples with --tau-end")
        return {"v0": args.v0, "energy": args.energy, "l": args.l, "sigma": args.sigma, "tau": tau, "side": args.side}
    skip = {"command", "config", "emit_config", "cosmological_constant", "v_infinity", "threads", "log_level",
            "log_format", "output_dir"}
    return {key: value for key, value in vars(args).items() if key not in skip and value is not None}


def _fail(out: IO[str], error: str, e: Exception, command: Optional[str] = None) -> int:
    logger.error(f"{error}: {str(e)}")
    location = getattr(e, "location", None) or (None, None)
    write_record(out, ErrorRecord(error=error, message=str(e), exception_type=type(e).__name__, command=command,
                                  exit_code=EXIT_FAILURE, u=location[0], v=location[1]))
    return EXIT_FAILURE


def run(argv: Optional[List[str]] = None, out: Optional[IO[str]] = None) -> int:
    """
    Parse arguments, run one subcommand and return its exit status.

    Returns:
        0 on success, 2 when a monitor halted a run, 1 on usage, input or I/O errors
    """
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        settings = build_settings(
            args.config,
            cosmological_constant=args.cosmological_constant,
            v_infinity=args.v_infinity,
            threads=args.threads,
            log_level=args.log_level,
            log_format=args.log_format,
            output_dir=getattr(args, "output_dir", None),
        )
    except SystemExit as e:
        return int(e.code or EXIT_OK)
    except (UsageError, ValidationError) as e:
        return _fail(out, "USAGE_ERROR", e)
    except (AdsNullError, OSError) as e:
        return _fail(out, "CONFIG_ERROR", e)

    configure_logging(settings)
    if args.emit_config:
        out.write(emit_config(settings))
        return EXIT_OK

    request_model, handler = COMMANDS[args.command]
    try:
        request = request_model(**_request_fields(args))
        logger.info(f"Running {args.command}")
        return handler(request, settings, out)
    except (UsageError, ValidationError) as e:
        return _fail(out, "USAGE_ERROR", e, args.command)
    except AdsNullError as e:
        return _fail(out, type(e).__name__, e, args.command)
    except OSError as e:
        return _fail(out, "IO_ERROR", e, args.command)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
