#!/usr/bin/env python3
"""
bbmshape - branching Brownian motion in a periodic environment: spectral
solvers, front speeds, Wulff shapes, Monte Carlo and F-KPP checks
"""

import logging
import os
import sys
import traceback
from datetime import datetime
from pathlib import Path

from bbmshape import __version__
from bbmshape.cli_strings import CliStrings
from bbmshape.exceptions import BBMShapeError, ConfigError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2

# crash logs land in the run's output directory once the config is loaded
_log_dir = Path("results")


def _write_crash_log(
    reason: str,
    exc_type=None,
    exc_value=None,
    exc_traceback=None,
    extra_details: str = "",
) -> Path:
    """Write crash diagnostics next to the run's artifacts.

    Returns:
        Path to the crash log file that was created.
    """
    timestamp_str = datetime.now().strftime("%Y-%m-%d_%H-%M-%S")
    crash_log_path = _log_dir / f"bbmshape-crash-{timestamp_str}.log"

    lines = [
        "=" * 80,
        f"Timestamp: {datetime.now().isoformat(timespec='seconds')}",
        f"Reason: {reason}",
        f"PID: {os.getpid()}",
        f"Version: {__version__}",
        f"Command line: {' '.join(sys.argv)}",
    ]
    if exc_type is not None:
        lines.append(f"Exception type: {getattr(exc_type, '__name__', str(exc_type))}")
    if exc_value is not None:
        lines.append(f"Exception message: {exc_value}")
    if extra_details:
        lines.extend(["", "Extra details:", extra_details])
    if exc_type is not None and exc_value is not None and exc_traceback is not None:
        lines.extend(["", "Traceback:", "".join(traceback.format_exception(exc_type, exc_value, exc_traceback))])
    lines.append("")

    try:
        _log_dir.mkdir(parents=True, exist_ok=True)
        with crash_log_path.open("a", encoding="utf-8") as crash_file:
            crash_file.write("\n".join(lines))
    except OSError as write_error:
        print(f"Failed to write crash log: {write_error}", file=sys.stderr)

    return crash_log_path


def setup_logging(log_dir: Path, file_logging_enabled: bool = True, verbose: bool = False) -> None:
    """Configure console (and optional file) logging

    Args:
        log_dir: Directory for bbmshape.log
        file_logging_enabled: If True, logs to file in addition to console
        verbose: Debug level, including the per-step simulation engine
    """
    log_file = log_dir / "bbmshape.log"

    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stdout)]
    if file_logging_enabled:
        log_dir.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file, mode="a", encoding="utf-8"))

    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=handlers,
        force=True,
    )

    # the particle engine and worker pool are chatty at INFO
    if not verbose:
        logging.getLogger("bbmshape.simulation.bbm").setLevel(logging.WARNING)
        logging.getLogger("bbmshape.utils.parallel").setLevel(logging.WARNING)
    logging.getLogger("numba").setLevel(logging.WARNING)

    logger = logging.getLogger(__name__)
    logger.info("=" * 60)
    logger.info(f"bbmshape {__version__} starting")
    if file_logging_enabled:
        logger.info(f"Log file: {log_file}")
    else:
        logger.info("File logging disabled (console only)")
    logger.info("=" * 60)


def exception_hook(exc_type, exc_value, exc_traceback):
    """Log unhandled exceptions and leave a crash log behind"""
    if issubclass(exc_type, KeyboardInterrupt):
        sys.__excepthook__(exc_type, exc_value, exc_traceback)
        return

    logger = logging.getLogger(__name__)
    logger.critical("Unhandled exception", exc_info=(exc_type, exc_value, exc_traceback))
    crash_log_path = _write_crash_log("Unhandled Python exception", exc_type, exc_value, exc_traceback)
    print(CliStrings.ERROR_UNHANDLED.format(path=crash_log_path), file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    """Command-line entry point"""
    global _log_dir

    from bbmshape.cli.commands import build_parser, execute, load_experiment

    args = build_parser().parse_args(argv)
    try:
        manager = load_experiment(args)
    except ConfigError as e:
        print(CliStrings.ERROR_CONFIG.format(message=e), file=sys.stderr)
        return EXIT_CONFIG

    _log_dir = Path(manager.config["output_dir"])
    setup_logging(_log_dir, manager.config["file_logging"], args.verbose)
    sys.excepthook = exception_hook
    logger = logging.getLogger(__name__)

    try:
        passed = execute(args.command, manager)
    except ConfigError as e:
        logger.error(CliStrings.ERROR_CONFIG.format(message=e))
        return EXIT_CONFIG
    except BBMShapeError as e:
        logger.error(CliStrings.ERROR_RUN.format(name=type(e).__name__, message=e))
        return EXIT_FAILURE

    return EXIT_OK if passed else EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
