"""Console logging for the solvers and the command-line scripts.

Per-iteration traces from the power, receive-scalar and reflection blocks
are logged at DEBUG; sweep progress and infeasible trials at INFO and
WARNING.
"""

import logging

import colorlog

SOLVER_LOGGERS = ("cvxpy", "matplotlib", "PIL")


def setup_colored_logging(verbose: bool = False, quiet_solvers: bool = True) -> None:
    """Install one colored console handler on the root logger.

    Args:
        verbose: Show DEBUG records, including every block's objective trace
        quiet_solvers: Pin third-party solver and plotting loggers to WARNING
            unless verbose output was requested
    """
    level = logging.DEBUG if verbose else logging.INFO

    handler = colorlog.StreamHandler()
    handler.setFormatter(
        colorlog.ColoredFormatter(
            "%(log_color)s%(levelname)-8s%(reset)s %(blue)s%(name)s%(reset)s: %(message)s",
            log_colors={
                "DEBUG": "cyan",
                "INFO": "green",
                "WARNING": "yellow",
                "ERROR": "red",
                "CRITICAL": "red,bg_white",
            },
        )
    )

    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    root_logger.handlers = []  # Remove any existing handlers
    root_logger.addHandler(handler)

    if quiet_solvers and not verbose:
        for name in SOLVER_LOGGERS:
            logging.getLogger(name).setLevel(logging.WARNING)
