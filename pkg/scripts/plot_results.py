#!/usr/bin/env python
"""Script to redraw plots from an existing results.csv."""

import argparse
import logging
import sys
from pathlib import Path

# Add src to path
sys.path.append(str(Path(__file__).parent.parent / "src"))

from hybrid_rate_ris.errors import HybridRateError
from hybrid_rate_ris.experiments.plots import emit_plots
from hybrid_rate_ris.experiments.sweep import read_results
from hybrid_rate_ris.utils.logging import setup_colored_logging


def main() -> None:
    """Plot a results table."""
    parser = argparse.ArgumentParser(description="Plot hybrid-rate sweep results")
    parser.add_argument("results", type=str, help="Path to results.csv")
    parser.add_argument(
        "--output-dir",
        type=str,
        default=None,
        help="Directory for PNG files (default: next to results.csv)",
    )
    parser.add_argument(
        "--verbose",
        "-v",
        action="store_true",
        help="Enable verbose logging",
    )
    args = parser.parse_args()

    setup_colored_logging(args.verbose)
    logger = logging.getLogger(__name__)

    results_path = Path(args.results)
    try:
        results = read_results(results_path)
        paths = emit_plots(results, args.output_dir or results_path.parent)
    except (OSError, HybridRateError) as e:
        logger.error(f"Plotting failed: {e}")
        sys.exit(1)

    for path in paths:
        print(path)


if __name__ == "__main__":
    main()
