#!/usr/bin/env python
"""Script to run a Monte Carlo sweep over the benchmark schemes."""

import argparse
import asyncio
import logging
import sys
from pathlib import Path

# Add src to path
sys.path.append(str(Path(__file__).parent.parent / "src"))

from hybrid_rate_ris.errors import HybridRateError
from hybrid_rate_ris.experiments.plots import emit_plots
from hybrid_rate_ris.experiments.sweep import SweepParameter, SweepSpec, run_sweep
from hybrid_rate_ris.model.config import load_scenario
from hybrid_rate_ris.orchestrator import Scheme
from hybrid_rate_ris.utils.logging import setup_colored_logging

# Feasible on most channel draws; the simulation defaults in NetworkConfig are not.
DEFAULT_SCENARIO = Path(__file__).parent.parent / "scenarios" / "reproduction.json"

DEFAULT_GRIDS = {
    SweepParameter.ITERATIONS: [float(i) for i in range(11)],
    SweepParameter.RIS_Y: [10.0, 20.0, 30.0, 40.0, 50.0],
    SweepParameter.NUM_ELEMENTS: [5.0, 10.0, 15.0, 20.0],
    SweepParameter.POWER_BUDGET_DBM: [5.0, 10.0, 15.0, 20.0, 25.0],
    SweepParameter.WEIGHT_LAMBDA: [0.0, 0.25, 0.5, 0.75, 1.0],
}


async def main() -> None:
    """Run a sweep and write results.csv, trials.csv and plots."""
    parser = argparse.ArgumentParser(description="Run a hybrid-rate Monte Carlo sweep")
    parser.add_argument(
        "--sweep",
        type=str,
        required=True,
        choices=[str(p) for p in SweepParameter],
        help="Parameter to sweep",
    )
    parser.add_argument(
        "--values",
        type=float,
        nargs="+",
        default=None,
        help="Grid values (default: a built-in grid per parameter)",
    )
    parser.add_argument(
        "--scenario",
        type=str,
        default=str(DEFAULT_SCENARIO),
        help="Scenario JSON file (default: scenarios/reproduction.json)",
    )
    parser.add_argument(
        "--trials",
        type=int,
        default=None,
        help="Monte Carlo trials per grid value (default: scenario's trials)",
    )
    parser.add_argument(
        "--schemes",
        type=str,
        nargs="+",
        default=[str(s) for s in Scheme],
        choices=[str(s) for s in Scheme],
        help="Schemes to compare (default: all)",
    )
    parser.add_argument("--seed", type=int, default=None, help="Base seed (default: scenario's)")
    parser.add_argument(
        "--workers",
        type=int,
        default=1,
        help="Worker processes (default: 1)",
    )
    parser.add_argument("--num-airfl", type=int, default=None, help="Override AirFL user count")
    parser.add_argument("--num-noma", type=int, default=None, help="Override NOMA user count")
    parser.add_argument(
        "--output-dir",
        type=str,
        default="./results",
        help="Directory for CSV results and plots (default: ./results)",
    )
    parser.add_argument("--no-plots", action="store_true", help="Skip plot generation")
    parser.add_argument(
        "--verbose",
        "-v",
        action="store_true",
        help="Enable verbose logging",
    )
    args = parser.parse_args()

    setup_colored_logging(args.verbose)
    logger = logging.getLogger(__name__)

    try:
        config, settings = load_scenario(args.scenario)
        parameter = SweepParameter(args.sweep)
        output_dir = Path(args.output_dir) / str(parameter)
        spec = SweepSpec(
            parameter=parameter,
            values=tuple(args.values or DEFAULT_GRIDS[parameter]),
            trials=args.trials or config.trials,
            schemes=tuple(Scheme(s) for s in args.schemes),
            output_dir=output_dir,
            seed=config.rng_seed if args.seed is None else args.seed,
            workers=args.workers,
            num_airfl=args.num_airfl,
            num_noma=args.num_noma,
        )
        results = await run_sweep(spec, config, settings)
        if not args.no_plots:
            emit_plots(results, output_dir)
    except HybridRateError as e:
        logger.error(f"Sweep failed: {e}")
        sys.exit(1)

    print(f"\nWrote sweep results to {output_dir}")


if __name__ == "__main__":
    asyncio.run(main())
