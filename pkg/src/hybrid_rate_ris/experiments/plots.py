"""Line charts of sweep results."""

import logging
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from hybrid_rate_ris.errors import DomainError  # noqa: E402

logger = logging.getLogger(__name__)

AXIS_LABELS = {
    "iterations": "Outer iteration",
    "ris_y": "RIS y-coordinate (m)",
    "num_elements": "Number of reflecting elements",
    "power_budget_dbm": "Transmit power budget (dBm)",
    "weight_lambda": "Weight λ",
}


@dataclass(frozen=True)
class PlotStyle:
    figsize: tuple[float, float] = (6.4, 4.4)
    dpi: int = 120
    marker: str = "o"
    rate_scale: float = 1e6
    rate_label: str = "Mean hybrid rate (Mbit/s)"


def emit_plots(
    results: pd.DataFrame, output_dir: str | Path, style: PlotStyle | None = None
) -> list[Path]:
    """Write one PNG line chart per swept parameter, one series per scheme.

    Args:
        results: Summary table as written by ``run_sweep``
        output_dir: Destination directory
        style: Figure options

    Returns:
        Paths of the written images
    """
    style = style or PlotStyle()
    if results.empty:
        raise DomainError("Cannot plot an empty results table")
    missing = {"sweep_value", "scheme", "mean_rate", "parameter"} - set(results.columns)
    if missing:
        raise DomainError(f"Results table lacks columns {sorted(missing)}")

    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for parameter, table in results.groupby("parameter", sort=True):
        fig, ax = plt.subplots(figsize=style.figsize)
        for scheme, series in table.groupby("scheme", sort=True):
            series = series.sort_values("sweep_value")
            ax.plot(
                series["sweep_value"],
                series["mean_rate"] / style.rate_scale,
                marker=style.marker,
                label=str(scheme),
            )
        ax.set_xlabel(AXIS_LABELS.get(str(parameter), str(parameter)))
        ax.set_ylabel(style.rate_label)
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()

        path = output_dir / f"{parameter}.png"
        fig.savefig(path, format="png", dpi=style.dpi, metadata={"Software": None})
        plt.close(fig)
        logger.info(f"Wrote plot {path}")
        written.append(path)
    return written
