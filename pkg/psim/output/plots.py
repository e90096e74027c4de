"""Log-scale line plots of diagnostic time series."""

import logging
from pathlib import Path
from typing import Mapping, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

logger = logging.getLogger(__name__)


def plot_series(
    path: Union[str, Path],
    times: Sequence[float],
    series: Mapping[str, Sequence[float]],
    ylabel: str,
    title: str = "",
) -> Path:
    """Draw ``series`` against ``times`` on a logarithmic y axis and save as SVG.

    Non-positive and missing values are left out of each curve.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    t = np.asarray(times, dtype=float)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    try:
        for label, values in series.items():
            y = np.asarray(values, dtype=float)
            y = np.where(np.isfinite(y) & (y > 0), y, np.nan)
            if np.all(np.isnan(y)):
                continue
            ax.semilogy(t, y, label=label)
        ax.set_xlabel("time")
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.grid(True, which="both", alpha=0.3)
        if ax.get_legend_handles_labels()[0]:
            ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg")
    finally:
        plt.close(fig)
    logger.debug("wrote plot %s", path)
    return path
