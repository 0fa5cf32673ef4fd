"""Timing chart for `compare --plot`."""
import logging
from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from ..errors import IoError  # noqa: E402

logger = logging.getLogger(__name__)


def plot_stage_timings(table: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Grouped bars of the median per-stage time of both methods.

    `table` is the frame returned by `results.compare_table`.
    """
    stages = list(table.index)
    x = np.arange(len(stages))
    width = 0.38

    fig, ax = plt.subplots(figsize=(9, 4.5))
    ax.bar(x - width / 2, table["dtd_median"], width, label="detection-tracking-detection")
    ax.bar(x + width / 2, table["baseline_median"], width, label="frame-by-frame")
    ax.set_xticks(x)
    ax.set_xticklabels(stages)
    ax.set_ylabel("median time per frame (ms)")
    ax.set_title("Per-stage timing")
    ax.legend()
    fig.tight_layout()

    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, dpi=100)
    except OSError as e:
        raise IoError(path, e.strerror or str(e)) from e
    finally:
        plt.close(fig)
    logger.info("Saved timing chart to %s", path)
    return path
