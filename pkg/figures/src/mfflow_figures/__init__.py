"""Static figure rendering for mfflow run directories.

Reads the tidy per-figure CSVs that ``mfflow emit-figure-data`` writes
into a run directory and renders raster analogs of the three experiment
figures: weight-trajectory overlays, perpendicular-dependence curves,
and angle histograms with log-log distance curves.
"""

from .data import FigureDataError, load_table
from .render import FigureSpec, render

__version__ = "0.1.0"

__all__ = [
    "FigureDataError",
    "FigureSpec",
    "__version__",
    "load_table",
    "render",
]
