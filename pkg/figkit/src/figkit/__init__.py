"""Figure regeneration for sweep CSV tables."""

from .io import CsvFormatError, apply_filters, read_rows
from .plots import FIGURE_KINDS, FigureSpec, moving_average, render

__version__ = "0.1.0"
