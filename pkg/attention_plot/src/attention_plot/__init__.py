"""Render attention dump files (JSON lines, one record per channel) as heatmaps."""

from .plot import DumpFormatError, build_figure, heatmap_axes, load_dump, plot

__all__ = ["DumpFormatError", "build_figure", "heatmap_axes", "load_dump", "plot"]
__version__ = "0.1.0"
