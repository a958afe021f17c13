# plots/src/qmpx_plots/__init__.py

"""Render averaged-MSE curves from qmpx sweep CSV files."""

from .render import CurveSet, MalformedCsv, load_curves, render

__all__ = ["CurveSet", "MalformedCsv", "load_curves", "render"]

__version__ = "0.1.0"
