"""capmono-plot: static images of F/G curves and inequality margins."""

from .render import PanelResult, PlotSpec, RenderResult, ReportError, load_report, render

__version__ = "0.1.0"

__all__ = ["PlotSpec", "PanelResult", "RenderResult", "ReportError", "load_report", "render"]
