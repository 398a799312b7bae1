"""Figure rendering for simulation run directories (rounds.csv + summary.json)."""

from .render import FigureSpec, ReportError, render

__all__ = ["FigureSpec", "ReportError", "render"]
