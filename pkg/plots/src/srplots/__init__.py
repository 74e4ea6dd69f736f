"""Figure rendering for symbolic-regression MOGP experiment artifacts."""

from .render import FIGURE_KINDS, FigureSpec, SchemaError, render

__all__ = ["FIGURE_KINDS", "FigureSpec", "SchemaError", "render"]
