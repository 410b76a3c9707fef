"""Figure rendering for agesched sweep CSVs."""

from .figures import KINDS, REQUIRED_COLUMNS, FigureSpec, SchemaMismatch, render

__all__ = ["KINDS", "REQUIRED_COLUMNS", "FigureSpec", "SchemaMismatch", "render"]
