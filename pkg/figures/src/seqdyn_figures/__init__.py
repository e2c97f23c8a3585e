"""Figure scripts for seqdyn experiment outputs; the CSV schema is the only contract."""

__version__ = "0.1.0"

from .render import FigureSpec, render
from .schema import SchemaError

__all__ = ["FigureSpec", "render", "SchemaError"]
