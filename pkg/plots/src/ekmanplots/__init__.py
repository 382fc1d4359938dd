"""Standalone figure renderer for ekmanfv consistency-report directories."""

__version__ = "0.1.0"

from .figures import render_neutral, render_stratified
from .reader import SchemaError, read_report_csv

__all__ = ["render_neutral", "render_stratified", "read_report_csv",
           "SchemaError", "__version__"]
