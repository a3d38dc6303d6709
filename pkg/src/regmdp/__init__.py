"""Tabular MDPs with general policy regularizers phi: projection, solvers, analysis."""

__version__ = "0.1.0"
