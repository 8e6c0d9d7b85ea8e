"""Figure rendering for the lattice localization laboratory: turns the
simulation package's CSV result tables into publication-style images,
with closed-form overlays cross-checked against oracle value tables."""

from .errors import (
    PamfigsError,
    SpecError,
    SchemaError,
    EmptyDataError,
    OverlayMismatchError,
)
from .overlays import (
    ORACLE_TOL,
    check_against_oracle,
    gumbel_cdf,
    laplace_cdf,
    tail_asymptote,
)
from .render import render
from .spec import FIGURE_KINDS, FigureSpec, load_spec
from .tables import Table, read_table

__all__ = [
    "PamfigsError",
    "SpecError",
    "SchemaError",
    "EmptyDataError",
    "OverlayMismatchError",
    "ORACLE_TOL",
    "check_against_oracle",
    "gumbel_cdf",
    "laplace_cdf",
    "tail_asymptote",
    "render",
    "FIGURE_KINDS",
    "FigureSpec",
    "load_spec",
    "Table",
    "read_table",
]
