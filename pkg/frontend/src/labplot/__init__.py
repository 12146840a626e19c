"""Figure rendering for lab experiment CSV outputs."""

from .figures import (
    KIND_EXPERIMENTS,
    REQUIRED_COLUMNS,
    EmptyInputError,
    FigureSpec,
    SchemaMismatchError,
    UnknownKindError,
    fit_crossing_decay,
    iso_qq_points,
    read_rows,
    render,
)

__version__ = "0.1.0"

__all__ = [
    "KIND_EXPERIMENTS",
    "REQUIRED_COLUMNS",
    "EmptyInputError",
    "FigureSpec",
    "SchemaMismatchError",
    "UnknownKindError",
    "fit_crossing_decay",
    "iso_qq_points",
    "read_rows",
    "render",
    "__version__",
]
