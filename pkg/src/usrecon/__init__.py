"""Freehand 3D ultrasound reconstruction toolkit.

Transform algebra, probe calibration, dense-displacement-field evaluation,
benchmark scoring/ranking statistics, and a geometric scan simulator.
"""

from . import calib, ddf, formats, metrics, ranking, se3, sim
from .errors import (
    DegenerateGeometryError,
    DegenerateSignalError,
    FormatError,
    InsufficientDataError,
    InvalidInputError,
    InvalidLandmarkError,
    SchemaError,
    UsreconError,
    ValidationError,
)

__all__ = [
    "calib",
    "ddf",
    "formats",
    "metrics",
    "ranking",
    "se3",
    "sim",
    "DegenerateGeometryError",
    "DegenerateSignalError",
    "FormatError",
    "InsufficientDataError",
    "InvalidInputError",
    "InvalidLandmarkError",
    "SchemaError",
    "UsreconError",
    "ValidationError",
]

__version__ = "0.1.0"
