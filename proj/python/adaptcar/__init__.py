"""Locally adaptive CAR models for areal data.

Thin wrapper over the C++ core: fit a Leroux CAR model, iteratively estimate
the neighbourhood matrix to find boundaries, test residual autocorrelation,
and draw synthetic data sets.
"""

from ._core import (
    Graph,
    ModelError,
    NumericalError,
    ParseError,
    __version__,
    boundaries,
    fit,
    moran_test,
    morans_i,
    simulate,
)

__all__ = [
    "Graph",
    "ModelError",
    "NumericalError",
    "ParseError",
    "__version__",
    "boundaries",
    "fit",
    "moran_test",
    "morans_i",
    "simulate",
]
