"""Flat-torus geometry: canonical coordinates, metric, exponential charts.

Points on T^d are numpy arrays with every coordinate in [0, 1); ``wrap``
is the canonical constructor.  The metric is the Euclidean one on the
quotient, realized by reducing coordinate differences to the shortest
lattice representative.  On a flat torus the exponential map at x is a
translation in the chart, so ``expmap`` and ``logmap`` invert each other
exactly while their operands stay inside the injectivity radius.

All functions broadcast over leading axes; the last axis is the
coordinate axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ChartError

# per-coordinate injectivity threshold of the torus exponential
RHO0_DEFAULT = 0.5
# default working radius for solver iterates
RHO_DEFAULT = 0.05


@dataclass(frozen=True)
class ChartConfig:
    """Chart radii: ``rho0`` bounds the exponential chart, ``rho`` the working ball."""

    rho0: float = RHO0_DEFAULT
    rho: float = RHO_DEFAULT

    def __post_init__(self) -> None:
        if not 0.0 < self.rho0 <= 0.5:
            raise ValueError(f"rho0 must lie in (0, 0.5], got {self.rho0}")
        if not 0.0 < self.rho < self.rho0 / 2.0:
            raise ValueError(f"rho must lie in (0, rho0/2), got {self.rho}")


def wrap(coords) -> np.ndarray:
    """Reduce coordinates mod 1 into [0, 1); rejects non-finite input."""
    arr = np.asarray(coords, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ChartError("non-finite coordinate in point")
    out = np.mod(arr, 1.0)
    # np.mod rounds up to exactly 1.0 for tiny negative inputs
    return np.where(out >= 1.0, 0.0, out)


def minimal_rep(delta) -> np.ndarray:
    """Shift each coordinate difference by an integer into [-1/2, 1/2]."""
    delta = np.asarray(delta, dtype=float)
    return delta - np.round(delta)


def dist(x, y):
    """Torus distance: Euclidean norm of the coordinatewise minimal representative."""
    d = np.linalg.norm(minimal_rep(np.asarray(y, float) - np.asarray(x, float)), axis=-1)
    return float(d) if np.ndim(d) == 0 else d


def expmap(x, v, rho0: float = RHO0_DEFAULT) -> np.ndarray:
    """Exponential at x: wrap(x + v).  Requires norm(v) <= rho0 (boundary inclusive)."""
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    n = np.linalg.norm(v, axis=-1)
    if np.any(n > rho0):
        raise ChartError(
            f"tangent vector norm {float(np.max(n)):.6g} exceeds chart radius {rho0}"
        )
    return wrap(x + v)


def logmap(x, y, rho0: float = RHO0_DEFAULT) -> np.ndarray:
    """Chart logarithm: the unique v with norm <= rho0 and expmap(x, v) == y."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    v = minimal_rep(y - x)
    n = np.linalg.norm(v, axis=-1)
    if np.any(n > rho0):
        raise ChartError(
            f"points at distance {float(np.max(n)):.6g} exceed chart radius {rho0}"
        )
    return v
