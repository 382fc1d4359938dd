"""Quadratic-spline finite-volume reconstruction.

Cell averages plus interface derivatives define one quadratic per cell,

    S(xi) = mean + (phi_R + phi_L)/2 * xi + (phi_R - phi_L)/(2 h) * (xi^2 - h^2/12),

with ``xi`` measured from the cell center.  The ``-h^2/12`` term makes the
cell average of S equal ``mean`` exactly, and ``S'(+-h/2) = phi_R, phi_L``.
Requiring the reconstruction to be continuous across interior interfaces
couples the derivatives through the compact relation

    h[m-1]/6 * phi[m-1] + (h[m-1]+h[m])/3 * phi[m] + h[m]/6 * phi[m+1]
        = mean[m] - mean[m-1],

assembled here as a tridiagonal system closed by one boundary row per end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (DimensionMismatchError, OutOfDomainError,
                     SingularSystemError, UnsupportedConfigurationError)
from .grid import VerticalGrid

_PIVOT_RTOL = 1e-14  # |pivot| below this times the row scale is singular

#: Interior-row weights (sub/diagonal split, superdiagonal) per variant.
#: "spline" is the C1 quadratic-spline relation used by the solver.
#: "fourth_order" is the genuinely fourth-order compact deconvolution
#: (weights h/12, 5h/12 + 5h/12, h/12); it does not correspond to a C1
#: reconstruction and is provided for accuracy diagnostics only.
INTERIOR_VARIANTS = {
    "spline": (1.0 / 6.0, 1.0 / 3.0),
    "fourth_order": (1.0 / 12.0, 5.0 / 12.0),
}


@dataclass(frozen=True)
class TridiagonalSystem:
    """Rows ``sub[i] x[i-1] + main[i] x[i] + sup[i] x[i+1] = rhs[i]``."""

    sub: np.ndarray   # sub[0] is unused
    main: np.ndarray
    sup: np.ndarray   # sup[-1] is unused
    rhs: np.ndarray

    def __post_init__(self):
        n = self.main.size
        for name in ("sub", "sup", "rhs"):
            if getattr(self, name).size != n:
                raise DimensionMismatchError(
                    f"{name} has size {getattr(self, name).size}, expected {n}")

    @property
    def size(self) -> int:
        return self.main.size

    def residual(self, x: np.ndarray) -> np.ndarray:
        """Row-wise residual of a candidate solution."""
        r = self.main * x - self.rhs
        r[1:] += self.sub[1:] * x[:-1]
        r[:-1] += self.sup[:-1] * x[1:]
        return r


@dataclass(frozen=True)
class EdgeRow:
    """One linear boundary row ``edge * phi_edge + neighbor * phi_next = rhs``."""

    edge: complex
    neighbor: complex
    rhs: complex

    @classmethod
    def fixed_derivative(cls, value) -> "EdgeRow":
        return cls(1.0, 0.0, value)

    @classmethod
    def zero_derivative(cls) -> "EdgeRow":
        return cls(1.0, 0.0, 0.0)


def compact_interior_coefficients(sizes: np.ndarray, variant: str = "spline"):
    """(sub, main, sup) weights of the interior rows for interfaces 1..M-1."""
    try:
        small, big = INTERIOR_VARIANTS[variant]
    except KeyError:
        raise UnsupportedConfigurationError(f"unknown interior variant {variant!r}")
    h_below = sizes[:-1]
    h_above = sizes[1:]
    return small * h_below, big * (h_below + h_above), small * h_above


def assemble_compact_system(grid: VerticalGrid, values: np.ndarray,
                            bottom: EdgeRow, top: EdgeRow,
                            variant: str = "spline") -> TridiagonalSystem:
    """Tridiagonal system for the interface derivatives of a cell-average field."""
    values = np.asarray(values)
    if values.shape != (grid.n_cells,):
        raise DimensionMismatchError(
            f"field has shape {values.shape}, grid has {grid.n_cells} cells")
    dtype = np.result_type(values.dtype, float)
    n = grid.n_cells + 1
    sub = np.zeros(n, dtype=dtype)
    main = np.zeros(n, dtype=dtype)
    sup = np.zeros(n, dtype=dtype)
    rhs = np.zeros(n, dtype=dtype)
    lo, mid, hi = compact_interior_coefficients(grid.cell_sizes, variant)
    sub[1:-1] = lo
    main[1:-1] = mid
    sup[1:-1] = hi
    rhs[1:-1] = values[1:] - values[:-1]
    main[0], sup[0], rhs[0] = bottom.edge, bottom.neighbor, bottom.rhs
    main[-1], sub[-1], rhs[-1] = top.edge, top.neighbor, top.rhs
    return TridiagonalSystem(sub, main, sup, rhs)


def solve_tridiagonal(system: TridiagonalSystem) -> np.ndarray:
    """Thomas elimination with near-zero pivot detection."""
    n = system.size
    sub, main, sup, rhs = system.sub, system.main, system.sup, system.rhs
    scale = np.abs(main) + np.abs(sub) + np.abs(sup)
    diag = main.astype(np.result_type(main.dtype, float), copy=True)
    out = rhs.astype(np.result_type(rhs.dtype, diag.dtype), copy=True)
    upper = sup.astype(diag.dtype, copy=True)
    for i in range(1, n):
        piv = diag[i - 1]
        if abs(piv) < _PIVOT_RTOL * max(scale[i - 1], 1e-300):
            raise SingularSystemError(f"near-zero pivot at row {i - 1}")
        w = sub[i] / piv
        diag[i] = diag[i] - w * upper[i - 1]
        out[i] = out[i] - w * out[i - 1]
    piv = diag[-1]
    if abs(piv) < _PIVOT_RTOL * max(scale[-1], 1e-300):
        raise SingularSystemError(f"near-zero pivot at row {n - 1}")
    out[-1] = out[-1] / piv
    for i in range(n - 2, -1, -1):
        out[i] = (out[i] - upper[i] * out[i + 1]) / diag[i]
    return out


@dataclass(frozen=True)
class CellSpline:
    """The quadratic reconstruction of a single cell."""

    mean: complex
    h: float
    phi_left: complex
    phi_right: complex
    center: float

    def __post_init__(self):
        if self.h <= 0:
            raise UnsupportedConfigurationError(f"cell size must be positive, got {self.h}")

    @property
    def bottom(self) -> float:
        return self.center - 0.5 * self.h

    @property
    def top(self) -> float:
        return self.center + 0.5 * self.h

    def value_at_offset(self, xi):
        slope = 0.5 * (self.phi_right + self.phi_left)
        curve = 0.5 * (self.phi_right - self.phi_left) / self.h
        return self.mean + slope * xi + curve * (xi * xi - self.h * self.h / 12.0)

    def derivative_at_offset(self, xi):
        return (0.5 * (self.phi_right + self.phi_left)
                + (self.phi_right - self.phi_left) / self.h * xi)

    def evaluate(self, z):
        """Value at height ``z``; interfaces included, outside raises."""
        xi = np.asarray(z, dtype=float) - self.center
        slack = 0.5 * self.h * (1.0 + 1e-12) + 1e-12
        if np.any(np.abs(xi) > slack):
            raise OutOfDomainError(
                f"z={z} outside cell [{self.bottom}, {self.top}]")
        return self.value_at_offset(xi)

    def bottom_value(self):
        """Interface value at the cell bottom: mean - h*(phi_L/3 + phi_R/6)."""
        return self.mean - self.h * (self.phi_left / 3.0 + self.phi_right / 6.0)

    def top_value(self):
        """Interface value at the cell top: mean + h*(phi_R/3 + phi_L/6)."""
        return self.mean + self.h * (self.phi_right / 3.0 + self.phi_left / 6.0)


def spline_from_cell(mean, h: float, phi_left, phi_right, cell_center: float) -> CellSpline:
    return CellSpline(mean, h, phi_left, phi_right, cell_center)


def surface_subcell_split(z_bottom: float, z_top: float, cell_avg,
                          delta_a: float, sl_average,
                          phi_delta, phi_top) -> CellSpline:
    """Spline of the sub-cell ``(delta_a, z_top)`` of a partially submerged cell.

    ``cell_avg`` is the average over the full cell ``(z_bottom, z_top)`` and
    ``sl_average`` the average of the parameterized profile over the submerged
    part ``(z_bottom, delta_a)``; the sub-cell mean follows by exactness of
    the finite-volume aggregation.
    """
    if not z_bottom <= delta_a < z_top:
        raise UnsupportedConfigurationError(
            f"delta_a={delta_a} outside the cell [{z_bottom}, {z_top})")
    h_tilde = z_top - delta_a
    mean = ((z_top - z_bottom) * cell_avg
            - (delta_a - z_bottom) * sl_average) / h_tilde
    return CellSpline(mean, h_tilde, phi_delta, phi_top, 0.5 * (z_top + delta_a))


def first_cell_subsplit(grid: VerticalGrid, delta_a: float, u_avg_first,
                        phi_delta, phi_1, sl_average) -> CellSpline:
    """Sub-cell spline over ``(delta_a, z_1)`` from the first-cell average."""
    z1 = float(grid.interfaces[1])
    if not 0.0 < delta_a < z1:
        raise UnsupportedConfigurationError(
            f"surface-layer height {delta_a} must lie strictly inside the "
            f"first cell (0, {z1})")
    return surface_subcell_split(0.0, z1, u_avg_first, delta_a, sl_average,
                                 phi_delta, phi_1)


def cell_splines(grid: VerticalGrid, values: np.ndarray, phi: np.ndarray):
    """Per-cell splines of a reconstructed field."""
    if phi.shape != (grid.n_cells + 1,):
        raise DimensionMismatchError(
            f"phi has shape {phi.shape}, grid has {grid.n_cells + 1} interfaces")
    return [CellSpline(values[m], float(grid.cell_sizes[m]),
                       phi[m], phi[m + 1], float(grid.centers[m]))
            for m in range(grid.n_cells)]


def evaluate_profile(grid: VerticalGrid, values: np.ndarray, phi: np.ndarray,
                     heights) -> np.ndarray:
    """Evaluate the piecewise reconstruction at arbitrary heights."""
    heights = np.atleast_1d(np.asarray(heights, dtype=float))
    if np.any(heights < 0) or np.any(heights > grid.column_height):
        raise OutOfDomainError("evaluation heights outside the column")
    cells = np.clip(np.searchsorted(grid.interfaces, heights, side="right") - 1,
                    0, grid.n_cells - 1)
    out = np.empty(heights.shape, dtype=np.result_type(values.dtype, phi.dtype))
    for i, (z, m) in enumerate(zip(heights, cells)):
        spline = CellSpline(values[m], float(grid.cell_sizes[m]),
                            phi[m], phi[m + 1], float(grid.centers[m]))
        out[i] = spline.evaluate(z)
    return out
