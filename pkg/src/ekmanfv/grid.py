"""Vertical grids for the 1D column.

A grid is the ordered list of interface heights ``z_0 = 0 < z_1 < ... < z_M``.
Cell ``m`` spans ``(z_m, z_{m+1})``, has size ``h[m] = z_{m+1} - z_m`` and
center ``(z_m + z_{m+1}) / 2``.  All prognostic cell averages are aligned with
these cells, all fluxes/derivatives with the interfaces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import GridError

_RATIO_TOL = 1e-12  # bisection width for the geometric stretch ratio


@dataclass(frozen=True)
class VerticalGrid:
    """Interfaces, cell sizes and cell centers of a 1D column."""

    interfaces: np.ndarray
    cell_sizes: np.ndarray = field(init=False)
    centers: np.ndarray = field(init=False)

    def __post_init__(self):
        z = np.asarray(self.interfaces, dtype=float)
        if z.ndim != 1 or z.size < 3:
            raise GridError("need at least two cells (three interface heights)")
        if z[0] != 0.0:
            raise GridError(f"first interface must be 0, got {z[0]!r}")
        if np.any(np.diff(z) <= 0):
            raise GridError("interface heights must be strictly increasing")
        z = z.copy()
        z.flags.writeable = False
        object.__setattr__(self, "interfaces", z)
        sizes = np.diff(z)
        sizes.flags.writeable = False
        object.__setattr__(self, "cell_sizes", sizes)
        centers = 0.5 * (z[:-1] + z[1:])
        centers.flags.writeable = False
        object.__setattr__(self, "centers", centers)

    @property
    def n_cells(self) -> int:
        return self.interfaces.size - 1

    @property
    def column_height(self) -> float:
        return float(self.interfaces[-1])

    def __eq__(self, other) -> bool:
        if not isinstance(other, VerticalGrid):
            return NotImplemented
        return np.array_equal(self.interfaces, other.interfaces)

    def save(self, path) -> None:
        """Write one interface height per line, ascending, first line 0."""
        lines = [format(z, ".17g") for z in self.interfaces]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "VerticalGrid":
        """Read a grid file written by :meth:`save` (``#`` comments allowed)."""
        heights = []
        for raw in Path(path).read_text().splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                heights.append(float(line))
            except ValueError as exc:
                raise GridError(f"bad height line {raw!r} in {path}") from exc
        return load_levels(heights)


def build_uniform(n_cells: int, column_height: float) -> VerticalGrid:
    """``n_cells`` equal cells spanning ``[0, column_height]``."""
    if n_cells < 2:
        raise GridError(f"need at least 2 cells, got {n_cells}")
    if column_height <= 0:
        raise GridError(f"column height must be positive, got {column_height}")
    return VerticalGrid(np.linspace(0.0, column_height, n_cells + 1))


def build_stretched(uniform_cells: int, uniform_size: float,
                    stretched_cells: int, top_height: float,
                    stretch_law: str = "geometric") -> VerticalGrid:
    """Uniform block topped by a geometrically stretched block.

    The stretched cell sizes are ``uniform_size * r**j`` (j = 1..stretched_cells)
    with the ratio ``r >= 1`` chosen by bisection so that the last interface
    lands exactly on ``top_height``.
    """
    if stretch_law != "geometric":
        raise GridError(f"unknown stretch law {stretch_law!r}")
    if uniform_cells < 1 or uniform_size <= 0:
        raise GridError("uniform block must have at least one cell of positive size")
    z_uniform = uniform_cells * uniform_size
    uniform = np.arange(uniform_cells + 1) * uniform_size
    if stretched_cells == 0:
        if abs(z_uniform - top_height) > 1e-9 * top_height:
            raise GridError("no stretched cells: top height must equal the uniform block top")
        return VerticalGrid(uniform)
    remainder = top_height - z_uniform
    target = remainder / uniform_size  # sum of r**j must equal this
    if target < stretched_cells:
        raise GridError(
            f"top height {top_height} unreachable with non-shrinking cells "
            f"(needs stretch ratio < 1)")

    def partial_sum(r: float) -> float:
        return float(np.sum(r ** np.arange(1, stretched_cells + 1)))

    lo, hi = 1.0, 2.0
    while partial_sum(hi) < target:
        hi *= 2.0
    while hi - lo > _RATIO_TOL:
        mid = 0.5 * (lo + hi)
        if partial_sum(mid) < target:
            lo = mid
        else:
            hi = mid
    ratio = 0.5 * (lo + hi)
    sizes = uniform_size * ratio ** np.arange(1, stretched_cells + 1)
    stretched = z_uniform + np.cumsum(sizes)
    stretched[-1] = top_height  # absorb the residual bisection error
    return VerticalGrid(np.concatenate([uniform, stretched]))


def load_levels(heights) -> VerticalGrid:
    """Grid with exactly the given interface heights (must start at 0)."""
    return VerticalGrid(np.asarray(heights, dtype=float))


def refine(grid: VerticalGrid, factor: int) -> VerticalGrid:
    """Split every cell into ``factor`` equal sub-cells.

    The parent interfaces are reused verbatim, so they are a bit-exact subset
    of the refined interfaces.
    """
    if factor < 2:
        raise GridError(f"refinement factor must be >= 2, got {factor}")
    pieces = []
    z = grid.interfaces
    for m in range(grid.n_cells):
        pieces.append(np.linspace(z[m], z[m + 1], factor + 1)[:-1])
    pieces.append(z[-1:])
    return VerticalGrid(np.concatenate(pieces))


def ifs_l137_lowest25() -> VerticalGrid:
    """The 25-cell grid built from the lowest levels of the ECMWF IFS L137 setup.

    The shipped data file holds 26 interface heights: the surface plus the
    standard-atmosphere geometric altitudes of IFS model levels 137..113.
    """
    ref = resources.files("ekmanfv").joinpath("data/ifs_l137_lowest25.txt")
    with resources.as_file(ref) as path:
        return VerticalGrid.load(path)
