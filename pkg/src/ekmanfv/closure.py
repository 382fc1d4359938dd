"""One-equation TKE closure for the eddy diffusivities above the surface layer.

Prognostic turbulent kinetic energy ``e`` per cell,

    de/dt = d/dz(K_e de/dz) + K_u |du/dz|^2 - K_theta N^2 - c_eps e^{3/2}/l_eps,

advanced with an implicit step (transport implicit, dissipation linearized
around the current e).  Diffusivities are diagnosed as ``K_u = c_k l_m sqrt(e)``
at the interfaces; heat gets a stability-dependent turbulent Prandtl number.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, UnsupportedConfigurationError
from .grid import VerticalGrid
from .spline import TridiagonalSystem, solve_tridiagonal
from .surface import MOParameters, SurfaceState


@dataclass(frozen=True)
class ClosureConstants:
    c_k: float = 0.1
    c_eps: float = 0.7
    c_mu: float = 0.09
    e_min: float = 1e-6         # TKE floor (m^2/s^2)
    l_inf: float = 100.0        # asymptotic mixing length (m)
    pr_slope: float = 5.0       # Pr_t = 1 + pr_slope * Ri for stable Ri
    pr_max: float = 10.0


@dataclass
class TkeState:
    """Per-cell TKE and lengths, per-interface diffusivities."""

    e: np.ndarray
    l_m: np.ndarray
    l_eps: np.ndarray
    k_u: np.ndarray
    k_theta: np.ndarray

    @classmethod
    def initial(cls, grid: VerticalGrid, constants: ClosureConstants,
                params: MOParameters) -> "TkeState":
        e = np.full(grid.n_cells, constants.e_min)
        l_m, l_eps = mixing_length(grid, e, np.zeros(grid.n_cells), constants, params)
        k_cells = constants.c_k * l_m * np.sqrt(e)
        k_u = _cells_to_interfaces(k_cells)
        return cls(e=e, l_m=l_m, l_eps=l_eps, k_u=k_u, k_theta=k_u.copy())


def _cells_to_interfaces(values: np.ndarray) -> np.ndarray:
    out = np.empty(values.size + 1)
    out[1:-1] = 0.5 * (values[:-1] + values[1:])
    out[0] = values[0]
    out[-1] = values[-1]
    return out


def _interfaces_to_cells(values: np.ndarray) -> np.ndarray:
    return 0.5 * (values[:-1] + values[1:])


def mixing_length(grid: VerticalGrid, e: np.ndarray, n2_cells: np.ndarray,
                  constants: ClosureConstants, params: MOParameters):
    """Wall-limited mixing length, capped under stable stratification.

    1/l = 1/(kappa (z + z_r)) + 1/l_inf near the wall, and l <= sqrt(2 e / N^2)
    wherever N^2 > 0.  The dissipation length equals the mixing length.
    """
    z = grid.centers
    wall = params.kappa * (z + params.z_r)
    blended = wall * constants.l_inf / (wall + constants.l_inf)
    stable = n2_cells > 0
    cap = np.full_like(blended, np.inf)
    cap[stable] = np.sqrt(2.0 * np.maximum(e[stable], constants.e_min)
                          / n2_cells[stable])
    l_m = np.minimum(blended, cap)
    return l_m, l_m.copy()


def eddy_diffusivities(state: TkeState, n2: np.ndarray, grid: VerticalGrid,
                       shear2: np.ndarray | None = None,
                       constants: ClosureConstants = ClosureConstants()):
    """Interface diffusivities from the cell TKE and mixing lengths.

    ``n2`` and (optional) ``shear2`` are per-interface; the gradient Richardson
    number raises the turbulent Prandtl number under stable stratification.
    """
    if n2.shape != (grid.n_cells + 1,):
        raise DimensionMismatchError("n2 must be per-interface")
    k_cells = constants.c_k * state.l_m * np.sqrt(np.maximum(state.e, constants.e_min))
    k_u = _cells_to_interfaces(k_cells)
    if shear2 is None:
        prandtl = np.ones_like(k_u)
    else:
        ri = n2 / np.maximum(shear2, 1e-12)
        prandtl = np.clip(1.0 + constants.pr_slope * np.maximum(ri, 0.0),
                          1.0, constants.pr_max)
    return k_u, k_u / prandtl


def step_tke(state: TkeState, shear2: np.ndarray, n2: np.ndarray, dt: float,
             grid: VerticalGrid, surface: SurfaceState,
             constants: ClosureConstants = ClosureConstants(),
             dirichlet_cells: int = 1, flux_free: bool = False,
             clip: bool = True) -> TkeState:
    """Advance the TKE one implicit step.

    Shear production and buoyancy are per-interface inputs averaged to cells;
    transport uses the current ``k_u``; dissipation is linearized with the
    current ``sqrt(e)``.  The lowest ``dirichlet_cells`` cells are pinned to
    the surface value ``(u_star / sqrt(c_mu))^2`` unless ``flux_free`` is set
    (then both boundaries are zero-flux, for budget checks).
    """
    if dt <= 0:
        raise UnsupportedConfigurationError(f"dt must be positive, got {dt}")
    m = grid.n_cells
    if shear2.shape != (m + 1,) or n2.shape != (m + 1,):
        raise DimensionMismatchError("shear2 and n2 must be per-interface")
    production = _interfaces_to_cells(state.k_u * shear2)
    buoyancy = _interfaces_to_cells(state.k_theta * n2)
    h = grid.cell_sizes
    centers = grid.centers
    dist = np.diff(centers)                      # center-to-center distances
    k_e = state.k_u[1:-1]                        # transport coefficient at interfaces

    sub = np.zeros(m)
    sup = np.zeros(m)
    main = np.ones(m)
    up = k_e / dist                              # flux coefficient at interior interfaces
    main[:-1] += dt * up / h[:-1]
    sup[:-1] = -dt * up / h[:-1]
    main[1:] += dt * up / h[1:]
    sub[1:] = -dt * up / h[1:]
    main += dt * constants.c_eps * np.sqrt(np.maximum(state.e, 0.0)) / state.l_eps
    rhs = state.e + dt * (production - buoyancy)

    if not flux_free and dirichlet_cells > 0:
        e_surface = (surface.u_star / np.sqrt(constants.c_mu)) ** 2
        for i in range(min(dirichlet_cells, m)):
            sub[i] = 0.0
            sup[i] = 0.0
            main[i] = 1.0
            rhs[i] = e_surface

    e_new = solve_tridiagonal(TridiagonalSystem(sub, main, sup, rhs)).real
    if clip:
        e_new = np.maximum(e_new, constants.e_min)
    return TkeState(e=e_new, l_m=state.l_m, l_eps=state.l_eps,
                    k_u=state.k_u, k_theta=state.k_theta)
