"""Implicit-Euler integration of the column model.

Each step solves one linear system coupling, per resolved cell m,

    (1 + i f dt) u[m] - dt/h[m] * (K[m+1] phi[m+1] - K[m] phi[m])
        = u^n[m] + i f dt u_G,

with the compact spline relation at every interior interface, the surface
scheme's boundary row at the bottom and a zero-flux (or fixed-value) row at
the top.  Diffusivities and friction scales are frozen at step start, the
flux direction is semi-implicit, so the step is a single banded solve.

Scheme geometry: FD and FV1 resolve all grid cells.  FV free excludes the
surface layer ``(0, delta_a)``: whole cells below ``delta_a`` are filled from
the parameterized profile and the cell containing ``delta_a`` is replaced by
its resolved sub-cell.  FV2 is the same machinery with ``delta_a = z_1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from . import surface as sl
from .closure import ClosureConstants, TkeState, eddy_diffusivities, mixing_length, step_tke
from .errors import NumericsError, UnsupportedConfigurationError
from .grid import VerticalGrid
from .spline import TridiagonalSystem, solve_tridiagonal
from .surface import MOParameters, SchemeKind, SurfaceState

_STRATIFICATIONS = ("neutral", "stable", "unstable")
_SECONDS_PER_DAY = 86400.0


@dataclass(frozen=True)
class SimulationConfig:
    grid: VerticalGrid
    dt: float = 30.0
    duration: float = 86400.0
    f: float = 1e-4
    u_g: complex = 8.0 + 0.0j
    scheme: SchemeKind = SchemeKind.FV_FREE
    stratification: str = "neutral"
    delta_a: float | None = None          # FV free only; others derive it
    mo: MOParameters = field(default_factory=MOParameters)
    closure: ClosureConstants = field(default_factory=ClosureConstants)
    top_bc: str = "zero_flux"             # or "fixed_value" (u(z_M) = u_G)
    bottom_bc: str = "surface_scheme"     # or "noslip" (u(0) = 0, test oracle)
    prescribed_k: float | None = None     # bypass the closure with constant K
    k0_mode: str = "matched"              # or "molecular" (FV1 pathology twin)
    picard_iterations: int = 1

    def __post_init__(self):
        if self.dt <= 0:
            raise UnsupportedConfigurationError(f"dt must be positive, got {self.dt}")
        if self.duration < self.dt:
            raise UnsupportedConfigurationError("duration must cover at least one step")
        if self.f == 0:
            raise UnsupportedConfigurationError("Coriolis parameter must be nonzero")
        if self.stratification not in _STRATIFICATIONS:
            raise UnsupportedConfigurationError(
                f"stratification must be one of {_STRATIFICATIONS}")
        if self.top_bc not in ("zero_flux", "fixed_value"):
            raise UnsupportedConfigurationError(f"unknown top_bc {self.top_bc!r}")
        if self.bottom_bc not in ("surface_scheme", "noslip"):
            raise UnsupportedConfigurationError(f"unknown bottom_bc {self.bottom_bc!r}")
        if self.k0_mode not in ("matched", "molecular"):
            raise UnsupportedConfigurationError(f"unknown k0_mode {self.k0_mode!r}")
        if self.bottom_bc == "noslip" and self.scheme is SchemeKind.FD:
            raise UnsupportedConfigurationError("noslip bottom is for the FV path only")

    @property
    def stratified(self) -> bool:
        return self.stratification != "neutral"

    def resolved_delta_a(self) -> float:
        return sl.scheme_delta_a(self.scheme, self.grid, self.delta_a)


def theta_surface_forcing(stratification: str, t: float) -> float | None:
    """Prescribed surface temperature (K) at time ``t`` (s)."""
    if stratification == "neutral":
        return None
    if stratification == "stable":
        return 265.0 - t / 36000.0          # one degree lost every ten hours
    return 280.0 - math.cos(2.0 * math.pi * t / _SECONDS_PER_DAY)


def initial_theta(stratification: str, grid: VerticalGrid) -> np.ndarray | None:
    """Exact cell averages of the initial temperature profile."""
    if stratification == "neutral":
        return None
    if stratification == "unstable":
        return np.full(grid.n_cells, 280.0)

    def anti(z):
        # antiderivative of 265 + max(z - 100, 0)/100
        return 265.0 * z + np.where(z > 100.0, (z - 100.0) ** 2 / 200.0, 0.0)

    z = grid.interfaces
    return (anti(z[1:]) - anti(z[:-1])) / grid.cell_sizes


def initial_theta_gradient(stratification: str, grid: VerticalGrid) -> np.ndarray | None:
    if stratification == "neutral":
        return None
    if stratification == "unstable":
        return np.zeros(grid.n_cells + 1)
    return np.where(grid.interfaces > 100.0, 0.01, 0.0)


@dataclass
class ColumnState:
    """Prognostic fields on the full grid plus the surface-layer state.

    For FV free / FV2 the averages of cells below ``delta_a`` are diagnosed
    from the parameterized profile; ``phi_u[k]`` (k = index of the cell
    holding ``delta_a``) is the derivative at ``delta_a`` rather than at
    ``z_k``.
    """

    time: float
    u_bar: np.ndarray
    phi_u: np.ndarray
    surface: SurfaceState
    tke: TkeState
    theta_bar: np.ndarray | None = None
    phi_theta: np.ndarray | None = None
    theta_surface: float | None = None
    budget_residual: float = 0.0
    sl_mismatch: float = 0.0


@dataclass(frozen=True)
class ResolvedGeometry:
    """Cells and interfaces the implicit solve actually covers."""

    k: int                    # whole cells below delta_a (0 when none)
    z_bottom: float           # bottom of the resolved region (delta_a or 0)
    heights: np.ndarray       # resolved interface positions
    sizes: np.ndarray         # resolved cell sizes

    @property
    def n(self) -> int:
        return self.sizes.size


def resolved_geometry(config: SimulationConfig) -> ResolvedGeometry:
    grid = config.grid
    if config.bottom_bc == "noslip" or config.scheme in (SchemeKind.FD, SchemeKind.FV1):
        return ResolvedGeometry(0, 0.0, grid.interfaces, grid.cell_sizes)
    delta_a = config.resolved_delta_a()
    k = sl.submerged_cells(grid, delta_a)
    heights = np.concatenate([[delta_a], grid.interfaces[k + 1:]])
    return ResolvedGeometry(k, delta_a, heights, np.diff(heights))


def _resolved_k(full_k: np.ndarray, geom: ResolvedGeometry, bottom_value: float):
    out = full_k[geom.k:].astype(float).copy()
    out[0] = bottom_value
    return out


def _subcell_mean(cell_avg, z_lo: float, z_hi: float, z_bottom: float, sl_avg):
    """Average over (z_bottom, z_hi) given the full-cell average over (z_lo, z_hi)."""
    width = z_bottom - z_lo
    if width <= 1e-12:
        return cell_avg
    h_tilde = z_hi - z_bottom
    return ((z_hi - z_lo) * cell_avg - width * sl_avg) / h_tilde


def _assemble_fv(geom: ResolvedGeometry, k_res: np.ndarray, u_prev: np.ndarray,
                 rhs_cells: np.ndarray, coriolis: complex, dt: float,
                 bottom_row, top_row, dtype) -> tuple[np.ndarray, np.ndarray]:
    """Banded matrix (lower/upper bandwidth 2) of the coupled (u, phi) system.

    Unknowns interleaved as (phi_0, u_0, phi_1, u_1, ..., phi_n); matrix entry
    (i, j) lives at ab[2 + i - j, j].
    """
    n = geom.n
    size = 2 * n + 1
    ab = np.zeros((5, size), dtype=dtype)
    rhs = np.zeros(size, dtype=dtype)
    h = geom.sizes
    j = np.arange(n)
    r = 2 * j + 1
    ab[2, r] = coriolis
    ab[3, r - 1] = dt * k_res[:-1] / h
    ab[1, r + 1] = -dt * k_res[1:] / h
    rhs[r] = rhs_cells
    i = np.arange(1, n)
    r2 = 2 * i
    h_below, h_above = h[i - 1], h[i]
    ab[2, r2] = (h_below + h_above) / 3.0
    ab[4, r2 - 2] = h_below / 6.0
    ab[0, r2 + 2] = h_above / 6.0
    ab[3, r2 - 1] = 1.0
    ab[1, r2 + 1] = -1.0
    a, b, c, d = bottom_row
    ab[2, 0] = a
    ab[1, 1] = b
    if size > 2:
        ab[0, 2] = c
    rhs[0] = d
    ta, tb, tc, td = top_row
    ab[2, 2 * n] = ta
    ab[3, 2 * n - 1] = tb
    ab[4, 2 * n - 2] = tc
    rhs[2 * n] = td
    return ab, rhs


def _solve_banded(ab, rhs, when: str):
    try:
        x = scipy.linalg.solve_banded((2, 2), ab, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(f"singular implicit system during {when}") from exc
    if not np.all(np.isfinite(x)):
        raise NumericsError(f"non-finite solution during {when}")
    return x[0::2], x[1::2]


def _top_row(config: SimulationConfig, geom: ResolvedGeometry, target):
    if config.top_bc == "zero_flux":
        return (1.0, 0.0, 0.0, 0.0)
    h_last = geom.sizes[-1]
    return (h_last / 3.0, 1.0, h_last / 6.0, target)


def _implied_delta_theta(surf: SurfaceState, params: MOParameters,
                         z_eval: float) -> float:
    """The temperature difference the stored theta_star corresponds to."""
    lam = float(params.log_factor(z_eval))
    return surf.theta_star * (lam - sl.psi_h(surf.zeta(z_eval))) / params.kappa


def _budget_residual(geom, dt, f, u_g, u_prev, u_new, flux_bot, flux_top) -> float:
    h = geom.sizes
    tendency = np.sum(h * (u_new - u_prev)) / dt
    rotation = 1j * f * np.sum(h * (u_new - u_g))
    residual = abs(tendency + rotation - (flux_top - flux_bot))
    scale = (np.sum(h * np.abs(u_new - u_prev)) / dt
             + abs(f) * np.sum(h * np.abs(u_new - u_g))
             + abs(flux_top) + abs(flux_bot) + 1e-30)
    return float(residual / scale)


def step(state: ColumnState, config: SimulationConfig) -> ColumnState:
    """Advance the column by one implicit step (momentum, temperature, bulk, TKE)."""
    if config.scheme is SchemeKind.FD and config.bottom_bc == "surface_scheme" \
            and config.prescribed_k is None:
        return _step_fd(state, config)
    return _step_fv(state, config)


def _step_fv(state: ColumnState, config: SimulationConfig) -> ColumnState:
    grid, params, dt = config.grid, config.mo, config.dt
    geom = resolved_geometry(config)
    k, n = geom.k, geom.n
    surf = state.surface
    scheme_mode = config.bottom_bc == "surface_scheme"
    delta_a = surf.delta_a

    # diffusivities frozen at step start; bottom interface matched to the SL
    if config.prescribed_k is not None:
        k_res = np.full(n + 1, float(config.prescribed_k))
        k_theta_res = k_res
    else:
        if config.k0_mode == "molecular":
            bottom_k = params.k_mol
        else:
            bottom_k = float(sl.mo_viscosity(delta_a, surf, params))
        k_res = _resolved_k(state.tke.k_u, geom, bottom_k)
        k_theta_res = _resolved_k(
            state.tke.k_theta, geom,
            float(sl.mo_theta_diffusivity(delta_a, surf, params)))

    z_lo = float(grid.interfaces[geom.k])
    z_hi = float(grid.interfaces[geom.k + 1])
    u_prev = state.u_bar[k:].copy()
    if scheme_mode and geom.z_bottom > z_lo + 1e-12:
        u_prev[0] = _subcell_mean(u_prev[0], z_lo, z_hi, geom.z_bottom,
                                  sl.sl_mean_u(surf, params, z_lo, geom.z_bottom))

    coriolis = 1.0 + 1j * config.f * dt
    rhs_cells = u_prev + 1j * config.f * dt * config.u_g
    top_row = _top_row(config, geom, config.u_g)

    if not scheme_mode:
        h0 = geom.sizes[0]
        bottom = (-h0 / 3.0, 1.0, -h0 / 6.0, 0.0)   # u(z_0) = 0
        row_spec = None
    else:
        row_spec = sl.boundary_row(config.scheme, surf, grid, state.u_bar,
                                   params, k_bottom=k_res[0])
        bottom = (row_spec.coef_phi_bottom, row_spec.coef_u_first,
                  row_spec.coef_phi_next, row_spec.rhs)

    ab, rhs = _assemble_fv(geom, k_res, u_prev, rhs_cells, coriolis, dt,
                           bottom, top_row, complex)
    phi_new, u_new = _solve_banded(ab, rhs, f"momentum step t={state.time}")

    if scheme_mode and config.picard_iterations > 1:
        z_eval = sl.bulk_sample_height(config.scheme, grid, delta_a)
        delta_theta = _implied_delta_theta(surf, params, z_eval)
        surf_it = surf
        for _ in range(config.picard_iterations - 1):
            if config.scheme in (SchemeKind.FV2, SchemeKind.FV_FREE):
                sample = u_new[0] - geom.sizes[0] * (phi_new[0] / 3.0
                                                     + phi_new[1] / 6.0)
            else:
                sample = u_new[0]
            surf_it = sl.bulk(sample, delta_theta, z_eval, params, surf_it)
            row_spec = sl.boundary_row(config.scheme, surf_it, grid, state.u_bar,
                                       params, k_bottom=k_res[0])
            bottom = (row_spec.coef_phi_bottom, row_spec.coef_u_first,
                      row_spec.coef_phi_next, row_spec.rhs)
            ab, rhs = _assemble_fv(geom, k_res, u_prev, rhs_cells, coriolis, dt,
                                   bottom, top_row, complex)
            phi_new, u_new = _solve_banded(ab, rhs,
                                           f"momentum step t={state.time}")

    flux_bot = k_res[0] * phi_new[0]
    flux_top = k_res[-1] * phi_new[-1]
    budget = _budget_residual(geom, dt, config.f, config.u_g, u_prev, u_new,
                              flux_bot, flux_top)

    # temperature step (implicit, direct surface flux, insulated top)
    theta_new = phi_theta_new = None
    theta_surf_new = theta_surface_forcing(config.stratification, state.time + dt)
    if config.stratified and state.theta_bar is not None:
        th_prev = state.theta_bar[k:].astype(float).copy()
        if scheme_mode and geom.z_bottom > z_lo + 1e-12:
            th_prev[0] = _subcell_mean(
                th_prev[0], z_lo, z_hi, geom.z_bottom,
                sl.sl_mean_theta(surf, params, state.theta_surface, z_lo, geom.z_bottom))
        if scheme_mode:
            th_row = sl.theta_flux_row(config.scheme, surf, grid, params)
            th_bottom = (th_row.coef_phi_bottom, th_row.coef_u_first,
                         th_row.coef_phi_next, th_row.rhs)
        else:
            th_bottom = (1.0, 0.0, 0.0, 0.0)
        ab, rhs = _assemble_fv(geom, k_theta_res, th_prev, th_prev, 1.0, dt,
                               th_bottom, (1.0, 0.0, 0.0, 0.0), float)
        phi_theta_res, theta_res = _solve_banded(
            ab, rhs, f"temperature step t={state.time}")

    # bulk refresh on the post-step sample, then write back the full grid
    if scheme_mode:
        if config.scheme in (SchemeKind.FV2, SchemeKind.FV_FREE):
            h0 = geom.sizes[0]
            sample = u_new[0] - h0 * (phi_new[0] / 3.0 + phi_new[1] / 6.0)
        else:
            sample = u_new[0]
        if config.stratified:
            if config.scheme in (SchemeKind.FV2, SchemeKind.FV_FREE):
                h0 = geom.sizes[0]
                th_sample = theta_res[0] - h0 * (phi_theta_res[0] / 3.0
                                                 + phi_theta_res[1] / 6.0)
            else:
                th_sample = theta_res[0]
            delta_theta = float(th_sample) - theta_surf_new
        else:
            delta_theta = 0.0
        z_eval = sl.bulk_sample_height(config.scheme, grid, delta_a)
        surf_new = sl.bulk(sample, delta_theta, z_eval, params, surf)
    else:
        surf_new = surf

    u_bar = state.u_bar.copy()
    u_bar[k + 1:] = u_new[1:]
    phi_u = state.phi_u.copy()
    phi_u[k:] = phi_new
    sl_mismatch = 0.0
    if scheme_mode and k >= 0 and geom.z_bottom > 0.0 \
            and config.scheme in (SchemeKind.FV2, SchemeKind.FV_FREE):
        width = geom.z_bottom - z_lo
        if width > 1e-12:
            sl_avg = sl.sl_mean_u(surf_new, params, z_lo, geom.z_bottom)
            u_bar[k] = (geom.sizes[0] * u_new[0] + width * sl_avg) / (z_hi - z_lo)
        else:
            u_bar[k] = u_new[0]
        for j in range(k):
            u_bar[j] = sl.sl_mean_u(surf_new, params,
                                    float(grid.interfaces[j]),
                                    float(grid.interfaces[j + 1]))
            phi_u[j] = sl.mo_slope_u(float(grid.interfaces[j]), surf_new, params)
        # both reconstruction branches evaluated at delta_a
        spline_value = sample
        mo_value = sl.mo_profile_u(delta_a, surf_new, params)
        norm = float(np.max(np.abs(u_bar))) + 1e-30
        sl_mismatch = float(abs(mo_value - spline_value)) / norm
    else:
        u_bar[k] = u_new[0]

    if config.stratified and state.theta_bar is not None:
        theta_new = state.theta_bar.copy()
        theta_new[k + 1:] = theta_res[1:]
        phi_theta_new = state.phi_theta.copy()
        phi_theta_new[k:] = phi_theta_res
        if scheme_mode and geom.z_bottom > z_lo + 1e-12:
            width = geom.z_bottom - z_lo
            th_avg = sl.sl_mean_theta(surf_new, params, theta_surf_new,
                                      z_lo, geom.z_bottom)
            theta_new[k] = (geom.sizes[0] * theta_res[0] + width * th_avg) / (z_hi - z_lo)
        else:
            theta_new[k] = theta_res[0]
        for j in range(k):
            theta_new[j] = sl.sl_mean_theta(surf_new, params, theta_surf_new,
                                            float(grid.interfaces[j]),
                                            float(grid.interfaces[j + 1]))
            phi_theta_new[j] = sl.mo_slope_theta(float(grid.interfaces[j]),
                                                 surf_new, params)

    tke_new = state.tke
    if config.prescribed_k is None:
        tke_new = _advance_closure(state, config, geom, phi_u, phi_theta_new,
                                   surf_new)

    return ColumnState(
        time=state.time + dt, u_bar=u_bar, phi_u=phi_u, surface=surf_new,
        tke=tke_new, theta_bar=theta_new, phi_theta=phi_theta_new,
        theta_surface=theta_surf_new, budget_residual=budget,
        sl_mismatch=sl_mismatch)


def _step_fd(state: ColumnState, config: SimulationConfig) -> ColumnState:
    """Finite-difference variant: point values, simple-difference fluxes.

    The surface flux enters the first cell directly; the wall viscosity never
    appears in the discrete equations.
    """
    grid, params, dt = config.grid, config.mo, config.dt
    m = grid.n_cells
    surf = state.surface
    h = grid.cell_sizes
    dist = np.diff(grid.centers)
    k_u = state.tke.k_u
    k_theta = state.tke.k_theta

    row = sl.boundary_row(SchemeKind.FD, surf, grid, state.u_bar, params)
    gamma = row.gamma
    up = k_u[1:-1] / dist
    sub = np.zeros(m, dtype=complex)
    sup = np.zeros(m, dtype=complex)
    main = np.full(m, 1.0 + 1j * config.f * dt, dtype=complex)
    main[:-1] += dt * up / h[:-1]
    sup[:-1] = -dt * up / h[:-1]
    main[1:] += dt * up / h[1:]
    sub[1:] = -dt * up / h[1:]
    main[0] += dt * gamma / h[0]          # semi-implicit surface drag
    rhs = state.u_bar + 1j * config.f * dt * config.u_g
    u_new = solve_tridiagonal(TridiagonalSystem(sub, main, sup, rhs))
    if not np.all(np.isfinite(u_new)):
        raise NumericsError(f"non-finite FD solution at t={state.time}")

    flux_bot = gamma * u_new[0]
    geom = ResolvedGeometry(0, 0.0, grid.interfaces, grid.cell_sizes)
    budget = _budget_residual(geom, dt, config.f, config.u_g, state.u_bar,
                              u_new, flux_bot, 0.0)

    theta_new = phi_theta_new = None
    theta_surf_new = theta_surface_forcing(config.stratification, state.time + dt)
    if config.stratified and state.theta_bar is not None:
        upt = k_theta[1:-1] / dist
        sub_t = np.zeros(m)
        sup_t = np.zeros(m)
        main_t = np.ones(m)
        main_t[:-1] += dt * upt / h[:-1]
        sup_t[:-1] = -dt * upt / h[:-1]
        main_t[1:] += dt * upt / h[1:]
        sub_t[1:] = -dt * upt / h[1:]
        rhs_t = state.theta_bar.copy()
        rhs_t[0] -= dt * surf.u_star * surf.theta_star / h[0]
        theta_new = solve_tridiagonal(
            TridiagonalSystem(sub_t, main_t, sup_t, rhs_t)).real

    delta_theta = 0.0
    if config.stratified:
        delta_theta = float(theta_new[0]) - theta_surf_new
    surf_new = sl.bulk(u_new[0], delta_theta, float(grid.centers[0]), params, surf)

    phi_u = np.zeros_like(state.phi_u)
    phi_u[1:-1] = (u_new[1:] - u_new[:-1]) / dist
    phi_u[0] = sl.mo_slope_u(0.0, surf_new, params)
    phi_u[-1] = phi_u[-2]
    if config.stratified:
        phi_theta_new = np.zeros_like(state.phi_theta)
        phi_theta_new[1:-1] = (theta_new[1:] - theta_new[:-1]) / dist
        phi_theta_new[0] = sl.mo_slope_theta(0.0, surf_new, params)
        phi_theta_new[-1] = phi_theta_new[-2]

    next_state = ColumnState(
        time=state.time + dt, u_bar=u_new, phi_u=phi_u, surface=surf_new,
        tke=state.tke, theta_bar=theta_new, phi_theta=phi_theta_new,
        theta_surface=theta_surf_new, budget_residual=budget, sl_mismatch=0.0)
    next_state.tke = _advance_closure(next_state, config,
                                      geom, phi_u, phi_theta_new, surf_new)
    return next_state


def _advance_closure(state: ColumnState, config: SimulationConfig,
                     geom: ResolvedGeometry, phi_u: np.ndarray,
                     phi_theta: np.ndarray | None,
                     surf: SurfaceState) -> TkeState:
    """TKE after the momentum/temperature update (first-order splitting)."""
    grid, params = config.grid, config.mo
    k = geom.k
    z = grid.interfaces
    shear2 = np.abs(phi_u) ** 2
    for j in range(min(k + 1, grid.n_cells)):
        height = min(float(z[j]), surf.delta_a)
        shear2[j] = abs(sl.mo_slope_u(height, surf, params)) ** 2
    if phi_theta is not None:
        dtheta = phi_theta.copy()
        for j in range(min(k + 1, grid.n_cells)):
            height = min(float(z[j]), surf.delta_a)
            dtheta[j] = sl.mo_slope_theta(height, surf, params)
        n2 = params.gravity / params.theta_ref * dtheta
    else:
        n2 = np.zeros(grid.n_cells + 1)
    n2_cells = 0.5 * (n2[:-1] + n2[1:])
    tke = step_tke(state.tke, shear2, n2, config.dt, grid, surf,
                   config.closure, dirichlet_cells=k + 1)
    l_m, l_eps = mixing_length(grid, tke.e, n2_cells, config.closure, params)
    tke.l_m, tke.l_eps = l_m, l_eps
    k_u, k_theta = eddy_diffusivities(tke, n2, grid, shear2, config.closure)
    tke.k_u, tke.k_theta = k_u, k_theta
    return tke


def continuity_residual(state: ColumnState, config: SimulationConfig) -> float:
    """Max relative residual of the compact spline rows on the resolved region.

    Zero (to solver precision) after every accepted FV step; meaningless for
    the FD scheme, which closes the gradients with simple differences.
    """
    from .spline import compact_interior_coefficients

    geom = resolved_geometry(config)
    k = geom.k
    u_res = state.u_bar[k:].astype(complex).copy()
    z_lo = float(config.grid.interfaces[k])
    z_hi = float(config.grid.interfaces[k + 1])
    if config.bottom_bc == "surface_scheme" and geom.z_bottom > z_lo + 1e-12:
        u_res[0] = _subcell_mean(
            u_res[0], z_lo, z_hi, geom.z_bottom,
            sl.sl_mean_u(state.surface, config.mo, z_lo, geom.z_bottom))
    phi = state.phi_u[k:]
    lo, mid, hi = compact_interior_coefficients(geom.sizes)
    residual = lo * phi[:-2] + mid * phi[1:-1] + hi * phi[2:] \
        - (u_res[1:] - u_res[:-1])
    scale = (np.abs(lo * phi[:-2]) + np.abs(mid * phi[1:-1])
             + np.abs(hi * phi[2:]) + np.abs(u_res[1:]) + np.abs(u_res[:-1])
             + 1e-30)
    return float(np.max(np.abs(residual) / scale))


def initial_state(config: SimulationConfig) -> ColumnState:
    """State at t = 0 per the configured stratification.

    Uniform wind ``u_G`` (all cases), the case's temperature profile, TKE at
    its floor.  For the schemes that exclude the surface layer the submerged
    cells are immediately filled from the parameterized profile, so the wall
    law holds from the first step on.
    """
    grid, params = config.grid, config.mo
    m = grid.n_cells
    if config.bottom_bc == "noslip":
        u_bar = np.full(m, config.u_g, dtype=complex)
        state = ColumnState(
            time=0.0, u_bar=u_bar, phi_u=np.zeros(m + 1, dtype=complex),
            surface=SurfaceState.initial(float(grid.centers[0])),
            tke=TkeState.initial(grid, config.closure, params))
        return state

    delta_a = config.resolved_delta_a()
    u_bar = np.full(m, config.u_g, dtype=complex)
    phi_u = np.zeros(m + 1, dtype=complex)
    theta_bar = initial_theta(config.stratification, grid)
    phi_theta = initial_theta_gradient(config.stratification, grid)
    theta_surf = theta_surface_forcing(config.stratification, 0.0)
    tke = TkeState.initial(grid, config.closure, params)

    z_eval = sl.bulk_sample_height(config.scheme, grid, delta_a)
    sample = config.u_g                       # uniform profile at t = 0
    if config.stratified:
        k = sl.submerged_cells(grid, delta_a) \
            if config.scheme in (SchemeKind.FV2, SchemeKind.FV_FREE) else 0
        delta_theta = float(theta_bar[k]) - theta_surf
    else:
        delta_theta = 0.0
    surf = sl.bulk(sample, delta_theta, z_eval, params,
                   SurfaceState.initial(delta_a, direction=sample))

    if config.scheme in (SchemeKind.FV2, SchemeKind.FV_FREE):
        k = sl.submerged_cells(grid, delta_a)
        z = grid.interfaces
        width = delta_a - float(z[k])
        if width > 1e-12:
            h_tilde = float(z[k + 1]) - delta_a
            sl_avg = sl.sl_mean_u(surf, params, float(z[k]), delta_a)
            u_bar[k] = (h_tilde * config.u_g + width * sl_avg) / float(z[k + 1] - z[k])
        for j in range(k):
            u_bar[j] = sl.sl_mean_u(surf, params, float(z[j]), float(z[j + 1]))
            phi_u[j] = sl.mo_slope_u(float(z[j]), surf, params)
        if config.stratified:
            if width > 1e-12:
                h_tilde = float(z[k + 1]) - delta_a
                th_avg = sl.sl_mean_theta(surf, params, theta_surf, float(z[k]), delta_a)
                theta_bar[k] = (h_tilde * theta_bar[k] + width * th_avg) \
                    / float(z[k + 1] - z[k])
            for j in range(k):
                theta_bar[j] = sl.sl_mean_theta(surf, params, theta_surf,
                                                float(z[j]), float(z[j + 1]))
                phi_theta[j] = sl.mo_slope_theta(float(z[j]), surf, params)

    return ColumnState(
        time=0.0, u_bar=u_bar, phi_u=phi_u, surface=surf, tke=tke,
        theta_bar=theta_bar, phi_theta=phi_theta, theta_surface=theta_surf)


@dataclass
class RunResult:
    """Per-step surface series and the final state of one integration."""

    times: np.ndarray
    u_star: np.ndarray
    theta_star: np.ndarray
    budget_residuals: np.ndarray
    sl_mismatches: np.ndarray
    final: ColumnState
    snapshots: dict


def integrate(config: SimulationConfig, snapshot_times=()) -> RunResult:
    """Run ``duration / dt`` implicit steps; deterministic for a given config."""
    n_steps = int(round(config.duration / config.dt))
    state = initial_state(config)
    times = np.empty(n_steps + 1)
    u_star = np.empty(n_steps + 1)
    theta_star = np.empty(n_steps + 1)
    budget = np.empty(n_steps)
    mismatch = np.empty(n_steps)
    snapshots = {}
    wanted = sorted(float(t) for t in snapshot_times)
    times[0], u_star[0], theta_star[0] = 0.0, state.surface.u_star, \
        state.surface.theta_star
    for step_index in range(n_steps):
        state = step(state, config)
        if not np.all(np.isfinite(state.u_bar)):
            raise NumericsError(f"non-finite wind after step {step_index}")
        times[step_index + 1] = state.time
        u_star[step_index + 1] = state.surface.u_star
        theta_star[step_index + 1] = state.surface.theta_star
        budget[step_index] = state.budget_residual
        mismatch[step_index] = state.sl_mismatch
        while wanted and state.time >= wanted[0] - 1e-9:
            snapshots[wanted.pop(0)] = state
    return RunResult(times=times, u_star=u_star, theta_star=theta_star,
                     budget_residuals=budget, sl_mismatches=mismatch,
                     final=state, snapshots=snapshots)
