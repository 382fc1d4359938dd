"""Monin-Obukhov surface layer: bulk inversion, profiles, coupling schemes.

The surface layer occupies ``(0, delta_a)``; there the momentum flux is
height-constant, equal to ``u_star^2 e_tau``, and the wind follows

    u(z) = (u_star / kappa) * [ln(1 + z/z_r) - psi_m(z/L)] * e_tau,

the closed form of ``integral of u_star^2 e_tau / K_u`` with the eddy
viscosity ``K_u(z) = kappa u_star (z + z_r) / phi_m(z/L)``.  The bulk routine
inverts these relations: given a wind sample at a height it returns the
friction scales ``(u_star, theta_star)`` and the Obukhov length ``L``.

Stability functions are the Businger-Dyer forms with the Paulson unstable
integrals; they are the conventional choice and are isolated here so another
family can be swapped in.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .errors import OutOfDomainError, UnsupportedConfigurationError
from .grid import VerticalGrid

_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def phi_m(zeta):
    """Dimensionless momentum gradient."""
    z = np.asarray(zeta, dtype=float)
    unstable = (1.0 - 16.0 * np.minimum(z, 0.0)) ** (-0.25)
    stable = 1.0 + 5.0 * np.maximum(z, 0.0)
    return _scalar_or_array(np.where(z < 0.0, unstable, stable))


def phi_h(zeta):
    """Dimensionless heat gradient."""
    z = np.asarray(zeta, dtype=float)
    unstable = (1.0 - 16.0 * np.minimum(z, 0.0)) ** (-0.5)
    stable = 1.0 + 5.0 * np.maximum(z, 0.0)
    return _scalar_or_array(np.where(z < 0.0, unstable, stable))


def psi_m(zeta):
    """Integrated momentum stability correction (Paulson form when unstable)."""
    z = np.asarray(zeta, dtype=float)
    x = (1.0 - 16.0 * np.minimum(z, 0.0)) ** 0.25
    unstable = (2.0 * np.log((1.0 + x) / 2.0) + np.log((1.0 + x * x) / 2.0)
                - 2.0 * np.arctan(x) + np.pi / 2.0)
    stable = -5.0 * np.maximum(z, 0.0)
    return _scalar_or_array(np.where(z < 0.0, unstable, stable))


def psi_h(zeta):
    """Integrated heat stability correction."""
    z = np.asarray(zeta, dtype=float)
    y = (1.0 - 16.0 * np.minimum(z, 0.0)) ** 0.5
    unstable = 2.0 * np.log((1.0 + y) / 2.0)
    stable = -5.0 * np.maximum(z, 0.0)
    return _scalar_or_array(np.where(z < 0.0, unstable, stable))


def psi_m_prime(zeta):
    """d psi_m / d zeta via the identity (1 - phi_m)/zeta."""
    z = np.asarray(zeta, dtype=float)
    safe = np.where(z == 0.0, 1.0, z)
    out = np.where(z < 0.0, (1.0 - phi_m(z)) / safe, -5.0)
    return _scalar_or_array(np.where(z == 0.0, -4.0, out))


def psi_h_prime(zeta):
    z = np.asarray(zeta, dtype=float)
    safe = np.where(z == 0.0, 1.0, z)
    out = np.where(z < 0.0, (1.0 - phi_h(z)) / safe, -5.0)
    return _scalar_or_array(np.where(z == 0.0, -8.0, out))


@dataclass(frozen=True)
class MOParameters:
    """Constants of the surface-layer parameterization."""

    kappa: float = 0.4
    z_r: float = 0.1            # roughness length (m)
    k_mol: float = 1e-5         # molecular viscosity (m^2/s)
    gravity: float = 9.81
    theta_ref: float = 283.0
    u_star_floor: float = 1e-4
    stability_family: str = "businger-dyer"

    def __post_init__(self):
        if not 0.3 < self.kappa < 0.5:
            raise UnsupportedConfigurationError(f"kappa={self.kappa} outside (0.3, 0.5)")
        if self.z_r <= 0 or self.k_mol <= 0:
            raise UnsupportedConfigurationError("z_r and k_mol must be positive")
        if self.stability_family != "businger-dyer":
            raise UnsupportedConfigurationError(
                f"unknown stability family {self.stability_family!r}")

    def log_factor(self, z):
        return np.log1p(np.asarray(z, dtype=float) / self.z_r)


@dataclass(frozen=True)
class SurfaceState:
    """Friction scales and surface-layer geometry after one bulk inversion."""

    u_star: float
    theta_star: float
    e_tau: complex              # unit flux direction
    delta_a: float              # surface-layer height (m)
    obukhov_length: float       # signed; +inf in the neutral case
    converged: bool = True

    def zeta(self, z):
        if np.isinf(self.obukhov_length):
            return np.zeros_like(np.asarray(z, dtype=float)) if np.ndim(z) else 0.0
        return np.asarray(z, dtype=float) / self.obukhov_length if np.ndim(z) \
            else z / self.obukhov_length

    @classmethod
    def initial(cls, delta_a: float, direction: complex = 1.0 + 0.0j,
                u_star: float = 1e-4) -> "SurfaceState":
        d = direction / abs(direction)
        return cls(u_star=u_star, theta_star=0.0, e_tau=d,
                   delta_a=delta_a, obukhov_length=np.inf)


def obukhov_length(u_star: float, theta_star: float, params: MOParameters) -> float:
    if abs(theta_star) < 1e-14:
        return np.inf
    return u_star ** 2 * params.theta_ref / (params.kappa * params.gravity * theta_star)


def bulk(u_at_eval: complex, delta_theta: float, z_eval: float,
         params: MOParameters, prev: SurfaceState,
         rtol: float = 1e-9, max_iter: int = 20) -> SurfaceState:
    """Invert the MO profile relations at height ``z_eval``.

    Fixed point of ``u_star = kappa |u| / [ln(1 + z/z_r) - psi_m(z/L)]`` with
    ``theta_star`` analogous (psi_h) and ``L`` recomputed from the scales.
    Picard iteration, damped only when the update oscillates; the state keeps
    the Obukhov length the final scales were computed with, so the profile
    evaluated at ``z_eval`` reproduces the input sample exactly.
    """
    if z_eval <= 0:
        raise OutOfDomainError(f"bulk evaluation height must be positive, got {z_eval}")
    speed = abs(u_at_eval)
    if not np.isfinite(speed):
        raise OutOfDomainError("non-finite wind sample in bulk")
    if speed < 1e-30:
        # calm winds: floor the friction velocity, keep the previous direction
        return replace(prev, u_star=params.u_star_floor, theta_star=0.0,
                       obukhov_length=np.inf, converged=True)
    e_tau = u_at_eval / speed
    lam = float(params.log_factor(z_eval))
    u_star = max(params.kappa * speed / lam, params.u_star_floor)
    theta_star = params.kappa * delta_theta / lam
    last_delta = 0.0
    length_used = np.inf
    converged = False
    for _ in range(max_iter):
        length_used = obukhov_length(u_star, theta_star, params)
        zeta = z_eval / length_used if np.isfinite(length_used) else 0.0
        denom_m = max(lam - psi_m(zeta), 1e-2)
        denom_h = max(lam - psi_h(zeta), 1e-2)
        u_new = max(params.kappa * speed / denom_m, params.u_star_floor)
        theta_new = params.kappa * delta_theta / denom_h
        delta = u_new - u_star
        if last_delta * delta < 0.0:
            u_new = 0.5 * (u_new + u_star)  # damp oscillating updates
            delta = u_new - u_star
        last_delta = delta
        done = abs(delta) <= rtol * max(u_new, params.u_star_floor)
        u_star, theta_star = u_new, theta_new
        if done:
            converged = True
            break
    # final sync with the length actually used, so the profile evaluated at
    # z_eval reproduces the input sample exactly (continuity at delta_a)
    zeta = z_eval / length_used if np.isfinite(length_used) else 0.0
    u_star = max(params.kappa * speed / max(lam - psi_m(zeta), 1e-2),
                 params.u_star_floor)
    theta_star = params.kappa * delta_theta / max(lam - psi_h(zeta), 1e-2)
    return SurfaceState(u_star=u_star, theta_star=theta_star, e_tau=e_tau,
                        delta_a=prev.delta_a, obukhov_length=length_used,
                        converged=converged)


def _check_sl_height(z, delta_a):
    z = np.asarray(z, dtype=float)
    if np.any(z < -1e-12) or np.any(z > delta_a * (1.0 + 1e-9) + 1e-12):
        raise OutOfDomainError(f"z={z} outside the surface layer [0, {delta_a}]")


def mo_profile_magnitude(z, state: SurfaceState, params: MOParameters):
    """|u(z)| of the parameterized profile (no domain restriction)."""
    lam = params.log_factor(z)
    return state.u_star / params.kappa * (lam - psi_m(state.zeta(z)))


def mo_profile_u(z, state: SurfaceState, params: MOParameters):
    """Parameterized wind inside the surface layer (complex)."""
    _check_sl_height(z, state.delta_a)
    return mo_profile_magnitude(z, state, params) * state.e_tau


def mo_profile_theta(z, state: SurfaceState, params: MOParameters,
                     theta_surface: float):
    """Parameterized potential temperature inside the surface layer."""
    _check_sl_height(z, state.delta_a)
    lam = params.log_factor(z)
    return theta_surface + state.theta_star / params.kappa * (lam - psi_h(state.zeta(z)))


def mo_viscosity(z, state: SurfaceState, params: MOParameters):
    """Surface-layer eddy viscosity kappa u_star (z + z_r) / phi_m(z/L)."""
    _check_sl_height(z, state.delta_a)
    return params.kappa * state.u_star * (np.asarray(z, float) + params.z_r) \
        / phi_m(state.zeta(z))


def mo_theta_diffusivity(z, state: SurfaceState, params: MOParameters):
    _check_sl_height(z, state.delta_a)
    return params.kappa * state.u_star * (np.asarray(z, float) + params.z_r) \
        / phi_h(state.zeta(z))


def mo_slope_u(z, state: SurfaceState, params: MOParameters):
    """d/dz of the parameterized wind (complex)."""
    z = np.asarray(z, dtype=float)
    zeta = state.zeta(z)
    inv_l = 0.0 if np.isinf(state.obukhov_length) else 1.0 / state.obukhov_length
    mag = state.u_star / params.kappa * (1.0 / (z + params.z_r)
                                         - psi_m_prime(zeta) * inv_l)
    return mag * state.e_tau


def mo_slope_theta(z, state: SurfaceState, params: MOParameters):
    z = np.asarray(z, dtype=float)
    zeta = state.zeta(z)
    inv_l = 0.0 if np.isinf(state.obukhov_length) else 1.0 / state.obukhov_length
    return state.theta_star / params.kappa * (1.0 / (z + params.z_r)
                                              - psi_h_prime(zeta) * inv_l)


def _mean_log_factor(a: float, b: float, params: MOParameters) -> float:
    # antiderivative of ln(1 + z/z_r) is (z + z_r) ln(1 + z/z_r) - z
    def anti(z):
        return (z + params.z_r) * np.log1p(z / params.z_r) - z
    return (anti(b) - anti(a)) / (b - a)


def _mean_psi(psi, a: float, b: float, state: SurfaceState) -> float:
    if np.isinf(state.obukhov_length):
        return 0.0
    z = 0.5 * (b - a) * _GAUSS_NODES + 0.5 * (a + b)
    return float(np.sum(_GAUSS_WEIGHTS * psi(z / state.obukhov_length))) * 0.5


def sl_mean_u(state: SurfaceState, params: MOParameters, a: float, b: float):
    """Average of the parameterized wind over ``(a, b)`` inside the SL."""
    if not 0.0 <= a < b <= state.delta_a * (1.0 + 1e-9) + 1e-12:
        raise OutOfDomainError(f"({a}, {b}) not inside the surface layer")
    mean = state.u_star / params.kappa * (_mean_log_factor(a, b, params)
                                          - _mean_psi(psi_m, a, b, state))
    return mean * state.e_tau


def sl_mean_theta(state: SurfaceState, params: MOParameters,
                  theta_surface: float, a: float, b: float):
    if not 0.0 <= a < b <= state.delta_a * (1.0 + 1e-9) + 1e-12:
        raise OutOfDomainError(f"({a}, {b}) not inside the surface layer")
    return theta_surface + state.theta_star / params.kappa * (
        _mean_log_factor(a, b, params) - _mean_psi(psi_h, a, b, state))


class SchemeKind(enum.Enum):
    """The four surface coupling schemes."""

    FD = "fd"
    FV1 = "fv1"
    FV2 = "fv2"
    FV_FREE = "fvfree"

    @classmethod
    def parse(cls, name: str) -> "SchemeKind":
        key = name.strip().lower().replace("_", "").replace(" ", "").replace("-", "")
        for kind in cls:
            if kind.value.replace("_", "") == key:
                return kind
        raise UnsupportedConfigurationError(f"unknown scheme {name!r}")


def scheme_delta_a(scheme: SchemeKind, grid: VerticalGrid,
                   configured: float | None = None) -> float:
    """Surface-layer height each scheme works with.

    FD pins it to the first cell center, FV1/FV2 to the first interior
    interface; only FV free takes it from the configuration.
    """
    if scheme is SchemeKind.FD:
        return float(grid.centers[0])
    if scheme in (SchemeKind.FV1, SchemeKind.FV2):
        return float(grid.interfaces[1])
    if configured is None:
        raise UnsupportedConfigurationError("FV free needs an explicit delta_a")
    if not 0.0 < configured < float(grid.interfaces[-2]):
        raise UnsupportedConfigurationError(
            f"delta_a={configured} must lie in (0, {grid.interfaces[-2]})")
    return float(configured)


def bulk_sample_height(scheme: SchemeKind, grid: VerticalGrid, delta_a: float) -> float:
    """Height the bulk routine inverts the profile at."""
    if scheme in (SchemeKind.FD, SchemeKind.FV1):
        return float(grid.centers[0])
    return delta_a


def submerged_cells(grid: VerticalGrid, delta_a: float) -> int:
    """Number of whole cells lying below ``delta_a``.

    The cell holding ``delta_a`` is split into a parameterized part and a
    resolved sub-cell; cells entirely below are parameterized outright.
    """
    k = int(np.searchsorted(grid.interfaces, delta_a, side="right") - 1)
    if k >= grid.n_cells - 1:
        raise UnsupportedConfigurationError(
            f"delta_a={delta_a} leaves fewer than two resolved cells")
    return k


@dataclass(frozen=True)
class SurfaceRowSpec:
    """Linear bottom boundary row of the implicit step.

    ``kind == "phi_row"`` means the equation
    ``coef_phi_bottom * phi_bot + coef_u_first * u_first + coef_phi_next * phi_next = rhs``
    closes the coupled (averages, derivatives) system; ``kind == "ghost_flux"``
    means the surface flux is ``coef_u_first * u_first`` injected directly into
    the first finite-difference cell (no derivative unknown at the wall).
    """

    kind: str
    coef_phi_bottom: complex
    coef_u_first: complex
    coef_phi_next: complex
    rhs: complex
    flux_height: float
    k_bottom: float
    gamma: float


def boundary_row(scheme: SchemeKind, state: SurfaceState, grid: VerticalGrid,
                 prev_field: np.ndarray, params: MOParameters,
                 k_bottom: float | None = None) -> SurfaceRowSpec:
    """Bottom row of the implicit solve for the given scheme.

    The flux direction is taken semi-implicitly: magnitude from the previous
    step (``gamma = u_star^2 / |u^n|``), direction from the new unknowns, so
    the row stays linear.
    """
    delta_a = state.delta_a
    if scheme is SchemeKind.FD:
        speed = max(abs(prev_field[0]), 1e-30)
        gamma = state.u_star ** 2 / speed
        return SurfaceRowSpec("ghost_flux", 0.0, gamma, 0.0, 0.0,
                              flux_height=0.0, k_bottom=params.k_mol, gamma=gamma)
    if scheme is SchemeKind.FV1:
        k0 = mo_viscosity(delta_a, state, params) if k_bottom is None else k_bottom
        speed = max(abs(prev_field[0]), 1e-30)
        gamma = state.u_star ** 2 / speed
        return SurfaceRowSpec("phi_row", k0, -gamma, 0.0, 0.0,
                              flux_height=0.0, k_bottom=k0, gamma=gamma)
    if scheme in (SchemeKind.FV2, SchemeKind.FV_FREE):
        k = submerged_cells(grid, delta_a)
        h_tilde = float(grid.interfaces[k + 1]) - delta_a
        if h_tilde <= 0:
            raise UnsupportedConfigurationError(
                f"delta_a={delta_a} coincides with interface {k + 1}")
        k_delta = mo_viscosity(delta_a, state, params) if k_bottom is None else k_bottom
        speed = max(mo_profile_magnitude(delta_a, state, params), 1e-30)
        gamma = state.u_star ** 2 / speed
        # flux row K_delta phi_delta = gamma * u(delta_a) with the sub-cell
        # interface value u(delta_a) = mean - h/3 phi_delta - h/6 phi_next
        return SurfaceRowSpec("phi_row",
                              k_delta + gamma * h_tilde / 3.0,
                              -gamma,
                              gamma * h_tilde / 6.0,
                              0.0,
                              flux_height=delta_a, k_bottom=k_delta, gamma=gamma)
    raise UnsupportedConfigurationError(f"unknown scheme {scheme}")


def theta_flux_row(scheme: SchemeKind, state: SurfaceState, grid: VerticalGrid,
                   params: MOParameters) -> SurfaceRowSpec:
    """Bottom row of the temperature solve: direct flux u_star * theta_star."""
    flux = state.u_star * state.theta_star
    if scheme is SchemeKind.FD:
        return SurfaceRowSpec("ghost_flux", 0.0, 0.0, 0.0, flux,
                              flux_height=0.0, k_bottom=params.k_mol, gamma=0.0)
    k_theta = mo_theta_diffusivity(state.delta_a, state, params)
    height = 0.0 if scheme is SchemeKind.FV1 else state.delta_a
    return SurfaceRowSpec("phi_row", k_theta, 0.0, 0.0, flux,
                          flux_height=height, k_bottom=k_theta, gamma=0.0)


def pathological_spline_term(u_star: float, k0: float, h: float) -> float:
    """Magnitude of the first-cell spline term u_star^2 h / (6 K_0).

    With the wall value ``K_0 = K_mol`` this term scales like ``1/K_0`` and
    inflates the reconstructed interface value u(z_1).
    """
    return u_star ** 2 * h / (6.0 * k0)


@dataclass(frozen=True)
class K0PathologyReport:
    """Twin FV1 runs differing only in the wall viscosity of the bottom row."""

    u_z1_molecular_max: float      # worst |u(z_1)| over the molecular run
    u_z1_matched_max: float
    u_z1_molecular_final: complex
    u_z1_matched_final: complex
    magnitude_ratio: float         # max-over-run inflation factor
    k_mol: float
    k_matched: float
    term_ratio: float              # exact 1/K_0 scaling of the spline term


def k0_pathology_diagnostic(grid: VerticalGrid, params: MOParameters,
                            dt: float = 30.0, duration: float = 86400.0,
                            f: float = 1e-4, u_g: complex = 8.0 + 0.0j
                            ) -> K0PathologyReport:
    """Run the neutral FV1 case with K_0 = K_mol and with K_0 = K_(u,delta).

    Tracks the reconstructed interface value u(z_1) through both runs: with
    the molecular wall viscosity the first-cell spline term u_star^2 h/(6 K_0)
    inflates it (1/K_0 scaling) before the flow grinds down.
    """
    from . import dynamics  # deferred: diagnostic drives the time stepper
    from .spline import CellSpline

    def run(k0_mode):
        config = dynamics.SimulationConfig(
            grid=grid, dt=dt, duration=duration, f=f, u_g=u_g,
            scheme=SchemeKind.FV1, stratification="neutral", mo=params,
            k0_mode=k0_mode)
        state = dynamics.initial_state(config)
        worst = 0.0
        u_z1 = state.u_bar[0]
        for _ in range(int(round(duration / dt))):
            state = dynamics.step(state, config)
            first = CellSpline(state.u_bar[0], float(grid.cell_sizes[0]),
                               state.phi_u[0], state.phi_u[1],
                               float(grid.centers[0]))
            u_z1 = first.top_value()
            worst = max(worst, abs(u_z1))
        return state, u_z1, worst

    state_mol, u_z1_mol, worst_mol = run("molecular")
    state_match, u_z1_match, worst_match = run("matched")
    k_matched = mo_viscosity(state_match.surface.delta_a, state_match.surface, params)
    return K0PathologyReport(
        u_z1_molecular_max=worst_mol,
        u_z1_matched_max=worst_match,
        u_z1_molecular_final=u_z1_mol,
        u_z1_matched_final=u_z1_match,
        magnitude_ratio=worst_mol / max(worst_match, 1e-30),
        k_mol=params.k_mol,
        k_matched=float(k_matched),
        term_ratio=float(k_matched) / params.k_mol,
    )
