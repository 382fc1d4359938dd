import numpy as np
import pytest

from ekmanfv import grid
from ekmanfv import surface as sf
from ekmanfv.closure import (ClosureConstants, TkeState, eddy_diffusivities,
                             mixing_length, step_tke)
from ekmanfv.errors import UnsupportedConfigurationError

PARAMS = sf.MOParameters()


def surface_state(u_star=0.3):
    return sf.SurfaceState(u_star=u_star, theta_star=0.0, e_tau=1.0 + 0.0j,
                           delta_a=5.0, obukhov_length=np.inf)


def make_state(g, e, constants=ClosureConstants()):
    n2 = np.zeros(g.n_cells)
    l_m, l_eps = mixing_length(g, e, n2, constants, PARAMS)
    state = TkeState(e=e.copy(), l_m=l_m, l_eps=l_eps,
                     k_u=np.zeros(g.n_cells + 1), k_theta=np.zeros(g.n_cells + 1))
    k_u, k_theta = eddy_diffusivities(state, np.zeros(g.n_cells + 1), g,
                                      constants=constants)
    state.k_u, state.k_theta = k_u, k_theta
    return state


class TestStepTke:
    def test_pure_decay_matches_scalar_formula(self):
        g = grid.build_uniform(4, 40.0)
        constants = ClosureConstants()
        e0 = np.full(4, 0.02)
        # uniform lengths keep e uniform, so the implicit transport cancels
        state = TkeState(e=e0.copy(), l_m=np.full(4, 20.0), l_eps=np.full(4, 20.0),
                         k_u=np.full(5, 0.5), k_theta=np.full(5, 0.5))
        zeros = np.zeros(5)
        dt = 25.0
        new = step_tke(state, zeros, zeros, dt, g, surface_state(), constants,
                       flux_free=True, clip=False)
        expected = e0 / (1.0 + dt * constants.c_eps * np.sqrt(e0) / state.l_eps)
        np.testing.assert_allclose(new.e, expected, rtol=1e-13)

    def test_production_dissipation_equilibrium(self):
        # closed-form equilibrium e = (c_k/c_eps) l_m l_eps S^2; a tiny l_inf
        # makes the mixing length effectively uniform far from the wall
        constants = ClosureConstants(l_inf=1.0, e_min=1e-10)
        g = grid.build_uniform(4, 1e6)
        shear2 = np.full(5, 1e-4)
        zeros = np.zeros(5)
        e = np.full(4, 1e-5)
        state = make_state(g, e, constants)
        for _ in range(3000):
            state = step_tke(state, shear2, zeros, 10.0, g, surface_state(),
                             constants, flux_free=True, clip=False)
            k_u, k_theta = eddy_diffusivities(state, zeros, g, shear2, constants)
            state.k_u, state.k_theta = k_u, k_theta
        expected = constants.c_k / constants.c_eps * state.l_m * state.l_eps * 1e-4
        np.testing.assert_allclose(state.e, expected, rtol=1e-4)

    def test_strongly_stable_column_clips_to_floor(self):
        g = grid.build_uniform(5, 100.0)
        constants = ClosureConstants()
        state = make_state(g, np.full(5, 0.05), constants)
        shear2 = np.full(6, 1e-8)
        n2 = np.full(6, 1e-2)          # buoyancy destruction dominates
        for _ in range(400):
            state = step_tke(state, shear2, n2, 30.0, g, surface_state(),
                             constants, dirichlet_cells=0)
        np.testing.assert_allclose(state.e, constants.e_min, rtol=1e-12)

    def test_bottom_dirichlet_value(self):
        g = grid.build_uniform(4, 40.0)
        constants = ClosureConstants()
        state = make_state(g, np.full(4, 0.01), constants)
        surf = surface_state(u_star=0.42)
        new = step_tke(state, np.zeros(5), np.zeros(5), 30.0, g, surf, constants)
        assert new.e[0] == pytest.approx((0.42 / np.sqrt(constants.c_mu)) ** 2)

    def test_frozen_coefficient_energy_balance(self):
        # zero-flux ends and no clipping: the discrete integral of e moves by
        # exactly dt * (production - buoyancy - linearized dissipation)
        rng = np.random.default_rng(2)
        g = grid.load_levels(np.concatenate([[0.0], np.cumsum(rng.uniform(2, 9, 8))]))
        constants = ClosureConstants()
        e = rng.uniform(0.005, 0.05, g.n_cells)
        state = make_state(g, e, constants)
        shear2 = rng.uniform(0.0, 1e-3, g.n_cells + 1)
        n2 = rng.uniform(-1e-5, 1e-5, g.n_cells + 1)
        dt = 40.0
        new = step_tke(state, shear2, n2, dt, g, surface_state(), constants,
                       flux_free=True, clip=False)
        h = g.cell_sizes
        production = 0.5 * ((state.k_u * shear2)[:-1] + (state.k_u * shear2)[1:])
        buoyancy = 0.5 * ((state.k_theta * n2)[:-1] + (state.k_theta * n2)[1:])
        dissipation = constants.c_eps * np.sqrt(state.e) / state.l_eps * new.e
        lhs = np.sum(h * (new.e - state.e))
        rhs = dt * np.sum(h * (production - buoyancy - dissipation))
        assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs), 1e-12)

    def test_rejects_negative_dt(self):
        g = grid.build_uniform(3, 30.0)
        state = make_state(g, np.full(3, 0.01))
        with pytest.raises(UnsupportedConfigurationError):
            step_tke(state, np.zeros(4), np.zeros(4), -1.0, g, surface_state())

    def test_positivity_for_arbitrary_inputs(self):
        rng = np.random.default_rng(9)
        g = grid.build_uniform(6, 120.0)
        constants = ClosureConstants()
        state = make_state(g, rng.uniform(1e-6, 0.1, 6), constants)
        for _ in range(50):
            shear2 = rng.uniform(0, 1e-2, 7)
            n2 = rng.uniform(-1e-3, 1e-3, 7)
            state = step_tke(state, shear2, n2, 60.0, g,
                             surface_state(rng.uniform(0.05, 0.8)), constants)
            k_u, k_theta = eddy_diffusivities(state, n2, g, shear2, constants)
            state.k_u, state.k_theta = k_u, k_theta
            assert np.all(state.e >= constants.e_min)
            assert np.all(state.k_u >= 0) and np.all(state.k_theta >= 0)


class TestEddyDiffusivities:
    def test_floor_tke_gives_small_positive_k(self):
        g = grid.build_uniform(4, 40.0)
        constants = ClosureConstants()
        state = make_state(g, np.full(4, constants.e_min), constants)
        expected_cells = constants.c_k * state.l_m * np.sqrt(constants.e_min)
        assert np.all(state.k_u > 0)
        np.testing.assert_allclose(state.k_u[1:-1],
                                   0.5 * (expected_cells[:-1] + expected_cells[1:]),
                                   rtol=1e-13)

    def test_sqrt_scaling(self):
        g = grid.build_uniform(4, 40.0)
        constants = ClosureConstants()
        base = make_state(g, np.full(4, 0.01), constants)
        doubled = make_state(g, np.full(4, 0.02), constants)
        # same mixing length (neutral), so K scales with sqrt(e)
        np.testing.assert_allclose(doubled.k_u / base.k_u, np.sqrt(2.0), rtol=1e-3)

    def test_stable_prandtl_reduces_heat_mixing(self):
        g = grid.build_uniform(4, 40.0)
        constants = ClosureConstants()
        state = make_state(g, np.full(4, 0.01), constants)
        shear2 = np.full(5, 1e-4)
        n2 = np.full(5, 5e-5)           # Ri = 0.5
        k_u, k_theta = eddy_diffusivities(state, n2, g, shear2, constants)
        np.testing.assert_allclose(k_theta, k_u / 3.5, rtol=1e-12)


class TestMixingLength:
    def test_wall_limit(self):
        g = grid.load_levels([0.0, 1.0, 2.0, 400.0])
        constants = ClosureConstants()
        l_m, l_eps = mixing_length(g, np.full(3, 0.01), np.zeros(3),
                                   constants, PARAMS)
        wall = PARAMS.kappa * (g.centers[0] + PARAMS.z_r)
        assert l_m[0] == pytest.approx(wall, rel=5e-3)
        np.testing.assert_array_equal(l_m, l_eps)

    def test_stable_cap_value(self):
        g = grid.load_levels([0.0, 400.0, 800.0, 1200.0])
        constants = ClosureConstants()
        l_m, _ = mixing_length(g, np.full(3, 0.01), np.full(3, 1e-4),
                               constants, PARAMS)
        cap = np.sqrt(2 * 0.01 / 1e-4)   # ~ 14.14 m
        np.testing.assert_allclose(l_m, cap, rtol=1e-12)

    def test_cap_inactive_without_stratification(self):
        g = grid.load_levels([0.0, 400.0, 800.0, 1200.0])
        constants = ClosureConstants()
        l_m, _ = mixing_length(g, np.full(3, 0.01), np.zeros(3), constants, PARAMS)
        wall = PARAMS.kappa * (g.centers + PARAMS.z_r)
        expected = wall * constants.l_inf / (wall + constants.l_inf)
        np.testing.assert_allclose(l_m, expected, rtol=1e-14)
