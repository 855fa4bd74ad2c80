import math

import numpy as np
import pytest

from analog_cartpole.dynamics import (FULL, DomainError, PlantParams, SimState,
                                      derivatives, initial_state, is_terminal,
                                      step, total_energy)

from oracles import full_mode_accels, reference_phi

SIMPLE = PlantParams()


def run(state, u, dt, params, n):
    for _ in range(n):
        state = step(state, u, dt, params)
    return state


class TestDerivatives:
    def test_upright_equilibrium_both_modes(self):
        for params in (SIMPLE, PlantParams(mode=FULL)):
            assert derivatives(SimState(), 0.0, params) == (0.0, 0.0, 0.0, 0.0)

    def test_horizontal_pole_falls_at_g(self):
        d = derivatives(SimState(phi=math.pi / 2), 0.0, SIMPLE)
        assert d.dphi_dot == pytest.approx(9.81, abs=1e-15)

    def test_input_is_acceleration_in_simplified_mode(self):
        d = derivatives(SimState(), 2.0, SIMPLE)
        assert d.dx_dot == 2.0
        assert d.dphi_dot == 2.0

    def test_full_mode_matches_linear_solve(self):
        params = PlantParams(mode=FULL, M=1.0, m=0.1)
        d = derivatives(SimState(), 1.0, params)
        x_dd, phi_dd = full_mode_accels(0.0, 0.0, 0.0, 1.0, 1.0, 0.1, 1.0, 9.81)
        assert (x_dd, phi_dd) == pytest.approx((1.0, 1.0), abs=1e-12)
        assert d.dx_dot == pytest.approx(x_dd, abs=1e-12)
        assert d.dphi_dot == pytest.approx(phi_dd, abs=1e-12)

    def test_full_mode_random_states_against_linear_solve(self):
        rng = np.random.default_rng(3)
        params = PlantParams(mode=FULL, M=2.0, m=0.7)
        for _ in range(200):
            x, xd, ph, phd, force = rng.uniform(-2, 2, 5)
            d = derivatives(SimState(x, xd, ph, phd), force, params)
            x_dd, phi_dd = full_mode_accels(xd, ph, phd, force, 2.0, 0.7, 1.0, 9.81)
            assert d.dx_dot == pytest.approx(x_dd, abs=1e-12)
            assert d.dphi_dot == pytest.approx(phi_dd, abs=1e-12)

    def test_damping_subtracts_linearly(self):
        params = PlantParams(beta_x=0.5, beta_phi=0.25)
        d = derivatives(SimState(x_dot=2.0, phi_dot=4.0), 0.0, params)
        assert d.dx_dot == pytest.approx(-1.0)
        assert d.dphi_dot == pytest.approx(-1.0 * 1.0 - 1.0)

    def test_odd_symmetry(self):
        rng = np.random.default_rng(5)
        for params in (SIMPLE, PlantParams(mode=FULL, m=0.3, beta_x=0.1, beta_phi=0.2)):
            for _ in range(100):
                x, xd, ph, phd, u = rng.uniform(-1, 1, 5)
                d = derivatives(SimState(x, xd, ph, phd), u, params)
                neg = derivatives(SimState(-x, -xd, -ph, -phd), -u, params)
                assert neg == pytest.approx(tuple(-v for v in d), abs=1e-14)

    def test_light_bob_limit_matches_simplified(self):
        rng = np.random.default_rng(11)
        full = PlantParams(mode=FULL, m=1e-9, M=1.0)
        for _ in range(1000):
            x, xd, ph, phd = rng.uniform(-1, 1, 4)
            force = rng.uniform(-10, 10)
            a = derivatives(SimState(x, xd, ph, phd), force, full)
            b = derivatives(SimState(x, xd, ph, phd), force / full.M, SIMPLE)
            assert a == pytest.approx(b, abs=1e-6)

    @pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
    def test_non_finite_rejected(self, bad):
        with pytest.raises(DomainError):
            derivatives(SimState(phi=bad), 0.0, SIMPLE)
        with pytest.raises(DomainError):
            derivatives(SimState(), bad, SIMPLE)


class TestStep:
    def test_zero_state_stays_put(self):
        s = step(SimState(), 0.0, 1e-3, SIMPLE)
        assert s.as_tuple() == (0.0, 0.0, 0.0, 0.0)
        assert s.t == pytest.approx(1e-3)

    def test_time_nondecreasing(self):
        s = SimState(phi=0.1)
        for _ in range(10):
            nxt = step(s, 1.0, 1e-3, SIMPLE)
            assert nxt.t >= s.t
            s = nxt

    def test_rejects_bad_dt(self):
        with pytest.raises(ValueError):
            step(SimState(), 0.0, 0.0, SIMPLE)

    def test_constant_acceleration_is_exact(self):
        s = run(SimState(), 3.0, 1e-3, SIMPLE, 500)
        assert s.x_dot == pytest.approx(1.5, abs=1e-12)
        assert s.x == pytest.approx(0.5 * 3.0 * 0.25, abs=1e-12)

    def test_matches_reference_solver(self):
        s = run(SimState(phi=0.01), 0.0, 1e-3, SIMPLE, 1000)
        assert abs(s.phi - reference_phi(0.01, 1.0)) <= 1e-4

    def test_fourth_order_convergence(self):
        ref = reference_phi(0.01, 1.0)
        errs = []
        for n in (25, 50, 100):
            s = run(SimState(phi=0.01), 0.0, 1.0 / n, SIMPLE, n)
            errs.append(abs(s.phi - ref))
        assert errs[0] / errs[1] >= 8
        assert errs[1] / errs[2] >= 8


class TestEnergy:
    def test_upright_rest_is_all_potential(self):
        params = PlantParams(mode=FULL, m=0.3)
        assert total_energy(SimState(), params) == pytest.approx(0.3 * 9.81)
        assert total_energy(SimState(), SIMPLE) == pytest.approx(9.81)

    def test_horizontal_pole_has_no_potential(self):
        assert total_energy(SimState(phi=math.pi / 2), SIMPLE) == pytest.approx(0.0, abs=1e-12)

    def test_conserved_along_free_trajectory(self):
        s = SimState(phi=0.1)
        e0 = total_energy(s, SIMPLE)
        s = run(s, 0.0, 1e-3, SIMPLE, 10_000)
        assert abs(total_energy(s, SIMPLE) - e0) / abs(e0) <= 1e-6

    def test_conserved_in_full_mode(self):
        params = PlantParams(mode=FULL, m=0.5, M=1.0)
        s = SimState(x_dot=0.3, phi=0.2, phi_dot=-0.1)
        e0 = total_energy(s, params)
        s = run(s, 0.0, 1e-3, params, 5000)
        assert abs(total_energy(s, params) - e0) / abs(e0) <= 1e-6


class TestTerminal:
    @pytest.mark.parametrize("state, expected", [
        (SimState(x=1.01), True),
        (SimState(x=-1.01), True),
        (SimState(phi=0.51), True),
        (SimState(phi=-0.51), True),
        (SimState(), False),
        (SimState(x=1.0, phi=0.5), False),
    ])
    def test_bounds(self, state, expected):
        assert is_terminal(state, PlantParams(x_max=1.0, phi_max=0.5)) is expected

    def test_accepts_plain_tuples(self):
        assert is_terminal((0.0, 0.0, 0.6, 0.0), SIMPLE)


class TestInitialState:
    def test_exact_upright_without_tilt(self):
        assert initial_state(SIMPLE, 1, phi0_max=0.0) == SimState()

    def test_seeded_draws_repeat(self):
        assert initial_state(SIMPLE, 42) == initial_state(SIMPLE, 42)

    def test_tilt_distribution(self):
        rng = np.random.default_rng(0)
        phis = np.array([initial_state(SIMPLE, rng).phi for _ in range(1000)])
        assert np.all(np.abs(phis) <= 0.05)
        assert abs(phis.mean()) <= 0.005


class TestParams:
    @pytest.mark.parametrize("kwargs", [
        {"g": 0.0}, {"l": -1.0}, {"M": 0.0}, {"m": -0.1}, {"x_max": 0.0},
        {"phi_max": 0.0}, {"phi_max": math.pi / 2}, {"mode": "other"},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            PlantParams(**kwargs)
