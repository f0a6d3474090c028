"""Sign-hypothesis checks and positivity predicates on computed trajectories."""

import json

import numpy as np
import pytest

import clab
from clab.positivity import (check_sign_hypotheses, run_positivity_check,
                             run_positivity_improving_check)


def make_grid(n_r=17, n_theta=8, n_t=9):
    return clab.build_polar_grid(1.0, 2.0, n_r, n_theta, n_t=n_t, T=1.0)


class TestSignHypotheses:
    def test_nonpositive_offdiagonal_coupling_passes(self):
        grid = make_grid()
        coeffs = clab.coupled2(grid)
        res = check_sign_hypotheses(coeffs=coeffs)
        assert res.passed and res.witness is None

    def test_positive_offdiagonal_coupling_is_witnessed(self):
        grid = make_grid()
        c = np.zeros((2, 2))
        c[0, 1] = 0.5
        coeffs = clab.make_coefficients(grid, n=2, c=c, beta=1.0, eta=1.0)
        res = check_sign_hypotheses(coeffs=coeffs)
        assert not res.passed
        assert res.witness[:2] == (0, 1)
        assert "c[0,1]" in res.detail

    def test_case_b_reaction_passes(self):
        f = clab.NonlinearityModel(
            f=lambda t, r, th, Y: np.stack([-Y[1], -Y[0]]),
            df=lambda t, r, th, Y: np.array(
                [[np.zeros_like(Y[0]), -np.ones_like(Y[0])],
                 [-np.ones_like(Y[0]), np.zeros_like(Y[0])]]),
            hypothesis_case="B")
        assert check_sign_hypotheses(f=f).passed

    def test_case_b_violation_witnessed(self):
        # f_0 = +y_1 is positive at y_0 = 0 when y_1 > 0
        f = clab.NonlinearityModel(
            f=lambda t, r, th, Y: np.stack([Y[1], np.zeros_like(Y[0])]),
            df=lambda t, r, th, Y: np.array(
                [[np.zeros_like(Y[0]), np.ones_like(Y[0])],
                 [np.zeros_like(Y[0]), np.zeros_like(Y[0])]]),
            hypothesis_case="B")
        res = check_sign_hypotheses(f=f)
        assert not res.passed


class TestInvariantCone:
    def solve_nonneg(self, grid, coeffs, seed=0):
        rng = np.random.default_rng(seed)
        spec = clab.SourceClassSpec(k=1.0, seed=seed)
        g = clab.sample_source_Gk(spec, grid, coeffs.n, rng)
        y0 = rng.uniform(0.0, 1.0, (coeffs.n,) + grid.shape)
        return clab.solve_forward_linear(coeffs, g, y0, grid)

    def test_nonnegative_data_stays_nonnegative(self):
        grid = make_grid()
        coeffs = clab.coupled2(grid)
        y = self.solve_nonneg(grid, coeffs)
        rep = run_positivity_check(y, coeffs=coeffs)
        assert rep.passed
        assert rep.first_violation is None
        assert rep.min_value >= -rep.tolerance

    def test_injected_violation_is_located(self):
        grid = make_grid()
        vals = np.ones((1, grid.n_t) + grid.shape)
        vals[0, 3, 5, 2] = -0.5
        y = clab.StateField(grid=grid, values=vals)
        rep = run_positivity_check(y)
        assert not rep.passed
        assert rep.first_violation == (3, 5, 2, 0)

    def test_tolerance_is_relative_to_amplitude(self):
        grid = make_grid()
        vals = 1e6 * np.ones((1, grid.n_t) + grid.shape)
        vals[0, 1, 1, 1] = -1e-4            # tiny relative to the field
        y = clab.StateField(grid=grid, values=vals)
        assert run_positivity_check(y).passed

    def test_positive_diagonal_coupling_triggers_rescaling(self):
        # c_ii > 0 allows exponential growth; the check must run on the
        # exponentially rescaled trajectory and still pass for nonneg data
        grid = make_grid()
        c = np.array([[2.0]])
        coeffs = clab.make_coefficients(grid, c=-c, beta=1.0, eta=1.0)
        # -c has c_00 = -2 <= 0: no rescale; +c triggers it
        grow = clab.make_coefficients(grid, c=c, beta=1.0, eta=1.0)
        y = self.solve_nonneg(grid, grow)
        rep = run_positivity_check(y, coeffs=grow)
        assert rep.passed
        # rescaling strictly shrinks positive values at t > 0, so the
        # reported minimum drops below the raw trajectory minimum
        assert rep.min_value < float(np.min(y.values))

    def test_report_json_round_trip(self):
        grid = make_grid()
        y = clab.StateField(grid=grid,
                            values=np.ones((1, grid.n_t) + grid.shape))
        payload = json.loads(run_positivity_check(y).to_json())
        assert payload["schema_version"] == 1
        assert payload["passed"] is True
        assert payload["min_value"] == 1.0


class TestImprovingCheck:
    def test_bump_source_spreads_to_strict_positivity(self):
        grid = make_grid(n_r=21, n_t=17)
        coeffs = clab.heat(grid)
        spec = clab.SourceClassSpec(k=1.2, seed=5)
        g = clab.sample_source_Gk(spec, grid, 1)
        y = clab.solve_forward_linear(coeffs, g,
                                      np.zeros((1,) + grid.shape), grid)
        rep = run_positivity_improving_check(y, t_check=[0.5 * grid.T], g=g)
        assert rep.passed
        t_key = list(rep.improving_pass)[0]
        assert rep.improving_pass[t_key] is True
        assert rep.zero_set_fraction[t_key] == 0.0

    def test_zero_trajectory_reports_zero_set_and_source_mass(self):
        grid = make_grid()
        zeros = np.zeros((1, grid.n_t) + grid.shape)
        y = clab.StateField(grid=grid, values=zeros)
        g = clab.SourceField(grid=grid, values=zeros.copy())
        rep = run_positivity_improving_check(y, t_check=[0.5], g=g)
        assert not rep.passed
        t_key = list(rep.zero_set_fraction)[0]
        # the whole annulus sits at zero, consistent with zero source mass
        assert rep.zero_set_fraction[t_key] == pytest.approx(1.0)
        assert rep.source_mass_before == pytest.approx(0.0)

    def test_initial_time_is_skipped(self):
        grid = make_grid()
        vals = np.ones((1, grid.n_t) + grid.shape)
        vals[:, 0] = 0.0                    # zero initial data is legitimate
        y = clab.StateField(grid=grid, values=vals)
        rep = run_positivity_improving_check(y, t_check=[0.0, 0.5])
        assert rep.passed
        assert all(t > 0.0 for t in rep.improving_pass)
