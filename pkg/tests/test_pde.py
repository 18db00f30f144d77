"""Finite-volume reference solver tests.

The heavy 512-cell refinement ladder lives in the acceptance suite; these
tests exercise the same machinery on coarser grids.
"""

import math

import numpy as np
import pytest

from airspread import pde
from airspread.dispersion import DispersionParams, ProximityField
from airspread.errors import ConvergenceError, InvalidParameterError

PARAMS = DispersionParams()
FIELD = ProximityField.from_rate(PARAMS, 66.0)
GRID_64 = pde.RadialGrid(r_max=2.6, n_cells=64)
GRID_128 = pde.RadialGrid(r_max=2.6, n_cells=128)


class TestGrid:
    def test_spacing(self):
        assert GRID_128.spacing == pytest.approx(2.6 / 128)

    def test_too_few_cells(self):
        with pytest.raises(InvalidParameterError):
            pde.RadialGrid(r_max=2.6, n_cells=63)

    def test_must_cover_validity_radius(self):
        with pytest.raises(InvalidParameterError):
            pde.evolve(PARAMS, 66.0, pde.RadialGrid(r_max=2.0, n_cells=128), 10.0)

    def test_nonzero_origin_unsupported(self):
        with pytest.raises(InvalidParameterError):
            pde.RadialGrid(r_max=2.6, n_cells=128, r_min=0.1)


class TestEvolve:
    def test_zero_source_stays_zero(self):
        solution = pde.evolve(PARAMS, 0.0, GRID_64, 30.0)
        assert np.all(solution.values == 0.0)
        assert solution.steady

    def test_nonnegative_and_bounded(self):
        solution = pde.evolve(PARAMS, 66.0, GRID_64, 5.0)
        assert np.all(solution.values >= 0.0)
        assert np.all(solution.values <= FIELD.normalization * (1 + 1e-12))
        assert not solution.steady  # 5 s is far from stationary

    def test_mass_balance_audit(self):
        solution = pde.evolve(PARAMS, 66.0, GRID_64, 20.0, audit_mass_balance=True)
        assert solution.mass_balance_max_residual < 1e-6

    def test_tail_cells_stay_zero(self):
        grid = pde.RadialGrid(r_max=4.0, n_cells=128)
        solution = pde.evolve(PARAMS, 66.0, grid, 50.0)
        beyond = solution.centers >= PARAMS.validity_radius
        assert beyond.any()
        assert np.all(solution.values[beyond] == 0.0)

    def test_invalid_horizon(self):
        with pytest.raises(InvalidParameterError):
            pde.evolve(PARAMS, 66.0, GRID_64, 0.0)

    def test_steady_flag_after_long_run(self):
        solution = pde.evolve(PARAMS, 66.0, GRID_64, 300.0)
        assert solution.steady


class TestSteadyState:
    def test_matches_closed_form(self):
        solution = pde.steady_state(PARAMS, 66.0, GRID_128)
        report = pde.compare(solution, FIELD)
        assert report.l2_relative < 2e-3  # measured 3.6e-4 at 128 cells
        assert solution.steady

    def test_mass_closure(self):
        solution = pde.steady_state(PARAMS, 66.0, GRID_128)
        assert solution.mass == pytest.approx(66.0 * 50.0, rel=2e-3)

    def test_refinement_monotone_and_first_order(self):
        l2 = {}
        for grid in (GRID_64, GRID_128):
            report = pde.compare(pde.steady_state(PARAMS, 66.0, grid), FIELD)
            l2[grid.n_cells] = report.l2_relative
        assert l2[128] < l2[64]
        assert l2[64] / l2[128] > 2.0  # observed spatial order ~2, assert >= 1

    def test_independent_of_initial_condition(self):
        reference = pde.steady_state(PARAMS, 66.0, GRID_64)
        warm = pde.evolve(PARAMS, 66.0, GRID_64, 400.0, initial=np.full(64, 500.0))
        scale = np.max(np.abs(reference.values))
        assert np.max(np.abs(warm.values - reference.values)) / scale < 1e-4

    def test_matches_long_evolve(self):
        iterated = pde.steady_state(PARAMS, 66.0, GRID_64)
        evolved = pde.evolve(PARAMS, 66.0, GRID_64, 400.0)
        np.testing.assert_allclose(evolved.values, iterated.values, rtol=1e-6, atol=1e-9)

    def test_convergence_failure_reports_residual(self):
        with pytest.raises(ConvergenceError) as excinfo:
            pde.steady_state(PARAMS, 66.0, GRID_64, max_rounds=1)
        assert excinfo.value.residual > 0.0

    def test_shell_value_close_to_closed_form(self):
        solution = pde.steady_state(PARAMS, 66.0, GRID_128)
        idx = int(np.argmin(np.abs(solution.centers - 1.5)))
        assert solution.values[idx] == pytest.approx(FIELD.concentration(float(solution.centers[idx])), rel=0.1)


class TestCompare:
    def test_closed_form_against_itself(self):
        sampled = pde.sampled_solution(PARAMS, 66.0, GRID_128)
        report = pde.compare(sampled, FIELD)
        assert report.l2_relative == 0.0
        assert report.max_relative_on_range == 0.0

    def test_requires_steady_solution(self):
        transient = pde.evolve(PARAMS, 66.0, GRID_64, 1.0)
        with pytest.raises(InvalidParameterError):
            pde.compare(transient, FIELD)

    def test_table_columns(self):
        report = pde.compare(pde.sampled_solution(PARAMS, 66.0, GRID_64), FIELD)
        rows = list(report.rows())
        assert len(rows) == report.radii.size
        r, numeric, analytic, rel = rows[0]
        assert PARAMS.control_radius < r < PARAMS.validity_radius


class TestHalfLife:
    def test_matches_decay_constant(self):
        solution = pde.steady_state(PARAMS, 66.0, GRID_128)
        half_life = pde.half_life_source_off(PARAMS, solution)
        assert half_life == pytest.approx(math.log(2.0) * 50.0, rel=1e-3)

    def test_empty_start_rejected(self):
        empty = pde.evolve(PARAMS, 0.0, GRID_64, 10.0)
        with pytest.raises(InvalidParameterError):
            pde.half_life_source_off(PARAMS, empty)


class TestValidationReport:
    def test_coarse_ladder_passes(self):
        summary = pde.validation_report(PARAMS, 66.0, (64, 128))
        assert summary.passed
        assert summary.monotone
        assert summary.rows[-1].l2_relative < 0.02
        assert abs(summary.rows[-1].mass_rel_err) < 0.02
        assert abs(summary.half_life_rel_err) < 0.05
        assert len(summary.lines()) >= 5

    def test_t_end_too_small_raises(self):
        with pytest.raises(ConvergenceError):
            pde.validation_report(PARAMS, 66.0, (64,), t_end=1.0)

    def test_requires_positive_rate(self):
        with pytest.raises(InvalidParameterError):
            pde.validation_report(PARAMS, 0.0, (64,))
