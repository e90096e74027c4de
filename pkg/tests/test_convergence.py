"""Tests for the spatial convergence study."""

import math

import numpy as np
import pytest

from psim import convergence
from psim.convergence import (
    CONVERGENCE_FIELDS,
    convergence_columns,
    convergence_study,
    convergence_table,
    experimental_order,
    nodes_for_level,
    run_refinement,
)
from psim.exceptions import PsimError, StepFailure


def _failing_on(n_cells: int):
    """run_transient replacement that fails on one mesh size."""
    real = convergence.run_transient

    def run(scenario, *args, **kwargs):
        if scenario.mesh.n_cells == n_cells:
            raise StepFailure(0.0, 1e-6)
        return real(scenario, *args, **kwargs)

    return run


class TestHelpers:
    """Tests for the level and order helpers."""

    def test_nodes_for_level(self):
        """2^n* + 1 nodes per region."""
        assert nodes_for_level(2) == 5
        assert nodes_for_level(9) == 513

    def test_experimental_order(self):
        """Quartering the error on halving h is second order."""
        assert experimental_order(4e-2, 1e-2, 0.2, 0.1) == pytest.approx(2.0)

    @pytest.mark.parametrize("errors", [(0.0, 1e-3), (1e-3, 0.0), (float("nan"), 1e-3)])
    def test_undefined_order_is_nan(self, errors):
        """Vanishing or missing errors give no order."""
        assert math.isnan(experimental_order(*errors, 0.2, 0.1))

    def test_columns(self):
        """Errors and orders for each field plus the failure flag."""
        columns = convergence_columns()
        assert columns[:2] == ["nstar", "h"]
        assert columns[-1] == "failed"
        assert len(columns) == 3 + 2 * len(CONVERGENCE_FIELDS)


class TestRunRefinement:
    """Tests for :func:`run_refinement`."""

    def test_success(self, make_constant_config):
        """The final state lives on the requested mesh."""
        result = run_refinement(make_constant_config(t_end=0.5), 2)
        assert not result.failed
        assert result.mesh.n_cells == 15
        assert result.state.time == 0.5

    def test_failure_is_reported(self, make_constant_config, mocker):
        """Solver errors are caught and described."""
        mocker.patch.object(convergence, "run_transient", side_effect=StepFailure(0.25, 1e-5))
        result = run_refinement(make_constant_config(), 2)
        assert result.failed
        assert "StepFailure" in result.error


class TestConvergenceStudy:
    """Tests for :func:`convergence_study`."""

    def test_errors_and_orders(self, make_constant_config):
        """Every level gets errors; orders are filled in from the second level."""
        config = make_constant_config(t_end=0.5)
        rows, reference = convergence_study(config, 2, 3, 4, threads=1)
        assert [row.nstar for row in rows] == [2, 3]
        assert reference.mesh.n_cells == 3 * 17
        assert rows[0].h == pytest.approx(0.5)
        assert rows[1].h == pytest.approx(0.25)
        for row in rows:
            assert not row.failed
            assert all(np.isfinite(row.errors[name]) and row.errors[name] >= 0 for name in CONVERGENCE_FIELDS)
        assert rows[0].eoc == {}
        assert set(rows[1].eoc) == set(CONVERGENCE_FIELDS)

    @pytest.mark.parametrize("levels", [(3, 3, 3), (3, 2, 4), (1, 2, 3), (2, 4, 4)])
    def test_invalid_levels(self, make_constant_config, levels):
        """nstar_ref > nstar_max >= nstar_min >= 2."""
        with pytest.raises(ValueError) as exc_info:
            convergence_study(make_constant_config(), *levels)
        assert "nstar_ref > nstar_max >= nstar_min >= 2" in str(exc_info.value)

    def test_failed_level_is_marked(self, make_constant_config, mocker):
        """A failing refinement keeps its row with nan errors."""
        mocker.patch.object(convergence, "run_transient", side_effect=_failing_on(3 * 9))
        rows, _ = convergence_study(make_constant_config(t_end=0.5), 2, 3, 4, threads=1)
        assert rows[1].failed
        assert rows[1].h == pytest.approx(0.25)
        assert all(math.isnan(rows[1].errors[name]) for name in CONVERGENCE_FIELDS)
        assert all(math.isnan(v) for v in rows[1].eoc.values())

        table = convergence_table(rows)
        assert table.shape == (2, len(convergence_columns()))
        assert table[:, -1].tolist() == [0.0, 1.0]

    def test_failed_reference(self, make_constant_config, mocker):
        """Without a reference there is nothing to compare against."""
        mocker.patch.object(convergence, "run_transient", side_effect=_failing_on(3 * 17))
        with pytest.raises(PsimError) as exc_info:
            convergence_study(make_constant_config(t_end=0.5), 2, 3, 4, threads=1)
        assert "reference run" in str(exc_info.value)
