# -*- coding: utf-8 -*-
# Copyright: (c) 2026, peridynamic-kv contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import math

import numpy as np
import pytest

import scipy.sparse.linalg

from peridynamic_kv.module_utils.common import ConfigurationError, InvariantError, SolverError
from peridynamic_kv.module_utils.evolution import (
    TimeGrid,
    decay_rate,
    ede_residual,
    flow_map_matrix,
    run,
    step,
)
from peridynamic_kv.module_utils.convergence_lab import make_field
from peridynamic_kv.module_utils.geometry import Domain, build_grid
from peridynamic_kv.module_utils.kernels import make_kernel
from peridynamic_kv.module_utils.nonlocal_model import (
    DisplacementField,
    MaterialParams,
    OperatorPair,
    assemble,
)


@pytest.fixture
def scalar_pair():
    return OperatorPair.from_matrices([[1.0]], [[1.0]])


def test_time_grid_validation():
    grid = TimeGrid(1.0, 0.1, scheme="implicit-euler", theta=0.5)
    assert grid.theta == 1.0
    assert grid.n_steps == 10
    assert TimeGrid(0.3, 0.1).n_steps == 3


@pytest.mark.parametrize(
    "kwargs, message",
    [
        ({"t_final": 1.0, "dt": 0.3}, "not a positive integer"),
        ({"t_final": 1.0, "dt": 0.1, "scheme": "theta", "theta": 0.4}, "theta"),
        ({"t_final": 1.0, "dt": 0.1, "scheme": "rk4"}, "unknown scheme"),
        ({"t_final": 0.0, "dt": 0.1}, "t_final"),
        ({"t_final": 1.0, "dt": -0.1}, "dt"),
        ({"t_final": 1.0, "dt": 0.1, "sample_every": 0}, "sample_every"),
    ],
)
def test_time_grid_rejects(kwargs, message):
    with pytest.raises(ConfigurationError, match=message):
        TimeGrid(**kwargs)


def test_scalar_flow_closed_form(scalar_pair):
    trajectory = run(scalar_pair, [1.0], TimeGrid(1.0, 1e-3), solver="direct")
    assert trajectory.energies[-1] == pytest.approx(0.5 * 1.001 ** (-2000), rel=1e-10)
    assert trajectory.energies[-1] == pytest.approx(0.5 * math.exp(-2.0), rel=1e-2)
    quarter = 0.25 * (1.0 - math.exp(-2.0))
    assert trajectory.dissipation_integral[-1] == pytest.approx(quarter, rel=1e-2)
    assert trajectory.dual_integral[-1] == pytest.approx(quarter, rel=1e-2)
    assert np.all(np.diff(trajectory.energies) <= 0)
    assert trajectory.bounds_hold()


def test_implicit_euler_residual_is_first_order(scalar_pair):
    coarse = run(scalar_pair, [1.0], TimeGrid(1.0, 1e-2))
    fine = run(scalar_pair, [1.0], TimeGrid(1.0, 5e-3))
    assert coarse.relative_residual() <= 0.5 * 1e-2
    assert coarse.relative_residual() / fine.relative_residual() >= 1.8


def test_crank_nicolson_balances_exactly(scalar_pair):
    grid = TimeGrid(1.0, 1e-2, scheme="theta", theta=0.5)
    trajectory = run(scalar_pair, [1.0], grid, solver="direct")
    assert trajectory.relative_residual() < 1e-10
    assert np.max(np.abs(trajectory.fenchel_defect)) < 1e-12


def test_observer_sees_every_sample(scalar_pair):
    seen = []
    grid = TimeGrid(1.0, 1e-2, sample_every=10)
    trajectory = run(scalar_pair, [1.0], grid, observer=lambda k, *rest: seen.append(k))
    assert seen == list(range(0, 101, 10))
    assert len(trajectory.times) == 11
    assert trajectory.times[-1] == pytest.approx(1.0)


def test_ede_residual_recomputes_the_trajectory(scalar_pair):
    trajectory = run(scalar_pair, [2.0], TimeGrid(0.5, 0.05))
    check = ede_residual(trajectory, scalar_pair, -1)
    assert check.residual == pytest.approx(trajectory.ede_residual[-1], rel=1e-12)
    assert check.identity_defect == trajectory.identity_defect[-1]
    assert ede_residual(trajectory, scalar_pair, 0).residual == 0.0
    with pytest.raises(IndexError):
        ede_residual(trajectory, scalar_pair, len(trajectory.times))


def test_decay_rate():
    pair = OperatorPair.from_matrices(np.diag([1.0, 2.0]), np.diag([3.0, 1.0]))
    assert decay_rate(pair) == pytest.approx(0.5)


def test_flow_map_is_identity_when_k_equals_m():
    matrix = np.array([[2.0, 0.5], [0.5, 1.0]])
    pair = OperatorPair.from_matrices(matrix, matrix)
    operator = flow_map_matrix(pair)
    v = np.array([0.3, -1.2])
    np.testing.assert_allclose(operator @ v, v, rtol=1e-8)


def test_zero_initial_state_stays_at_rest():
    pair = OperatorPair.from_matrices(np.eye(3), 2.0 * np.eye(3))
    trajectory = run(pair, np.zeros(3), TimeGrid(0.1, 0.01))
    assert not np.any(trajectory.states)
    assert not np.any(trajectory.energies)
    assert trajectory.relative_residual() == 0.0
    assert trajectory.solver_iterations == 0


def test_single_step(scalar_pair):
    assert step(scalar_pair, np.array([1.0]), 0.1) == pytest.approx([1.0 / 1.1])
    half = step(scalar_pair, np.array([1.0]), 0.1, scheme="theta", theta=0.5, solver="direct")
    assert half == pytest.approx([0.95 / 1.05])


def test_initial_state_checks(scalar_pair):
    with pytest.raises(ConfigurationError, match="entries"):
        run(scalar_pair, [1.0, 2.0], TimeGrid(0.1, 0.1))
    with pytest.raises(InvariantError, match="non-finite"):
        run(scalar_pair, [np.inf], TimeGrid(0.1, 0.1))
    with pytest.raises(ConfigurationError, match="solver"):
        run(scalar_pair, [1.0], TimeGrid(0.1, 0.1), solver="gmres")


def test_failed_factorization_is_a_solver_error(scalar_pair, monkeypatch):
    def _singular(matrix):
        raise RuntimeError("Factor is exactly singular")

    monkeypatch.setattr(scipy.sparse.linalg, "factorized", _singular)
    with pytest.raises(SolverError, match="factorization failed: Factor is exactly singular"):
        step(scalar_pair, [1.0], 0.1, solver="direct")


def test_failed_lu_solve_is_a_solver_error(scalar_pair, monkeypatch):
    def _factor(matrix):
        def _solve(rhs):
            raise ValueError("rhs has the wrong shape")

        return _solve

    monkeypatch.setattr(scipy.sparse.linalg, "factorized", _factor)
    with pytest.raises(SolverError, match="LU solve failed"):
        run(scalar_pair, [1.0], TimeGrid(0.1, 0.1), solver="direct")


def test_indefinite_mass_is_a_solver_error():
    pair = OperatorPair.from_matrices([[-1.0]], [[1.0]])
    with pytest.raises(SolverError, match="decay rate eigenproblem failed"):
        decay_rate(pair)


def test_flow_is_linear_in_the_initial_state():
    M = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 1.5]])
    K = np.array([[4.0, -1.0, 0.0], [-1.0, 3.0, 0.5], [0.0, 0.5, 2.0]])
    pair = OperatorPair.from_matrices(M, K)
    u0 = np.array([1.0, -0.5, 0.25])
    time_grid = TimeGrid(0.2, 0.01, scheme="theta", theta=0.5)
    base = run(pair, u0, time_grid, solver="direct")
    scaled = run(pair, -3.0 * u0, time_grid, solver="direct")
    np.testing.assert_allclose(scaled.states, -3.0 * base.states, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(scaled.energies, 9.0 * base.energies, rtol=1e-12)


@pytest.mark.slow
def test_ede_residual_is_first_order_on_a_fine_grid():
    domain = Domain.unit(2, 0.0625)
    grid = build_grid(domain, 1.0 / 64.0)
    kernel = make_kernel("indicator", 2, 0.0625)
    pair = assemble(kernel, grid, MaterialParams(alpha=2.0, beta=1.0), "moment")
    u0 = DisplacementField.from_function(grid, make_field("product-of-sines", domain))
    residuals = [
        run(pair, u0, TimeGrid(0.5, dt), solver="direct").relative_residual()
        for dt in (2e-3, 1e-3)
    ]
    assert residuals[1] < 1e-2
    assert residuals[0] / residuals[1] >= 1.8
