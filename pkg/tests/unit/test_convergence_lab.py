# -*- coding: utf-8 -*-
# Copyright: (c) 2026, peridynamic-kv contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import math

import numpy as np
import pytest

from peridynamic_kv.module_utils.common import ConfigurationError, InitialDataError
from peridynamic_kv.module_utils.convergence_lab import (
    FIELDS,
    ConvergenceReport,
    LevelReport,
    SweepPlan,
    divergence_consistency,
    form_consistency,
    make_field,
    prepare_initial,
    run_sweep,
    seminorm_ratio,
)
from peridynamic_kv.module_utils.evolution import TimeGrid
from peridynamic_kv.module_utils.kernels import KernelSequence
from peridynamic_kv.module_utils.local_model import Mesh
from peridynamic_kv.module_utils.nonlocal_model import MaterialParams

SMOOTH = ("product-of-sines", "bubble", "cutoff-identity", "cutoff-rotation")


@pytest.fixture
def two_levels():
    return KernelSequence.from_horizons("indicator", 2, [0.2, 0.1])


@pytest.fixture
def reference_mesh(unit_square):
    return Mesh.structured(unit_square, 0.025)


def _plan(domain, kernels, field="zero", **kwargs):
    return SweepPlan(
        domain=domain,
        kernels=kernels,
        params=kwargs.pop("params", MaterialParams(alpha=2.0, beta=1.0)),
        initial_field=make_field(field, domain),
        **kwargs,
    )


def test_unknown_field(unit_square):
    with pytest.raises(ConfigurationError, match="unknown field"):
        make_field("gaussian", unit_square)


def test_rigid_field_is_not_admissible(unit_square):
    rigid = make_field("rigid", unit_square)
    with pytest.raises(InitialDataError, match="does not vanish"):
        rigid.check_trace()
    # rigid motions are not cut off outside the box
    assert np.any(rigid([[1.1, 0.5]]))


@pytest.mark.parametrize("name", SMOOTH + ("zero",))
def test_admissible_fields_vanish_on_the_boundary(unit_square, name):
    analytic = make_field(name, unit_square, amplitude=2.0)
    assert analytic.check_trace() <= 1e-12
    assert not np.any(analytic([[1.1, 0.5], [-0.05, 0.3]]))


@pytest.mark.parametrize("name", SMOOTH + ("rigid",))
def test_gradients_match_finite_differences(unit_square, name):
    analytic = make_field(name, unit_square)
    point = np.array([0.37, 0.61])
    step = 1e-6
    gradient = analytic.gradient(point)[0]
    for j in range(2):
        shift = np.zeros(2)
        shift[j] = step
        column = (analytic(point + shift)[0] - analytic(point - shift)[0]) / (2 * step)
        np.testing.assert_allclose(gradient[:, j], column, atol=1e-7)
    assert analytic.divergence(point)[0] == pytest.approx(np.trace(gradient))


def test_fields_cover_the_documented_choices():
    assert set(FIELDS) == set(SMOOTH) | {"zero", "rigid"}


def test_prepare_initial(unit_square, small_grid, indicator_kernel, material, reference_mesh):
    prepared = prepare_initial(
        make_field("zero", unit_square), small_grid, indicator_kernel, material, reference_mesh
    )
    assert prepared.gap == 0.0
    assert not np.any(prepared.field.values)
    with pytest.raises(InitialDataError):
        prepare_initial(
            make_field("rigid", unit_square),
            small_grid,
            indicator_kernel,
            material,
            reference_mesh,
        )


def test_prepare_initial_restricts_to_the_grid(unit_square, small_grid, indicator_kernel, material):
    analytic = make_field("bubble", unit_square)
    prepared = prepare_initial(
        analytic, small_grid, indicator_kernel, material, None, reference=1.0
    )
    assert prepared.reference_energy == 1.0
    assert prepared.gap == pytest.approx(abs(prepared.nonlocal_energy - 1.0))
    inside = small_grid.interior_mask
    np.testing.assert_allclose(prepared.field.values[inside], analytic(small_grid.nodes[inside]))


def test_divergence_consistency(unit_square, two_levels):
    analytic = make_field("product-of-sines", unit_square)
    levels = divergence_consistency(two_levels, analytic, unit_square)
    assert [level.horizon for level in levels] == [0.2, 0.1]
    assert [level.spacing for level in levels] == pytest.approx([0.05, 0.025])
    for level in levels:
        assert level.interior_l2_error <= level.l2_error
    assert levels[1].interior_l2_error < levels[0].interior_l2_error


@pytest.mark.slow
def test_divergence_consistency_over_three_levels(unit_square):
    kernels = KernelSequence.from_horizons("indicator", 2, [0.2, 0.1, 0.05])
    analytic = make_field("product-of-sines", unit_square)
    levels = divergence_consistency(kernels, analytic, unit_square)
    interior = [level.interior_l2_error for level in levels]
    assert interior[2] < interior[1] < interior[0]
    assert interior[2] < 0.25 * interior[0]


def test_form_consistency_of_the_zero_field(unit_square, two_levels, material, reference_mesh):
    zero = make_field("zero", unit_square)
    levels = form_consistency(two_levels, zero, zero, unit_square, material, reference_mesh)
    for level in levels:
        assert level.inner_product_defect == 0.0
        assert level.divergence_product_defect == 0.0
        assert level.energy_form_defect == 0.0


def test_form_consistency_rejects_rigid_fields(unit_square, two_levels, material, reference_mesh):
    rigid = make_field("rigid", unit_square)
    smooth = make_field("bubble", unit_square)
    with pytest.raises(InitialDataError):
        form_consistency(two_levels, smooth, rigid, unit_square, material, reference_mesh)


def test_seminorm_ratio_stays_bounded(unit_square, two_levels, reference_mesh):
    analytic = make_field("cutoff-rotation", unit_square)
    ratios = seminorm_ratio(two_levels, analytic, unit_square, reference_mesh)
    assert len(ratios) == 2
    for value in ratios:
        assert 0.1 < value < 10.0


def _report(values, evolved=False, status="ok"):
    rows = []
    for index, value in enumerate(values):
        row = LevelReport(horizon=0.2 / 2**index, spacing=0.05 / 2**index)
        for name in (
            "initial_gap",
            "divergence_defect",
            "divergence_interior_defect",
            "inner_product_defect",
            "energy_form_defect",
        ):
            setattr(row, name, value)
        rows.append(row)
    rows[-1].status = status
    return ConvergenceReport(rows=rows, evolved=evolved, initial_data="test")


def test_gate_passes_on_decreasing_columns():
    report = _report([0.4, 0.2, 0.1])
    assert report.gate() == []
    assert report.passed
    assert "l2_error" not in report.columns
    assert "status" in report.columns
    columns, rows = report.table()
    assert columns[:2] == ["horizon", "spacing"]
    assert len(rows) == 3


def test_gate_names_the_failing_columns():
    report = _report([0.4, 0.5, 0.1])
    assert report.gate() == [
        "initial_gap",
        "divergence_defect",
        "divergence_interior_defect",
        "inner_product_defect",
        "energy_form_defect",
    ]
    assert "status" in _report([0.4, 0.2, 0.1], status="failed: boom").gate()


def test_evolved_reports_monitor_the_trajectory_columns():
    report = _report([0.4, 0.2, 0.1], evolved=True)
    assert "l2_error" in report.columns
    assert "l2_error" in report.monitored
    # NaN never counts as a decrease
    assert "l2_error" in report.gate()
    for row, value in zip(report.rows, (0.3, 0.2, 0.1)):
        row.l2_error = row.net_l2_error = row.energy_gap = value
    assert report.passed


def test_sweep_plan_validation(unit_square, two_levels):
    with pytest.raises(ConfigurationError, match="refinement"):
        _plan(unit_square, two_levels, refinement=1)
    with pytest.raises(ConfigurationError, match="ratio"):
        _plan(unit_square, two_levels, ratio=0.0)
    with pytest.raises(ConfigurationError, match="mesh spacing"):
        _plan(unit_square, two_levels, mesh_spacing=0.025)
    with pytest.raises(InitialDataError):
        _plan(unit_square, two_levels, field="rigid")
    wide = KernelSequence.from_horizons("indicator", 2, [0.4, 0.2])
    with pytest.raises(ConfigurationError, match="collar_width"):
        _plan(unit_square, wide)
    plan = _plan(unit_square, two_levels)
    assert plan.reference_spacing == pytest.approx(0.0125)
    assert plan.second_field is plan.initial_field


def test_zero_field_sweep_without_evolution(unit_square, two_levels):
    plan = _plan(unit_square, two_levels, ratio=2.0)
    report = run_sweep(plan, threads=2)
    assert [row.horizon for row in report.rows] == [0.2, 0.1]
    assert not report.evolved
    assert report.passed
    assert all(row.status == "ok" for row in report.rows)
    assert all(row.initial_gap == 0.0 for row in report.rows)
    assert math.isnan(report.rows[0].l2_error)
    assert report.initial_data == "grid restriction of zero"


def test_zero_field_sweep_with_evolution(unit_square, two_levels):
    plan = _plan(
        unit_square,
        two_levels,
        ratio=2.0,
        time_grid=TimeGrid(0.02, 0.01),
        solver="direct",
    )
    report = run_sweep(plan)
    assert report.evolved
    assert report.passed
    for row in report.rows:
        assert row.l2_error == 0.0
        assert row.energy_gap == 0.0
        assert len(row.curve["t"]) == 3


def test_failed_levels_are_reported(unit_square, two_levels, monkeypatch):
    def _boom(*args, **kwargs):
        raise ConfigurationError("assembly refused")

    monkeypatch.setattr("peridynamic_kv.module_utils.convergence_lab.assemble", _boom)
    report = run_sweep(_plan(unit_square, two_levels, ratio=2.0))
    assert all(row.status == "failed: assembly refused" for row in report.rows)
    assert all(math.isnan(row.initial_gap) for row in report.rows)
    assert "status" in report.gate()


def test_level_rows_carry_the_midpoint_mass(unit_square, two_levels):
    report = run_sweep(_plan(unit_square, two_levels, ratio=2.0))
    # 12 lattice points within two spacings, each weighing 2 dx^2 / (pi h^2)
    expected = 6.0 / math.pi
    for row in report.rows:
        assert row.discrete_mass == pytest.approx(expected)
        assert row.mass_defect == pytest.approx(2.0 - expected)
        assert math.isnan(row.seminorm_ratio)
    for name in ("discrete_mass", "mass_defect", "seminorm_ratio"):
        assert name in report.columns
        assert name not in report.monitored


def test_distinct_flows_separate_the_error_columns(unit_square, two_levels):
    plan = _plan(
        unit_square,
        two_levels,
        field="bubble",
        params=MaterialParams(alpha=2.0, beta=2.0),
        ratio=2.0,
        time_grid=TimeGrid(0.02, 0.01),
        solver="direct",
    )
    report = run_sweep(plan)
    for row in report.rows:
        assert row.status == "ok"
        assert row.net_l2_error > 1e-6
        assert not math.isclose(row.l2_error, row.interpolation_error, rel_tol=1e-6)
        assert 0.1 < row.seminorm_ratio < 10.0
