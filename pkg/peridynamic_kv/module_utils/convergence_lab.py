# -*- coding: utf-8 -*-
# Copyright: (c) 2026, peridynamic-kv contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

"""Horizon sweeps of the nonlocal model against a fine local reference.

Every level uses a grid with spacing h / ratio. The reference is a P1
solution on a mesh `refinement` times finer than the finest grid; its values
at grid nodes come from barycentric interpolation on the mesh. Errors in
the continuous L2 norm compare the nearest-node grid field with the
reference at degree-2 quadrature points of the mesh.
"""

from __future__ import absolute_import, division, print_function

__metaclass__ = type

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from peridynamic_kv.module_utils.common import (
    ConfigurationError,
    InitialDataError,
    KelvinVoigtConstants,
    KelvinVoigtError,
    KelvinVoigtFunctions,
)
from peridynamic_kv.module_utils.evolution import run
from peridynamic_kv.module_utils.geometry import build_grid
from peridynamic_kv.module_utils.kernels import discrete_mass
from peridynamic_kv.module_utils.local_model import (
    FemField,
    Mesh,
    assemble_local,
    local_energy,
    quadratic_sphere_product,
    tensors_from_peridynamic,
)
from peridynamic_kv.module_utils.nonlocal_model import (
    DisplacementField,
    assemble,
    bond_operator,
    energy,
)

log = logging.getLogger(__name__)

FIELDS = (
    "zero",
    "product-of-sines",
    "bubble",
    "rigid",
    "cutoff-identity",
    "cutoff-rotation",
)

_SKEW = {
    2: np.array([[0.0, -1.0], [1.0, 0.0]]),
    3: np.array([[0.0, -1.0, 0.5], [1.0, 0.0, -0.25], [-0.5, 0.25, 0.0]]),
}


def _products(factors):
    """prod_i f_i and, per axis j, prod_{i != j} f_i."""
    total = np.prod(factors, axis=1)
    others = np.stack(
        [np.prod(np.delete(factors, j, axis=1), axis=1) for j in range(factors.shape[1])],
        axis=1,
    )
    return total, others


@dataclass(frozen=True)
class AnalyticField:
    """Closed-form displacement on the box with its gradient; zero outside unless rigid."""

    name: str
    domain: object
    amplitude: float = 1.0

    def __post_init__(self):
        if self.name not in FIELDS:
            raise ConfigurationError(
                f"unknown field {self.name!r} (known: {', '.join(FIELDS)})"
            )

    @property
    def extends_by_zero(self):
        return self.name != "rigid"

    def _evaluate(self, points):
        dim = self.domain.dim
        lower = np.asarray(self.domain.lower)
        lengths = self.domain.lengths
        y = (points - lower) / lengths
        center = lower + 0.5 * lengths
        n = len(points)
        values = np.zeros((n, dim))
        gradients = np.zeros((n, dim, dim))
        if self.name == "product-of-sines":
            sines, others = _products(np.sin(np.pi * y))
            partial = others * np.pi * np.cos(np.pi * y) / lengths
            values[:] = sines[:, None]
            gradients[:] = partial[:, None, :]
        elif self.name == "bubble":
            bumps, others = _products(4.0 * y * (1.0 - y))
            partial = others * 4.0 * (1.0 - 2.0 * y) / lengths
            pattern = np.array([1.0, -0.5, 1.0 / 3.0])[:dim]
            values = bumps[:, None] * pattern
            gradients = pattern[None, :, None] * partial[:, None, :]
        elif self.name == "rigid":
            skew = _SKEW[dim]
            shift = np.array([0.1, -0.2, 0.3])[:dim]
            values = shift + (points - center) @ skew.T
            gradients[:] = skew
        elif self.name in ("cutoff-identity", "cutoff-rotation"):
            cutoff, others = _products(np.sin(np.pi * y) ** 2)
            partial = others * np.pi * np.sin(2.0 * np.pi * y) / lengths
            linear = np.eye(dim) if self.name == "cutoff-identity" else _SKEW[dim]
            affine = (points - center) @ linear.T
            values = cutoff[:, None] * affine
            gradients = (
                affine[:, :, None] * partial[:, None, :]
                + cutoff[:, None, None] * linear[None, :, :]
            )
        return self.amplitude * values, self.amplitude * gradients

    def _masked(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        values, gradients = self._evaluate(points)
        if self.extends_by_zero:
            outside = ~self.domain.contains(points, closed=True)
            values[outside] = 0.0
            gradients[outside] = 0.0
        return values, gradients

    def __call__(self, points):
        return self._masked(points)[0]

    def gradient(self, points):
        return self._masked(points)[1]

    def divergence(self, points):
        return np.trace(self.gradient(points), axis1=1, axis2=2)

    def check_trace(self, samples=17):
        """Reject fields that do not vanish on the boundary of Omega."""
        dim = self.domain.dim
        axis = np.linspace(0.0, 1.0, samples)
        lower = np.asarray(self.domain.lower)
        lengths = self.domain.lengths
        worst = 0.0
        for normal in range(dim):
            tangential = [axis] * (dim - 1)
            mesh = np.meshgrid(*tangential, indexing="ij")
            face = np.stack([m.ravel() for m in mesh], axis=1)
            for side in (0.0, 1.0):
                unit = np.insert(face, normal, side, axis=1)
                values, _ = self._evaluate(lower + unit * lengths)
                worst = max(worst, float(np.max(np.abs(values))))
        tolerance = KelvinVoigtConstants.TRACE_TOLERANCE * max(1.0, abs(self.amplitude))
        if worst > tolerance:
            raise InitialDataError(
                f"field {self.name!r} does not vanish on the boundary (max trace {worst:.3e})"
            )
        return worst


def make_field(name, domain, amplitude=1.0):
    return AnalyticField(name, domain, float(amplitude))


@dataclass(frozen=True, eq=False)
class PreparedInitial:
    field: DisplacementField
    gap: float
    nonlocal_energy: float
    reference_energy: float


def reference_energy(analytic, mesh, tensors):
    """Energy of the P1 interpolant on the reference mesh."""
    return local_energy(tensors, FemField.interpolate(mesh, analytic))


def prepare_initial(
    analytic,
    grid,
    kernel,
    params,
    mesh,
    quadrature="moment",
    reference=None,
):
    """Grid restriction of a boundary-vanishing field and its energy gap to the local energy."""
    analytic.check_trace()
    initial = DisplacementField.from_function(grid, analytic)
    if reference is None:
        tensors = tensors_from_peridynamic(params.alpha, params.beta, grid.dim)
        reference = reference_energy(analytic, mesh, tensors)
    value = energy(kernel, grid, params, initial, quadrature)
    return PreparedInitial(initial, abs(value - reference), value, reference)


@dataclass(frozen=True)
class DivergenceLevel:
    horizon: float
    spacing: float
    l2_error: float
    interior_l2_error: float


def _divergence_level(kernel, analytic, domain, ratio, quadrature, margin):
    grid = build_grid(domain, kernel.horizon / ratio)
    u = DisplacementField.from_function(grid, analytic)
    bonds = bond_operator(kernel, grid, quadrature)
    error = bonds.divergences(u.flat) - analytic.divergence(grid.nodes)
    interior = domain.contains(grid.nodes) & (domain.boundary_distance(grid.nodes) > margin)
    volume = grid.cell_volume
    return DivergenceLevel(
        horizon=kernel.horizon,
        spacing=grid.spacing,
        l2_error=float(np.sqrt(np.sum(error**2) * volume)),
        interior_l2_error=float(np.sqrt(np.sum(error[interior] ** 2) * volume)),
    )


def divergence_consistency(kernels, analytic, domain, ratio=4.0, quadrature="moment"):
    """L2 distance of the nonlocal divergence to div u per level, on Omega-tilde and inside."""
    analytic.check_trace()
    margin = kernels[0].horizon
    return [
        _divergence_level(k, analytic, domain, ratio, quadrature, margin) for k in kernels
    ]


def form_oracles(mesh, tensors, u_field, v_field):
    """Local bilinear forms of two analytic fields by degree-2 quadrature on mesh."""
    points, weights, _ = mesh.quadrature_points()
    grad_u = u_field.gradient(points)
    grad_v = v_field.gradient(points)
    dim = mesh.dim
    strain_u = 0.5 * (grad_u + np.swapaxes(grad_u, 1, 2))
    strain_v = 0.5 * (grad_v + np.swapaxes(grad_v, 1, 2))
    div_u = np.trace(grad_u, axis1=1, axis2=2)
    div_v = np.trace(grad_v, axis1=1, axis2=2)
    return {
        "inner": float(np.sum(weights * dim * quadratic_sphere_product(grad_u, grad_v, dim))),
        "divergence_product": float(np.sum(weights * div_u * div_v)),
        "energy_form": float(
            np.sum(weights * np.einsum("ijkl,qij,qkl->q", tensors.C, strain_u, strain_v))
        ),
        "strain_norm_sq": float(np.sum(weights * np.sum(strain_u**2, axis=(1, 2)))),
    }


@dataclass(frozen=True)
class FormLevel:
    horizon: float
    inner_product_defect: float
    divergence_product_defect: float
    energy_form_defect: float


def _form_level(kernel, grid, params, u_field, v_field, oracles, quadrature):
    bonds = bond_operator(kernel, grid, quadrature)
    u = DisplacementField.from_function(grid, u_field).flat
    v = DisplacementField.from_function(grid, v_field).flat
    return FormLevel(
        horizon=kernel.horizon,
        inner_product_defect=abs(bonds.inner(u, v) - oracles["inner"]),
        divergence_product_defect=abs(
            bonds.divergence_product(u, v) - oracles["divergence_product"]
        ),
        energy_form_defect=abs(bonds.energy_form(params, u, v) - oracles["energy_form"]),
    )


def form_consistency(
    kernels, u_field, v_field, domain, params, mesh, ratio=4.0, quadrature="moment"
):
    """Defects of (u, v)_n, the divergence product and u^T K_n v against their local limits."""
    u_field.check_trace()
    v_field.check_trace()
    tensors = tensors_from_peridynamic(params.alpha, params.beta, domain.dim)
    oracles = form_oracles(mesh, tensors, u_field, v_field)
    levels = []
    for kernel in kernels:
        grid = build_grid(domain, kernel.horizon / ratio)
        levels.append(
            _form_level(kernel, grid, params, u_field, v_field, oracles, quadrature)
        )
    return levels


def seminorm_ratio(kernels, analytic, domain, mesh, ratio=4.0, quadrature="moment"):
    """|u|_n^2 / ||eps(u)||^2 per level; stays bounded as the horizon shrinks."""
    tensors = tensors_from_peridynamic(1.0, 1.0, domain.dim)
    strain = form_oracles(mesh, tensors, analytic, analytic)["strain_norm_sq"]
    ratios = []
    for kernel in kernels:
        grid = build_grid(domain, kernel.horizon / ratio)
        ratios.append(_seminorm_level(kernel, grid, analytic, strain, quadrature))
    return ratios


def _seminorm_level(kernel, grid, analytic, strain_norm_sq, quadrature):
    if strain_norm_sq <= 0.0:
        return math.nan
    u = DisplacementField.from_function(grid, analytic).flat
    return bond_operator(kernel, grid, quadrature).inner(u, u) / strain_norm_sq


@dataclass(frozen=True, eq=False)
class SweepPlan:
    domain: object
    kernels: object
    params: object
    initial_field: AnalyticField
    time_grid: Optional[object] = None
    ratio: float = 4.0
    refinement: int = 2
    mesh_spacing: Optional[float] = None
    consistency_field: Optional[AnalyticField] = None
    quadrature: str = "moment"
    solver: str = "cg"
    matrix_free: bool = False

    def __post_init__(self):
        if not self.ratio > 0:
            raise ConfigurationError(f"ratio must be > 0, got {self.ratio}")
        if self.refinement < 2:
            raise ConfigurationError("reference refinement must be >= 2")
        finest = self.spacing(self.kernels[-1])
        if self.mesh_spacing is not None and not 0 < self.mesh_spacing <= finest / 2:
            raise ConfigurationError(
                f"reference mesh spacing {self.mesh_spacing} must lie in (0, {finest / 2}]"
            )
        if any(k.dim != self.domain.dim for k in self.kernels):
            raise ConfigurationError("kernel and domain dimensions differ")
        self.domain.check_horizon(self.kernels[0].horizon)
        self.initial_field.check_trace()
        self.second_field.check_trace()

    @property
    def second_field(self):
        return self.consistency_field or self.initial_field

    def spacing(self, kernel):
        return kernel.horizon / self.ratio

    @property
    def reference_spacing(self):
        if self.mesh_spacing is not None:
            return self.mesh_spacing
        return self.spacing(self.kernels[-1]) / self.refinement


EVOLUTION_COLUMNS = (
    "l2_error",
    "interpolation_error",
    "net_l2_error",
    "energy_gap",
    "ede_residual",
)
MONITORED = (
    "l2_error",
    "net_l2_error",
    "energy_gap",
    "initial_gap",
    "divergence_defect",
    "divergence_interior_defect",
    "inner_product_defect",
    "energy_form_defect",
)


@dataclass
class LevelReport:
    horizon: float
    spacing: float
    initial_gap: float = math.nan
    divergence_defect: float = math.nan
    divergence_interior_defect: float = math.nan
    inner_product_defect: float = math.nan
    divergence_product_defect: float = math.nan
    energy_form_defect: float = math.nan
    expansion_defect: float = math.nan
    discrete_mass: float = math.nan
    mass_defect: float = math.nan
    seminorm_ratio: float = math.nan
    l2_error: float = math.nan
    interpolation_error: float = math.nan
    net_l2_error: float = math.nan
    energy_gap: float = math.nan
    ede_residual: float = math.nan
    status: str = "ok"
    curve: Optional[dict] = field(default=None, repr=False)


@dataclass
class ConvergenceReport:
    rows: list
    evolved: bool
    initial_data: str

    @property
    def columns(self):
        names = [f.name for f in fields(LevelReport) if f.name != "curve"]
        if not self.evolved:
            names = [n for n in names if n not in EVOLUTION_COLUMNS]
        return names

    @property
    def monitored(self):
        return [c for c in MONITORED if c in self.columns]

    def column(self, name):
        return [getattr(row, name) for row in self.rows]

    def gate(self):
        """Monitored columns that fail to decrease strictly across the levels."""
        failing = [
            name
            for name in self.monitored
            if not KelvinVoigtFunctions.strictly_decreasing(self.column(name))
        ]
        if any(row.status != "ok" for row in self.rows):
            failing.append("status")
        return failing

    @property
    def passed(self):
        return not self.gate()

    def table(self):
        columns = self.columns
        return columns, [[getattr(row, c) for c in columns] for row in self.rows]


class _Reference:
    """Local reference data shared read-only by every level."""

    def __init__(self, plan, threads):
        started = time.perf_counter()
        dim = plan.domain.dim
        self.tensors = tensors_from_peridynamic(plan.params.alpha, plan.params.beta, dim)
        self.mesh = Mesh.structured(plan.domain, plan.reference_spacing)
        self.initial = FemField.interpolate(self.mesh, plan.initial_field)
        self.initial_energy = local_energy(self.tensors, self.initial)
        self.oracles = form_oracles(
            self.mesh, self.tensors, plan.initial_field, plan.second_field
        )
        self.points, self.weights, self._bary = self.mesh.quadrature_points()
        self.trajectory = None
        if plan.time_grid is not None:
            system = assemble_local(self.tensors, self.mesh, threads)
            self.trajectory = run(
                system.pair(), self.initial.values, plan.time_grid, plan.solver
            )
        log.info(
            "reference: %d mesh nodes, E(u0)=%.6e (%.2fs)",
            self.mesh.n_nodes,
            self.initial_energy,
            time.perf_counter() - started,
        )

    def at_points(self, k):
        """Reference state k at the quadrature points."""
        nodal = self.trajectory.field(k)[self.mesh.cells]
        return np.einsum("qa,caj->cqj", self._bary, nodal).reshape(-1, self.mesh.dim)

    def sampler(self, grid):
        """Map from a reference state index to its values at the grid nodes, zero off the box."""
        inside = grid.domain.contains(grid.nodes, closed=True)
        cells, bary = self.mesh.locate(grid.nodes[inside])
        vertices = self.mesh.cells[cells]

        def _sample(k):
            values = np.zeros((grid.n_nodes, grid.dim))
            nodal = self.trajectory.field(k)[vertices]
            values[inside] = np.einsum("pa,paj->pj", bary, nodal)
            return values

        return _sample


def _run_level(plan, kernel, reference):
    grid = build_grid(plan.domain, plan.spacing(kernel))
    report = LevelReport(horizon=kernel.horizon, spacing=grid.spacing)
    pair = assemble(kernel, grid, plan.params, plan.quadrature, plan.matrix_free)
    prepared = prepare_initial(
        plan.initial_field,
        grid,
        kernel,
        plan.params,
        reference.mesh,
        plan.quadrature,
        reference=reference.initial_energy,
    )
    report.initial_gap = prepared.gap
    report.expansion_defect = pair.expansion_defect
    # raw midpoint mass at the center, whatever quadrature assembled the pair
    report.discrete_mass = discrete_mass(kernel, grid, grid.center_node)
    report.mass_defect = abs(report.discrete_mass - grid.dim)
    divergence = _divergence_level(
        kernel,
        plan.initial_field,
        plan.domain,
        plan.ratio,
        plan.quadrature,
        plan.kernels[0].horizon,
    )
    report.divergence_defect = divergence.l2_error
    report.divergence_interior_defect = divergence.interior_l2_error
    forms = _form_level(
        kernel,
        grid,
        plan.params,
        plan.initial_field,
        plan.second_field,
        reference.oracles,
        plan.quadrature,
    )
    report.inner_product_defect = forms.inner_product_defect
    report.divergence_product_defect = forms.divergence_product_defect
    report.energy_form_defect = forms.energy_form_defect
    report.seminorm_ratio = _seminorm_level(
        kernel, grid, plan.initial_field, reference.oracles["strain_norm_sq"], plan.quadrature
    )
    if plan.time_grid is None:
        return report

    trajectory = run(pair, prepared.field, plan.time_grid, plan.solver)
    ref = reference.trajectory
    if len(ref.times) != len(trajectory.times):
        raise ConfigurationError("level and reference sample different instants")
    nearest = grid.nearest_node(reference.points)
    weights = reference.weights
    sample = reference.sampler(grid)
    l2, interpolation, net = [], [], []
    for k in range(len(trajectory.times)):
        level_values = trajectory.field(k)
        ref_nodes = sample(k)
        ref_points = reference.at_points(k)
        l2.append(np.sum(weights * np.sum((level_values[nearest] - ref_points) ** 2, axis=1)))
        interpolation.append(
            np.sum(weights * np.sum((ref_nodes[nearest] - ref_points) ** 2, axis=1))
        )
        net.append(np.sum((level_values - ref_nodes) ** 2) * grid.cell_volume)
    l2 = np.sqrt(l2)
    gaps = np.abs(trajectory.energies - ref.energies)
    report.l2_error = float(np.max(l2))
    report.interpolation_error = float(np.sqrt(np.max(interpolation)))
    report.net_l2_error = float(np.sqrt(np.max(net)))
    report.energy_gap = float(np.max(gaps))
    report.ede_residual = trajectory.relative_residual()
    report.curve = {
        "t": trajectory.times,
        "energy": trajectory.energies,
        "reference_energy": ref.energies,
        "l2_error": l2,
        "dissipation_integral": trajectory.dissipation_integral,
        "dual_integral": trajectory.dual_integral,
        "ede_residual": trajectory.ede_residual,
    }
    if not trajectory.bounds_hold():
        report.status = "failed: a priori bounds violated"
    return report


def run_sweep(plan, threads=1):
    """One report row per horizon, ordered by decreasing horizon."""
    started = time.perf_counter()
    reference = _Reference(plan, threads)

    def _guarded(kernel):
        try:
            report = _run_level(plan, kernel, reference)
        except (KelvinVoigtError, np.linalg.LinAlgError, ValueError) as err:
            log.warning("level h=%g failed: %s", kernel.horizon, err)
            return LevelReport(
                horizon=kernel.horizon,
                spacing=plan.spacing(kernel),
                status=f"failed: {err}",
            )
        log.info(
            "level h=%g: initial gap %.3e, divergence %.3e",
            kernel.horizon,
            report.initial_gap,
            report.divergence_defect,
        )
        return report

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(_guarded, plan.kernels))
    rows.sort(key=lambda row: -row.horizon)
    report = ConvergenceReport(
        rows=rows,
        evolved=plan.time_grid is not None,
        initial_data=f"grid restriction of {plan.initial_field.name}",
    )
    log.info("sweep of %d levels finished in %.2fs", len(rows), time.perf_counter() - started)
    return report
