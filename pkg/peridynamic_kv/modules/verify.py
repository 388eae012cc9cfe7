#!/usr/bin/python
# -*- coding: utf-8 -*-
# Copyright: (c) 2026, peridynamic-kv contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

from __future__ import absolute_import, division, print_function

__metaclass__ = type


DOCUMENTATION = r"""
---
module: verify

short_description: Run the exact-identity and operator-structure suites

version_added: 0.1.0

description:
  - Checks the unit-sphere moment identities, the quadratic sphere product against its
    moment-wise contraction and a quasi Monte Carlo estimate, and the equivalence of the
    three local energy representations.
  - Validates the kernel contract (monotonicity of r^-2 rho, unit mass, compact support)
    for every shipped profile and the configured one.
  - Checks symmetry and positivity of the assembled nonlocal operators, the quadratic form
    identities, the bilinear bound and the Fenchel-Young equality.
  - Writes C(checks.csv) with one row per check and exits 0 only if every check passes.

author: peridynamic-kv contributors

requirements:
  - numpy >= 1.26
  - scipy >= 1.12

options:
  verify:
    description:
      - Sizes of the randomized suites.
    type: dict
    suboptions:
      samples:
        description:
          - Quasi Monte Carlo points on the sphere, rounded up to a power of two.
        type: int
        default: 1048576
      pairs:
        description:
          - Random matrix pairs per dimension for the sphere product check.
        type: int
        default: 20
      random_fields:
        description:
          - Random finite element fields for the energy representation check.
        type: int
        default: 20
      grid_cells:
        description:
          - Grid cells per unit length for the operator checks.
        type: int
        default: 32
      probes:
        description:
          - Random field pairs for the symmetry and bilinear bound checks.
        type: int
        default: 100

extends_documentation_fragment:
  - peridynamic_kv.common
"""


EXAMPLES = r"""
- name: Default verification run
  mode: verify
  output: out/verify
  seed: 7

- name: Planted kernel violation (exits 1 with a named failure row)
  mode: verify
  kernel:
    profile: power
    exponent: 3
"""


RETURN = r"""
checks:
  description: Number of checks run.
  returned: always
  type: int
  sample: 96
failures:
  description: Names of the failing checks.
  returned: always
  type: list
  elements: str
  sample: ["kernel[power].monotone"]
csv:
  description: Path of the per-check table.
  returned: always
  type: str
  sample: out/verify/checks.csv
"""

import itertools
import logging
import math
from collections import namedtuple

import numpy as np
import scipy.special
from scipy.stats import norm, qmc

from peridynamic_kv.module_utils.common import (
    KelvinVoigtConstants,
    KelvinVoigtError,
    KelvinVoigtFunctions,
    KelvinVoigtModule,
    KelvinVoigtOptions,
    KernelAssumptionError,
)
from peridynamic_kv.module_utils.evolution import TimeGrid, run
from peridynamic_kv.module_utils.geometry import Domain, build_grid
from peridynamic_kv.module_utils.kernels import (
    PROFILES,
    KernelSequence,
    discrete_mass,
    make_kernel,
    stencil_weights,
    validate_assumptions,
)
from peridynamic_kv.module_utils.local_model import (
    FemField,
    Mesh,
    dissipation_density,
    local_dissipation,
    local_energy,
    moment_contraction,
    quadratic_sphere_product,
    sphere_moment,
    tensors_from_lame,
    tensors_from_peridynamic,
)
from peridynamic_kv.module_utils.nonlocal_model import (
    DisplacementField,
    MaterialParams,
    OperatorPair,
    assemble,
    bond_operator,
    corollary_bound_constant,
    dissipation,
    dual_dissipation,
    energy,
    poincare_korn_constant,
)

log = logging.getLogger(__name__)

Check = namedtuple("Check", ["name", "measured", "defect", "tolerance", "passed"])

SHIPPED_PROFILES = ("indicator", "conic", "polynomial")
EXACT = 1e-14
FORMS = 1e-12
SYMMETRY = 1e-13
FENCHEL = 1e-6
# the raw midpoint lattice sum undershoots the mass by a few percent at h/dx = 4
LATTICE_MASS = 0.25


def _sphere_samples(dim, count, rng):
    sampler = qmc.Sobol(d=dim, scramble=True, seed=rng)
    uniform = sampler.random_base2(m=max(1, math.ceil(math.log2(count))))
    gaussian = norm.ppf(np.clip(uniform, 1e-16, 1.0 - 1e-16))
    return gaussian / np.linalg.norm(gaussian, axis=1, keepdims=True)


def _gamma_moment(exponents, dim):
    # average of prod s_i^k_i over S^{d-1} via the Gamma function formula
    exponents = list(exponents) + [0] * (dim - len(exponents))
    if any(k % 2 for k in exponents):
        return 0.0
    total = sum(exponents)
    value = scipy.special.gamma(dim / 2.0) / scipy.special.gamma((dim + total) / 2.0)
    for k in exponents:
        value *= scipy.special.gamma((k + 1) / 2.0) / scipy.special.gamma(0.5)
    return float(value)


class Verify:
    def __init__(self, module):
        self.module = module
        self.params = module.params
        self.options = self.params["verify"]
        self.dim = self.params["domain"]["dim"]
        self.rng = np.random.default_rng(self.params["seed"])
        self.checks = []
        try:
            self.sphere_moments()
            self.sphere_product()
            self.energy_forms()
            self.kernel_contract()
            self.operator_structure()
            self.scalar_flow()
        except KelvinVoigtError as err:
            self.write()
            module.error_json(err)
        self.report()

    def add(self, name, measured, defect, tolerance, passed=None):
        if passed is None:
            passed = bool(np.isfinite(defect) and defect <= tolerance)
        self.checks.append(Check(name, float(measured), float(defect), tolerance, passed))
        if not passed:
            log.warning("check %s failed: defect %.3e > %.3e", name, defect, tolerance)

    def sphere_moments(self):
        samples = self.options["samples"]
        for dim in (2, 3):
            points = _sphere_samples(dim, samples, self.rng)
            for degree in (1, 2, 3, 4):
                for exponents in itertools.product(range(degree + 1), repeat=dim):
                    if sum(exponents) != degree:
                        continue
                    value = sphere_moment(exponents, dim)
                    expected = _gamma_moment(exponents, dim)
                    label = "".join(str(k) for k in exponents)
                    self.add(
                        f"sphere_moment[d={dim},{label}]",
                        value,
                        abs(value - expected),
                        EXACT,
                    )
                    monomial = np.prod(points ** np.array(exponents), axis=1)
                    error = np.std(monomial) / math.sqrt(len(monomial))
                    estimate = float(np.mean(monomial))
                    self.add(
                        f"sphere_moment_qmc[d={dim},{label}]",
                        estimate,
                        abs(estimate - value),
                        3.0 * error + EXACT,
                    )

    def sphere_product(self):
        samples = self.options["samples"]
        for dim in (2, 3):
            points = _sphere_samples(dim, samples, self.rng)
            for k in range(self.options["pairs"]):
                A = self.rng.standard_normal((dim, dim))
                B = self.rng.standard_normal((dim, dim))
                closed = float(quadratic_sphere_product(A, B, dim))
                contracted = moment_contraction(A, B, dim)
                scale = max(1.0, abs(closed))
                self.add(
                    f"sphere_product[d={dim},{k}]",
                    closed,
                    abs(closed - contracted) / scale,
                    EXACT,
                )
                values = np.einsum("pi,ij,pj->p", points, A, points) * np.einsum(
                    "pi,ij,pj->p", points, B, points
                )
                error = np.std(values) / math.sqrt(len(values))
                estimate = float(np.mean(values))
                self.add(
                    f"sphere_product_qmc[d={dim},{k}]",
                    estimate,
                    abs(estimate - closed),
                    3.0 * error + EXACT,
                )

    def energy_forms(self):
        alpha = self.params["material"]["alpha"]
        beta = self.params["material"]["beta"]
        for dim in (2, 3):
            tensors = tensors_from_peridynamic(alpha, beta, dim)
            inverse = tensors_from_lame(tensors.mu, tensors.lam, dim)
            defect = max(
                np.max(np.abs(tensors.C - inverse.C)),
                abs(inverse.alpha - alpha),
                abs(inverse.beta - beta),
            )
            self.add(f"lame_maps[d={dim}]", tensors.mu, defect, EXACT * 10)
            mesh = Mesh.structured(Domain.unit(dim, 1.0), 0.25 if dim == 3 else 0.125)
            worst_energy = 0.0
            worst_dissipation = 0.0
            for _ in range(self.options["random_fields"]):
                field = FemField(mesh, self.rng.standard_normal((mesh.n_nodes, dim)))
                energies = [local_energy(tensors, field, f) for f in ("tensor", "lame", "sphere")]
                rates = [local_dissipation(tensors, field, f) for f in ("tensor", "lame", "sphere")]
                worst_energy = max(worst_energy, np.ptp(energies) / max(energies))
                worst_dissipation = max(worst_dissipation, np.ptp(rates) / max(rates))
            self.add(f"energy_forms[d={dim}]", energies[0], worst_energy, FORMS)
            self.add(f"dissipation_forms[d={dim}]", rates[0], worst_dissipation, FORMS)
            gradient = self.rng.standard_normal((dim, dim))
            density = float(dissipation_density(tensors, gradient))
            sphere = 0.5 * dim * float(quadratic_sphere_product(gradient, gradient, dim))
            self.add(
                f"viscous_potential[d={dim}]",
                density,
                abs(density - sphere) / max(density, 1.0),
                FORMS,
            )

    def kernel_contract(self):
        kernel_block = self.params["kernel"]
        horizon = kernel_block["horizon"]
        configured = kernel_block["profile"]
        profiles = list(SHIPPED_PROFILES)
        if configured not in profiles:
            profiles.append(configured)
        for name in profiles:
            parameter = kernel_block["exponent"] if name == configured else None
            kernel = make_kernel(name, self.dim, horizon, parameter, strict=False)
            report = validate_assumptions(kernel)
            self.add(
                f"kernel[{name}].monotone",
                report.monotonicity_defect,
                report.monotonicity_defect,
                1e-12,
                report.monotone,
            )
            self.add(
                f"kernel[{name}].mass", kernel.mass(), report.mass_error, 1e-8, report.mass_ok
            )
            self.add(
                f"kernel[{name}].localized",
                report.tail_mass,
                report.tail_mass,
                KelvinVoigtConstants.MASS_TOLERANCE,
                report.localized,
            )
            # tail beyond a fixed radius has to vanish as the horizon shrinks
            shrinking = KernelSequence.from_horizons(
                name, self.dim, [horizon, horizon / 2, horizon / 4], parameter, strict=False
            )
            tails = shrinking.tail_masses(horizon / 2)
            self.add(
                f"kernel[{name}].tail_decay",
                tails[0],
                tails[-1],
                KelvinVoigtConstants.MASS_TOLERANCE,
                bool(np.all(np.diff(tails) <= 0.0))
                and tails[-1] < KelvinVoigtConstants.MASS_TOLERANCE,
            )
        try:
            make_kernel(PROFILES["power"], self.dim, horizon, strict=True)
            rejected = False
        except KernelAssumptionError:
            rejected = True
        self.add("kernel.planted_violator_rejected", float(rejected), 0.0, 0.0, rejected)

    def _random_field(self, grid):
        values = self.rng.standard_normal((grid.n_nodes, grid.dim))
        values[~grid.interior_mask] = 0.0
        return DisplacementField(grid, values)

    def operator_structure(self):
        block = self.params["domain"]
        kernel_block = self.params["kernel"]
        domain = Domain.from_params(block)
        params = MaterialParams(**self.params["material"])
        quadrature = kernel_block["quadrature"]
        spacing = float(np.min(domain.lengths)) / self.options["grid_cells"]
        grid = build_grid(domain, spacing)
        kernel = make_kernel(
            kernel_block["profile"],
            self.dim,
            kernel_block["horizon"],
            kernel_block["exponent"],
            strict=False,
        )
        center = grid.center_node
        raw = discrete_mass(kernel, grid, center)
        self.add("discrete_mass.midpoint", raw, abs(raw - self.dim) / self.dim, LATTICE_MASS)
        _, weights = stencil_weights(kernel, grid.spacing, quadrature)
        if quadrature != "midpoint":
            self.add(
                f"discrete_mass.{quadrature}",
                float(np.sum(weights)),
                abs(float(np.sum(weights)) - self.dim),
                FORMS * self.dim,
            )
        pair = assemble(kernel, grid, params, quadrature, threads=self.params["threads"])
        free = [self._random_field(grid) for _ in range(self.options["probes"])]
        vectors = [pair.restrict(u.values) for u in free]
        for label, matrix in (("M", pair.M), ("K", pair.K)):
            worst = 0.0
            for x, y in zip(vectors[:10], vectors[10:20]):
                scale = np.linalg.norm(matrix @ x) * np.linalg.norm(y)
                worst = max(worst, abs(x @ (matrix @ y) - y @ (matrix @ x)) / scale)
            self.add(f"symmetry.{label}", worst, worst, SYMMETRY)
            smallest = KelvinVoigtFunctions.smallest_eigenvalue(matrix)
            self.add(f"positive.{label}", smallest, -smallest, 0.0, smallest > 0)
        korn = poincare_korn_constant(pair)
        self.add("poincare_korn", korn, 0.0, 0.0, korn > 0)
        worst_energy = 0.0
        worst_dissipation = 0.0
        for u, x in zip(free[:20], vectors[:20]):
            expected = 2.0 * energy(kernel, grid, params, u, quadrature)
            worst_energy = max(
                worst_energy, KelvinVoigtFunctions.relative_defect(x @ (pair.K @ x), expected)
            )
            expected = 2.0 * dissipation(kernel, grid, u, quadrature)
            worst_dissipation = max(
                worst_dissipation,
                KelvinVoigtFunctions.relative_defect(x @ (pair.M @ x), expected),
            )
        self.add("quadratic_form.K", worst_energy, worst_energy, FORMS)
        self.add("quadratic_form.M", worst_dissipation, worst_dissipation, FORMS)

        constant = corollary_bound_constant(kernel, grid, params, quadrature)
        ratio = 0.0
        for x, y in zip(vectors, vectors[1:] + vectors[:1]):
            bound = constant * math.sqrt((x @ (pair.M @ x)) * (y @ (pair.M @ y)))
            ratio = max(ratio, abs(x @ (pair.K @ y)) / bound)
        self.add("bilinear_bound", constant, ratio, 1.0)

        free_pair = assemble(kernel, grid, params, quadrature, matrix_free=True)
        worst = 0.0
        for x in vectors[:5]:
            for explicit, implicit in ((pair.M, free_pair.M), (pair.K, free_pair.K)):
                reference = explicit @ x
                worst = max(
                    worst,
                    np.linalg.norm(implicit @ x - reference) / np.linalg.norm(reference),
                )
        self.add("matrix_free", worst, worst, FORMS)

        v = vectors[0]
        xi = pair.M @ v
        rate = pair.dissipation(v)
        conjugate = dual_dissipation(pair, xi)
        fenchel = abs(rate + conjugate - float(xi @ v)) / float(xi @ v)
        self.add("fenchel_young", conjugate, fenchel, FENCHEL)

        bonds = bond_operator(kernel, grid, quadrature)
        rigid = self._rigid(grid)
        strains = bonds.strains(rigid.flat)
        self.add(
            "rigid_motion_strain",
            float(np.max(np.abs(strains))),
            float(np.max(np.abs(strains))) / max(1.0, np.max(np.abs(rigid.values))),
            1e-12,
        )
        gradient = self.rng.standard_normal((self.dim, self.dim))
        affine = DisplacementField(grid, grid.nodes @ gradient.T, constrained=False)
        divergence = bonds.divergences(affine.flat)
        complete = np.isclose(bonds.mass, np.sum(weights), rtol=0.0, atol=1e-12)
        expected = np.trace(gradient) * bonds.mass / self.dim
        patch = float(np.max(np.abs(divergence - expected)[complete]))
        self.add("patch_test", patch, patch / np.max(np.abs(gradient)), 1e-11)

    def _rigid(self, grid):
        skew = self.rng.standard_normal((self.dim, self.dim))
        skew = skew - skew.T
        shift = self.rng.standard_normal(self.dim)
        return DisplacementField(grid, shift + grid.nodes @ skew.T, constrained=False)

    def scalar_flow(self):
        """M = K = 1, u0 = 1: E(t) = exp(-2t) / 2 and both integrals (1 - exp(-2t)) / 4."""
        pair = OperatorPair.from_matrices([[1.0]], [[1.0]])
        time_grid = TimeGrid(t_final=1.0, dt=1e-3)
        trajectory = run(pair, np.ones(1), time_grid, solver="direct")
        t = trajectory.times[-1]
        closed = 0.5 * math.exp(-2.0 * t)
        integral = 0.25 * (1.0 - math.exp(-2.0 * t))
        tolerance = 10.0 * time_grid.dt
        measured = trajectory.energies[-1]
        self.add(
            "scalar_flow.energy",
            measured,
            KelvinVoigtFunctions.relative_defect(measured, closed),
            tolerance,
        )
        for label, series in (
            ("dissipation", trajectory.dissipation_integral),
            ("dual", trajectory.dual_integral),
        ):
            self.add(
                f"scalar_flow.{label}",
                series[-1],
                KelvinVoigtFunctions.relative_defect(series[-1], integral),
                tolerance,
            )

    def write(self):
        KelvinVoigtFunctions.write_csv(
            self.module.path("checks.csv"),
            Check._fields,
            [list(check) for check in self.checks],
        )

    def report(self):
        self.write()
        failures = [check.name for check in self.checks if not check.passed]
        results = dict(
            checks=len(self.checks),
            failures=failures,
            csv=self.module.path("checks.csv"),
        )
        if failures:
            self.module.fail_json(
                msg=f"{len(failures)} of {len(self.checks)} checks failed: {', '.join(failures)}",
                **results,
            )
        self.module.exit_json(msg=f"all {len(self.checks)} checks passed", **results)


def argument_spec():
    spec = KelvinVoigtOptions.argument_spec()
    spec.update(
        verify=dict(
            type="dict",
            apply_defaults=True,
            options=dict(
                samples=dict(type="int", default=2**20),
                pairs=dict(type="int", default=20),
                random_fields=dict(type="int", default=20),
                grid_cells=dict(type="int", default=32),
                probes=dict(type="int", default=100),
            ),
        ),
    )
    return spec


def main(params, source="<config>", lines=None):
    module = KelvinVoigtModule(argument_spec(), params, source, lines)
    for key in ("samples", "pairs", "random_fields", "grid_cells"):
        if module.params["verify"][key] < 1:
            module.fail_json(
                msg=module.anchor(("verify", key), "must be >= 1"),
                code=KelvinVoigtConstants.EXIT_CONFIG,
            )
    if module.params["verify"]["probes"] < 20:
        module.fail_json(
            msg=module.anchor(("verify", "probes"), "must be >= 20"),
            code=KelvinVoigtConstants.EXIT_CONFIG,
        )
    Verify(module)
