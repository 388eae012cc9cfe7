#!/usr/bin/python
# -*- coding: utf-8 -*-
# Copyright: (c) 2026, peridynamic-kv contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

from __future__ import absolute_import, division, print_function

__metaclass__ = type


DOCUMENTATION = r"""
---
module: simulate

short_description: Integrate one Kelvin-Voigt gradient flow

version_added: 0.1.0

description:
  - Assembles the nonlocal (peridynamic) or the local (P1 finite element) operator pair
    and integrates M u' + K u = 0 from the configured initial field.
  - Streams C(trajectory.csv) with the energy, both EDE integrals, the EDE residual and the
    L2 norm at every sampled instant, and writes C(field_<step>.csv) snapshots.
  - Exits 0 when the final relative EDE residual is below C(time.ede_tolerance) and the
    a priori bounds hold; exits 1 otherwise, keeping partial artifacts next to a
    C(FAILED) marker.

author: peridynamic-kv contributors

requirements:
  - numpy >= 1.26
  - scipy >= 1.12

options:
  model:
    description:
      - Which operator pair to integrate.
    type: str
    choices: [ nonlocal, local ]
    default: nonlocal
  time:
    description:
      - Time grid and solver.
      - C(t_final) must be a positive integer multiple of C(dt).
    type: dict
    suboptions:
      t_final:
        description: Final time T.
        type: float
        default: 0.5
      dt:
        description: Step size.
        type: float
        default: 0.001
      scheme:
        description: C(implicit-euler) or the C(theta) scheme (C(theta=0.5) is Crank-Nicolson).
        type: str
        choices: [ implicit-euler, theta ]
        default: implicit-euler
      theta:
        description: Implicitness in [0.5, 1], used with C(scheme=theta).
        type: float
        default: 0.5
      solver:
        description: Conjugate gradient or a sparse LU factorization reused across steps.
        type: str
        choices: [ cg, direct ]
        default: cg
      sample_every:
        description: Record every k-th step; the final step is always recorded.
        type: int
        default: 1
      ede_tolerance:
        description: Gate on the final relative EDE residual (strict).
        type: float
        default: 0.01
      snapshots:
        description: Number of field snapshots, spread evenly over the recorded steps.
        type: int
        default: 2
  initial_field:
    description:
      - Named analytic initial displacement; it must vanish on the boundary of Omega.
    type: dict
    suboptions:
      name:
        description: Field name.
        type: str
        choices: [ zero, product-of-sines, bubble, rigid, cutoff-identity, cutoff-rotation ]
        default: product-of-sines
      amplitude:
        description: Scale factor.
        type: float
        default: 1.0
  reference:
    description:
      - Finite element resolution for C(model=local).
    type: dict
    suboptions:
      refinement:
        description: Unused by simulate; accepted for configs shared with sweep.
        type: int
        default: 2
      mesh_spacing:
        description: Mesh size; defaults to C(kernel.horizon / kernel.ratio).
        type: float

extends_documentation_fragment:
  - peridynamic_kv.common
"""


EXAMPLES = r"""
- name: Nonlocal flow on the unit square
  mode: simulate
  kernel:
    horizon: 0.1
    ratio: 4
  time:
    t_final: 0.5
    dt: 0.001

- name: Local reference flow with Crank-Nicolson
  mode: simulate
  model: local
  time:
    scheme: theta
    theta: 0.5
    solver: direct
  reference:
    mesh_spacing: 0.0125
"""


RETURN = r"""
steps:
  description: Number of time steps taken.
  returned: success
  type: int
  sample: 500
energy:
  description: Initial and final energy.
  returned: success
  type: list
  elements: float
  sample: [2.51, 0.013]
ede_residual:
  description: Final relative EDE residual.
  returned: always
  type: float
  sample: 0.0021
solver_iterations:
  description: Total conjugate gradient iterations (0 for the direct solver).
  returned: success
  type: int
  sample: 4210
decay_rate:
  description:
    - Smallest eigenvalue of M^-1 K; the energy decays at least like exp(-2 rate t).
    - None for matrix-free operators or when the eigenproblem fails.
  returned: success
  type: float
  sample: 9.71
quadrature:
  description: Bond quadrature of the nonlocal operators, None for C(model=local).
  returned: success
  type: str
  sample: moment
discrete_mass:
  description:
    - Raw midpoint mass sum rho dx^d at the center node, whatever quadrature was selected.
    - None for C(model=local).
  returned: success
  type: float
  sample: 1.91
mass_defect:
  description: Distance of C(discrete_mass) from the dimension d.
  returned: success
  type: float
  sample: 0.09
files:
  description: Artifacts written to the output directory.
  returned: always
  type: list
  elements: str
  sample: [trajectory.csv, field_0.csv, field_500.csv]
"""

import csv
import logging

import numpy as np

from peridynamic_kv.module_utils.common import (
    KelvinVoigtError,
    KelvinVoigtFunctions,
    KelvinVoigtModule,
    KelvinVoigtOptions,
    SolverError,
)
from peridynamic_kv.module_utils.convergence_lab import make_field
from peridynamic_kv.module_utils.evolution import TimeGrid, decay_rate, run
from peridynamic_kv.module_utils.geometry import Domain, build_grid
from peridynamic_kv.module_utils.kernels import discrete_mass, make_kernel
from peridynamic_kv.module_utils.local_model import (
    FemField,
    Mesh,
    assemble_local,
    tensors_from_peridynamic,
)
from peridynamic_kv.module_utils.nonlocal_model import (
    DisplacementField,
    MaterialParams,
    assemble,
)

log = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = (
    "t",
    "energy",
    "dissipation_integral",
    "dual_integral",
    "ede_residual",
    "l2_norm",
)


def snapshot_steps(time_grid, count):
    """`count` recorded steps spread evenly from the first to the last."""
    recorded = [k for k in range(time_grid.n_steps + 1) if time_grid.sampled(k)]
    if count <= 0:
        return set()
    if count == 1:
        return {recorded[-1]}
    picks = np.unique(np.rint(np.linspace(0, len(recorded) - 1, count)).astype(int))
    return {recorded[i] for i in picks}


class Simulate:
    def __init__(self, module, pair_factory=None):
        self.module = module
        self.params = module.params
        self.files = []
        self.trajectory = None
        self.diagnostics = dict(
            quadrature=None, discrete_mass=None, mass_defect=None, decay_rate=None
        )
        try:
            self.time_grid = TimeGrid(
                t_final=self.params["time"]["t_final"],
                dt=self.params["time"]["dt"],
                scheme=self.params["time"]["scheme"],
                theta=self.params["time"]["theta"],
                sample_every=self.params["time"]["sample_every"],
            )
            if pair_factory is not None:
                self.pair, self.initial = pair_factory(self.params)
            elif self.params["model"] == "local":
                self.pair, self.initial = self.local_pair()
            else:
                self.pair, self.initial = self.nonlocal_pair()
            self.diagnostics["decay_rate"] = self.slowest_decay()
            self.integrate()
        except KelvinVoigtError as err:
            module.error_json(err)
        self.report()

    def _analytic(self, domain):
        block = self.params["initial_field"]
        field = make_field(block["name"], domain, block["amplitude"])
        field.check_trace()
        return field

    def nonlocal_pair(self):
        kernel_block = self.params["kernel"]
        domain = Domain.from_params(self.params["domain"])
        kernel = make_kernel(
            kernel_block["profile"],
            domain.dim,
            kernel_block["horizon"],
            kernel_block["exponent"],
        )
        grid = build_grid(domain, kernel.horizon / kernel_block["ratio"])
        mass = discrete_mass(kernel, grid, grid.center_node)
        self.diagnostics.update(
            quadrature=kernel_block["quadrature"],
            discrete_mass=mass,
            mass_defect=abs(mass - domain.dim),
        )
        pair = assemble(
            kernel,
            grid,
            MaterialParams(**self.params["material"]),
            kernel_block["quadrature"],
            kernel_block["matrix_free"],
            self.params["threads"],
        )
        return pair, DisplacementField.from_function(grid, self._analytic(domain))

    def slowest_decay(self):
        if not self.pair.explicit:
            return None
        try:
            rate = decay_rate(self.pair)
        except SolverError as err:
            log.warning("no decay rate: %s", err)
            return None
        log.info("slowest decay rate %.6e", rate)
        return rate

    def local_pair(self):
        kernel_block = self.params["kernel"]
        domain = Domain.from_params(self.params["domain"])
        spacing = self.params["reference"]["mesh_spacing"]
        if spacing is None:
            spacing = kernel_block["horizon"] / kernel_block["ratio"]
        mesh = Mesh.structured(domain, spacing)
        material = self.params["material"]
        tensors = tensors_from_peridynamic(material["alpha"], material["beta"], domain.dim)
        system = assemble_local(tensors, mesh, self.params["threads"])
        return system.pair(), FemField.interpolate(mesh, self._analytic(domain))

    def _snapshot(self, step, state):
        name = f"field_{step}.csv"
        values = self.pair.lift(state)
        space = self.pair.space
        if space is None:
            header = ["node", "u"]
            rows = [[i, v] for i, v in enumerate(np.ravel(values))]
        else:
            dim = self.pair.dim
            header = ["node"] + [f"x{i}" for i in range(dim)] + [f"u{i}" for i in range(dim)]
            rows = [
                [i] + list(x) + list(u) for i, (x, u) in enumerate(zip(space.points, values))
            ]
        KelvinVoigtFunctions.write_csv(self.module.path(name), header, rows)
        self.files.append(name)

    def integrate(self):
        snapshots = snapshot_steps(self.time_grid, self.params["time"]["snapshots"])
        self.files.append("trajectory.csv")
        with open(self.module.path("trajectory.csv"), "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRAJECTORY_COLUMNS)

            def _observe(step, t, state, values):
                energy, dissipated, dual, residual = values[:4]
                row = (t, energy, dissipated, dual, residual, self.pair.l2_norm(state))
                writer.writerow([KelvinVoigtFunctions.format_value(v) for v in row])
                fh.flush()
                if step in snapshots:
                    self._snapshot(step, state)

            self.trajectory = run(
                self.pair,
                self.initial,
                self.time_grid,
                self.params["time"]["solver"],
                observer=_observe,
            )

    def report(self):
        trajectory = self.trajectory
        residual = trajectory.relative_residual()
        tolerance = self.params["time"]["ede_tolerance"]
        results = dict(
            steps=self.time_grid.n_steps,
            energy=[trajectory.initial_energy, float(trajectory.energies[-1])],
            ede_residual=residual,
            solver_iterations=trajectory.solver_iterations,
            files=self.files,
            **self.diagnostics,
        )
        if not trajectory.bounds_hold():
            self.module.fail_json(msg="a priori energy bounds violated", **results)
        if not residual < tolerance:
            self.module.fail_json(
                msg=f"relative EDE residual {residual:.3e} is not below {tolerance:.3e}",
                **results,
            )
        self.module.exit_json(
            msg=f"{self.pair.model} flow: {self.time_grid.n_steps} steps, "
            f"relative EDE residual {residual:.3e}",
            **results,
        )


def argument_spec():
    spec = KelvinVoigtOptions.argument_spec()
    spec.update(KelvinVoigtOptions.evolution_spec())
    spec.update(
        model=dict(type="str", choices=["nonlocal", "local"], default="nonlocal"),
    )
    return spec


def main(params, source="<config>", lines=None, pair_factory=None):
    module = KelvinVoigtModule(argument_spec(), params, source, lines)
    Simulate(module, pair_factory)
