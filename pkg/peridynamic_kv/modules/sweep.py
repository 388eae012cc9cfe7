#!/usr/bin/python
# -*- coding: utf-8 -*-
# Copyright: (c) 2026, peridynamic-kv contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

from __future__ import absolute_import, division, print_function

__metaclass__ = type


DOCUMENTATION = r"""
---
module: sweep

short_description: Horizon sweep of the nonlocal flow against a local reference

version_added: 0.1.0

description:
  - Runs the nonlocal model for a strictly decreasing list of horizons at a fixed
    horizon to spacing ratio and compares every level with a P1 finite element
    reference on a finer mesh.
  - Writes C(report.csv) with one row per level and C(level_<k>_trajectory.csv) with the
    sampled energy curves and L2 errors of level k.
  - The C(discrete_mass), C(mass_defect) and C(seminorm_ratio) columns of C(report.csv) are
    informational and never gated. The first two show the raw midpoint mass at the center
    node, so the reweighting done by C(kernel.quadrature) stays visible.
  - Exits 0 only if every monitored column decreases strictly across the levels.
  - With C(time.t_final=0) nothing is integrated and the gate applies to the initial
    data and operator columns only.

author: peridynamic-kv contributors

requirements:
  - numpy >= 1.26
  - scipy >= 1.12

options:
  time:
    description:
      - Time grid shared by every level and the reference; see the simulate command.
    type: dict
  initial_field:
    description:
      - Analytic initial displacement vanishing on the boundary of Omega.
    type: dict
  consistency_field:
    description:
      - Second field v of the bilinear form checks; defaults to the initial field.
    type: dict
    suboptions:
      name:
        description: Field name.
        type: str
        choices: [ zero, product-of-sines, bubble, rigid, cutoff-identity, cutoff-rotation ]
      amplitude:
        description: Scale factor.
        type: float
        default: 1.0
  reference:
    description:
      - Resolution of the finite element reference.
    type: dict
    suboptions:
      refinement:
        description: Mesh spacing is the finest grid spacing divided by this factor.
        type: int
        default: 2
      mesh_spacing:
        description: Explicit mesh spacing, at most half the finest grid spacing.
        type: float

extends_documentation_fragment:
  - peridynamic_kv.common
"""


EXAMPLES = r"""
- name: Default three-level sweep on the unit square
  mode: sweep
  kernel:
    horizons: [0.2, 0.1, 0.05]
    ratio: 4
  time:
    t_final: 0.5
    dt: 0.001
    sample_every: 10

- name: Initial data and operator consistency only
  mode: sweep
  time:
    t_final: 0
"""


RETURN = r"""
levels:
  description: Number of horizon levels.
  returned: success
  type: int
  sample: 3
failing_columns:
  description: Monitored columns that did not decrease strictly.
  returned: always
  type: list
  elements: str
  sample: []
columns:
  description: Columns of report.csv.
  returned: always
  type: list
  elements: str
initial_data:
  description: How the well-prepared initial data were built.
  returned: always
  type: str
  sample: grid restriction of product-of-sines
"""

import logging

from peridynamic_kv.module_utils.common import (
    ConfigurationError,
    KelvinVoigtError,
    KelvinVoigtFunctions,
    KelvinVoigtModule,
    KelvinVoigtOptions,
)
from peridynamic_kv.module_utils.convergence_lab import SweepPlan, make_field, run_sweep
from peridynamic_kv.module_utils.evolution import TimeGrid
from peridynamic_kv.module_utils.geometry import Domain
from peridynamic_kv.module_utils.kernels import KernelSequence
from peridynamic_kv.module_utils.nonlocal_model import MaterialParams

log = logging.getLogger(__name__)

MIN_LEVELS = 3
CURVE_COLUMNS = (
    "t",
    "energy",
    "reference_energy",
    "l2_error",
    "dissipation_integral",
    "dual_integral",
    "ede_residual",
)


class Sweep:
    def __init__(self, module):
        self.module = module
        self.params = module.params
        try:
            self.plan = self.build_plan()
        except ConfigurationError as err:
            module.error_json(err)
        try:
            self.report = run_sweep(self.plan, self.params["threads"])
        except KelvinVoigtError as err:
            module.error_json(err)
        self.write()
        self.gate()

    def build_plan(self):
        kernel_block = self.params["kernel"]
        horizons = kernel_block["horizons"]
        if len(horizons) < MIN_LEVELS:
            raise ConfigurationError(
                self.module.anchor(
                    ("kernel", "horizons"),
                    f"a sweep needs at least {MIN_LEVELS} levels, got {len(horizons)}",
                )
            )
        if any(b >= a for a, b in zip(horizons, horizons[1:])):
            raise ConfigurationError(
                self.module.anchor(("kernel", "horizons"), "must strictly decrease")
            )
        domain = Domain.from_params(self.params["domain"])
        kernels = KernelSequence.from_horizons(
            kernel_block["profile"], domain.dim, horizons, kernel_block["exponent"]
        )
        time_block = self.params["time"]
        time_grid = None
        if time_block["t_final"] > 0:
            time_grid = TimeGrid(
                t_final=time_block["t_final"],
                dt=time_block["dt"],
                scheme=time_block["scheme"],
                theta=time_block["theta"],
                sample_every=time_block["sample_every"],
            )
        initial = self.params["initial_field"]
        second = self.params["consistency_field"]
        consistency = None
        if second is not None and second.get("name") is not None:
            consistency = make_field(second["name"], domain, second["amplitude"])
        return SweepPlan(
            domain=domain,
            kernels=kernels,
            params=MaterialParams(**self.params["material"]),
            initial_field=make_field(initial["name"], domain, initial["amplitude"]),
            time_grid=time_grid,
            ratio=kernel_block["ratio"],
            refinement=self.params["reference"]["refinement"],
            mesh_spacing=self.params["reference"]["mesh_spacing"],
            consistency_field=consistency,
            quadrature=kernel_block["quadrature"],
            solver=time_block["solver"],
            matrix_free=kernel_block["matrix_free"],
        )

    def write(self):
        columns, rows = self.report.table()
        KelvinVoigtFunctions.write_csv(self.module.path("report.csv"), columns, rows)
        for index, row in enumerate(self.report.rows):
            if row.curve is None:
                continue
            curve = row.curve
            KelvinVoigtFunctions.write_csv(
                self.module.path(f"level_{index}_trajectory.csv"),
                CURVE_COLUMNS,
                zip(*(curve[c] for c in CURVE_COLUMNS)),
            )

    def gate(self):
        failing = self.report.gate()
        results = dict(
            levels=len(self.report.rows),
            failing_columns=failing,
            columns=self.report.columns,
            initial_data=self.report.initial_data,
        )
        if failing:
            self.module.fail_json(
                msg=f"not strictly decreasing across levels: {', '.join(failing)}",
                **results,
            )
        self.module.exit_json(
            msg=f"all {len(self.report.monitored)} monitored columns decrease strictly",
            **results,
        )


def argument_spec():
    spec = KelvinVoigtOptions.argument_spec()
    spec.update(KelvinVoigtOptions.evolution_spec())
    spec.update(
        consistency_field=dict(
            type="dict",
            options=dict(
                name=dict(
                    type="str",
                    choices=[
                        "zero",
                        "product-of-sines",
                        "bubble",
                        "rigid",
                        "cutoff-identity",
                        "cutoff-rotation",
                    ],
                ),
                amplitude=dict(type="float", default=1.0),
            ),
        ),
    )
    return spec


def main(params, source="<config>", lines=None):
    module = KelvinVoigtModule(argument_spec(), params, source, lines)
    Sweep(module)
