# -*- coding: utf-8 -*-
# Copyright: (c) 2026, peridynamic-kv contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

from __future__ import absolute_import, division, print_function

__metaclass__ = type


class ModuleDocFragment(object):
    DOCUMENTATION = r"""
options:
  mode:
    description:
      - Command the configuration is meant for.
      - Set from the command line when absent; a mismatch is a configuration error.
    type: str
    choices: [ verify, simulate, sweep ]
  domain:
    description:
      - The box Omega and the width of the clamped collar around it.
    type: dict
    suboptions:
      dim:
        description: Spatial dimension.
        type: int
        choices: [ 2, 3 ]
        default: 2
      lower:
        description: Lower corner; defaults to the origin.
        type: list
        elements: float
      upper:
        description: Upper corner; defaults to the unit box.
        type: list
        elements: float
      collar_width:
        description:
          - Width of Omega-tilde minus Omega on every side.
          - Defaults to the (largest) horizon and must not be smaller than it.
        type: float
  kernel:
    description:
      - Influence function and its discretization.
    type: dict
    suboptions:
      profile:
        description:
          - Radial profile w(s) on [0, 1].
          - C(power) is s^q, which violates the r^-2 monotonicity for q > 2 and is only
            accepted by the verify command.
        type: str
        choices: [ indicator, conic, polynomial, power ]
        default: indicator
      exponent:
        description: Exponent of the C(polynomial) (default 2) or C(power) (default 3) profile.
        type: float
      horizon:
        description: Horizon h of verify and simulate.
        type: float
        default: 0.1
      horizons:
        description: Strictly decreasing horizons of a sweep, at least three.
        type: list
        elements: float
        default: [0.2, 0.1, 0.05]
      ratio:
        description: Horizon to grid spacing ratio h / dx, fixed across sweep levels.
        type: float
        default: 4.0
      quadrature:
        description:
          - Lattice quadrature of the bond sums.
          - C(midpoint) uses rho dx^d, C(mass) rescales it to unit mass, C(moment) also
            makes the fourth lattice moments isotropic.
        type: str
        choices: [ midpoint, mass, moment ]
        default: moment
      matrix_free:
        description: Apply M and K through the bond operator instead of assembled matrices.
        type: bool
        default: false
  material:
    description:
      - Peridynamic moduli, both strictly positive.
    type: dict
    suboptions:
      alpha:
        description: Shear modulus alpha.
        type: float
        default: 2.0
      beta:
        description: Volumetric modulus beta.
        type: float
        default: 1.0
  output:
    description:
      - Output directory, created when missing.
      - Can also be set through C(PERIKV_OUTPUT); the command-line flag wins over both.
    type: path
    default: output
  seed:
    description:
      - Seed of the randomized suites; also read from C(PERIKV_SEED).
    type: int
    default: 0
  threads:
    description:
      - Worker threads for assembly and sweep levels; also read from C(PERIKV_THREADS).
    type: int
    default: 1
  verbosity:
    description:
      - Console log level, 0 for warnings, 1 for progress, 2 for debug output.
      - The C(-v) flag raises it.
    type: int
    default: 0
"""
