# -*- coding: utf-8 -*-
# Copyright: (c) 2026, peridynamic-kv contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

"""Radial influence functions with unit profile w on [0, 1], scaled to horizon h.

rho(xi) = c * w(|xi| / h), with c fixed by the mass condition
int rho = d, i.e. c = d / (|S^{d-1}| h^d int_0^1 w(s) s^{d-1} ds).
"""

from __future__ import absolute_import, division, print_function

__metaclass__ = type

import dataclasses
import functools
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.integrate
import scipy.special

from peridynamic_kv.module_utils.common import (
    ConfigurationError,
    KelvinVoigtConstants,
    KernelAssumptionError,
)
from peridynamic_kv.module_utils.geometry import lattice_stencil

log = logging.getLogger(__name__)

QUADRATURES = ("midpoint", "mass", "moment")

_SUPPORT_FUZZ = 1e-9


def _indicator(s, _parameter):
    return np.ones_like(s)


def _conic(s, _parameter):
    return 1.0 - s


def _polynomial(s, parameter):
    return (1.0 - s) ** parameter


def _power(s, parameter):
    return s**parameter


def _indicator_moment(dim, _parameter):
    return 1.0 / dim


def _conic_moment(dim, _parameter):
    return 1.0 / (dim * (dim + 1))


def _polynomial_moment(dim, parameter):
    return float(scipy.special.beta(dim, parameter + 1.0))


def _power_moment(dim, parameter):
    return 1.0 / (parameter + dim)


@dataclass(frozen=True)
class Profile:
    """Unit radial shape w(s, parameter) on [0, 1]; moment is int_0^1 w s^{d-1} ds if known."""

    name: str
    shape: Callable
    moment: Optional[Callable] = None
    default_parameter: Optional[float] = None
    parameter_floor: float = 0.0


PROFILES = {
    "indicator": Profile("indicator", _indicator, _indicator_moment),
    "conic": Profile("conic", _conic, _conic_moment),
    "polynomial": Profile("polynomial", _polynomial, _polynomial_moment, 2.0),
    # s**q: r^-2 rho is increasing for q > 2, kept to plant assumption failures
    "power": Profile("power", _power, _power_moment, 3.0, 1e-12),
}


def sphere_area(dim):
    return float(2.0 * np.pi ** (dim / 2.0) / scipy.special.gamma(dim / 2.0))


def radial_moment(profile, dim, parameter=None, method="closed"):
    if method == "closed" and profile.moment is not None:
        return float(profile.moment(dim, parameter))
    value, _ = scipy.integrate.quad(
        lambda s: float(profile.shape(np.float64(s), parameter)) * s ** (dim - 1),
        0.0,
        1.0,
        epsabs=0.0,
        epsrel=1e-12,
        limit=200,
    )
    return value


@dataclass(frozen=True)
class Kernel:
    profile: Profile
    dim: int
    horizon: float
    normalization: float
    parameter: Optional[float] = None

    def unit(self, s):
        s = np.asarray(s, dtype=float)
        inside = s <= 1.0 + _SUPPORT_FUZZ
        clipped = np.clip(s, 0.0, 1.0)
        return np.where(inside, self.profile.shape(clipped, self.parameter), 0.0)

    def radial(self, r):
        return self.normalization * self.unit(np.asarray(r, dtype=float) / self.horizon)

    def __call__(self, xi):
        return self.radial(np.linalg.norm(np.asarray(xi, dtype=float), axis=-1))

    def rescaled(self, factor):
        return dataclasses.replace(self, normalization=self.normalization * factor)

    def with_horizon(self, horizon):
        return make_kernel(self.profile, self.dim, horizon, self.parameter, strict=False)

    def _shell_integral(self, lower):
        if lower >= 1.0:
            return 0.0
        value, _ = scipy.integrate.quad(
            lambda s: float(self.unit(s)) * s ** (self.dim - 1),
            max(lower, 0.0),
            1.0,
            epsabs=0.0,
            epsrel=1e-12,
            limit=200,
        )
        scale = sphere_area(self.dim) * self.horizon**self.dim
        return self.normalization * scale * value

    def mass(self):
        """int rho over R^d by adaptive radial quadrature."""
        return self._shell_integral(0.0)

    def tail_mass(self, r0):
        """int over |xi| >= r0 of rho; exactly 0 once r0 >= h."""
        return self._shell_integral(r0 / self.horizon)


@dataclass(frozen=True)
class AssumptionReport:
    monotone: bool
    monotonicity_defect: float
    mass_ok: bool
    mass_error: float
    localized: bool
    tail_mass: float
    r0: float

    @property
    def passed(self):
        return self.monotone and self.mass_ok and self.localized


def validate_assumptions(kernel, r0=None):
    """Monotonicity, mass and the tail beyond r0 (the horizon unless given)."""
    samples = KelvinVoigtConstants.MONOTONICITY_SAMPLES
    radii = kernel.horizon * np.arange(1, samples + 1) / samples
    scaled = kernel.radial(radii) / radii**2
    scale = max(float(np.max(np.abs(scaled))), np.finfo(float).tiny)
    defect = max(0.0, float(np.max(np.diff(scaled)))) / scale
    mass_error = abs(kernel.mass() - kernel.dim)
    r0 = kernel.horizon if r0 is None else r0
    tail = kernel.tail_mass(r0)
    return AssumptionReport(
        monotone=defect <= 1e-12,
        monotonicity_defect=defect,
        mass_ok=mass_error < KelvinVoigtConstants.MASS_TOLERANCE,
        mass_error=mass_error,
        localized=tail < KelvinVoigtConstants.MASS_TOLERANCE,
        tail_mass=tail,
        r0=r0,
    )


def make_kernel(profile, dim, horizon, parameter=None, strict=True):
    if isinstance(profile, str):
        if profile not in PROFILES:
            raise ConfigurationError(
                f"unknown kernel profile {profile!r} (known: {', '.join(PROFILES)})"
            )
        profile = PROFILES[profile]
    if dim not in (2, 3):
        raise ConfigurationError(f"dim must be 2 or 3, got {dim}")
    if not horizon > 0:
        raise ConfigurationError(f"horizon must be > 0, got {horizon}")
    if parameter is None:
        parameter = profile.default_parameter
    if parameter is not None and parameter < profile.parameter_floor:
        raise ConfigurationError(
            f"{profile.name} exponent must be >= {profile.parameter_floor}, got {parameter}"
        )
    shape = profile.shape(np.linspace(0.0, 1.0, 101), parameter)
    if np.any(shape < 0) or not np.all(np.isfinite(shape)):
        raise ConfigurationError(f"{profile.name} profile must be finite and nonnegative")
    moment = radial_moment(profile, dim, parameter)
    if not moment > 0:
        raise ConfigurationError(f"{profile.name} profile has no mass")
    normalization = dim / (sphere_area(dim) * horizon**dim * moment)
    kernel = Kernel(profile, dim, float(horizon), normalization, parameter)
    if strict:
        report = validate_assumptions(kernel)
        if not report.monotone:
            raise KernelAssumptionError(
                f"{profile.name} profile violates r^-2 monotonicity "
                f"(defect {report.monotonicity_defect:.3e})"
            )
    return kernel


@dataclass(frozen=True)
class KernelSequence:
    kernels: Tuple[Kernel, ...]

    def __post_init__(self):
        object.__setattr__(self, "kernels", tuple(self.kernels))
        if not self.kernels:
            raise ConfigurationError("a kernel sequence needs at least one kernel")
        if len({k.dim for k in self.kernels}) != 1:
            raise ConfigurationError("kernels in a sequence must share the dimension")
        horizons = self.horizons
        if any(b >= a for a, b in zip(horizons, horizons[1:])):
            raise ConfigurationError(f"horizons must strictly decrease, got {horizons}")

    @classmethod
    def from_horizons(cls, profile, dim, horizons, parameter=None, strict=True):
        return cls(
            tuple(make_kernel(profile, dim, h, parameter, strict) for h in horizons)
        )

    @property
    def horizons(self):
        return [k.horizon for k in self.kernels]

    def tail_masses(self, r0):
        return [k.tail_mass(r0) for k in self.kernels]

    def __iter__(self):
        return iter(self.kernels)

    def __len__(self):
        return len(self.kernels)

    def __getitem__(self, item):
        return self.kernels[item]


def discrete_mass(kernel, grid, node):
    """Midpoint-rule mass sum rho(x' - x) dx^d over the in-grid neighbors of node."""
    stencil = lattice_stencil(grid.dim, grid.spacing, kernel.horizon)
    targets = grid.flat_index(grid.lattice[node] + stencil)
    offsets = stencil[targets >= 0] * grid.spacing
    return float(np.sum(kernel(offsets)) * grid.cell_volume)


def _fit_moments(offsets, weights, dim):
    # reweight by the cubic invariant q = sum e_i^4 so that the lattice fourth
    # moments become isotropic while the stencil mass is exactly d
    directions = offsets / np.linalg.norm(offsets, axis=1, keepdims=True)
    deviation = np.sum(directions**4, axis=1) - 3.0 / (dim + 2)
    s0 = np.sum(weights)
    s1 = np.sum(weights * deviation)
    s2 = np.sum(weights * deviation**2)
    determinant = s0 * s2 - s1 * s1
    if determinant <= 1e-12 * s0 * max(s2, np.finfo(float).tiny):
        return None
    a = dim * s2 / determinant
    b = -dim * s1 / determinant
    factors = a + b * deviation
    if np.any(factors <= 0):
        return None
    return weights * factors


@functools.lru_cache(maxsize=32)
def stencil_weights(kernel, spacing, quadrature="midpoint"):
    """Lattice offsets within the horizon and their quadrature weights (rho dx^d)."""
    if quadrature not in QUADRATURES:
        raise ConfigurationError(
            f"unknown quadrature {quadrature!r} (known: {', '.join(QUADRATURES)})"
        )
    offsets = lattice_stencil(kernel.dim, spacing, kernel.horizon)
    weights = kernel(offsets * spacing) * spacing**kernel.dim
    total = float(np.sum(weights))
    if quadrature != "midpoint" and total > 0:
        fitted = None
        if quadrature == "moment":
            fitted = _fit_moments(offsets.astype(float), weights, kernel.dim)
            if fitted is None:
                log.warning(
                    "stencil with h/dx = %.3g too small for moment fitting, "
                    "using mass correction",
                    kernel.horizon / spacing,
                )
        weights = fitted if fitted is not None else weights * (kernel.dim / total)
    log.debug(
        "stencil of %d offsets, raw mass %.6f, %s mass %.6f",
        len(offsets),
        total,
        quadrature,
        float(np.sum(weights)),
    )
    weights = np.ascontiguousarray(weights)
    weights.setflags(write=False)
    return offsets, weights
