# -*- coding: utf-8 -*-
# Copyright: (c) 2026, peridynamic-kv contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

"""Theta-scheme integration of the gradient flow M u' + K u = 0 and its EDE bookkeeping."""

from __future__ import absolute_import, division, print_function

__metaclass__ = type

import logging
import time
from collections import namedtuple
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
from ansible.module_utils.common.text.converters import to_native

from peridynamic_kv.module_utils.common import (
    ConfigurationError,
    InvariantError,
    KelvinVoigtConstants,
    KelvinVoigtFunctions,
    SolverError,
)
from peridynamic_kv.module_utils.nonlocal_model import DisplacementField, dual_dissipation

log = logging.getLogger(__name__)

SCHEMES = ("implicit-euler", "theta")

EdeCheck = namedtuple("EdeCheck", ["residual", "identity_defect"])


@dataclass(frozen=True)
class TimeGrid:
    t_final: float
    dt: float
    scheme: str = "implicit-euler"
    theta: float = 1.0
    sample_every: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "implicit-euler":
            object.__setattr__(self, "theta", 1.0)
        if not 0.5 <= self.theta <= 1.0:
            raise ConfigurationError(f"theta must lie in [1/2, 1], got {self.theta}")
        if not self.t_final > 0:
            raise ConfigurationError(f"t_final must be > 0, got {self.t_final}")
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be > 0, got {self.dt}")
        ratio = self.t_final / self.dt
        steps = int(round(ratio))
        if steps < 1 or abs(ratio - steps) > KelvinVoigtConstants.STEP_TOLERANCE * max(1, steps):
            raise ConfigurationError(
                f"t_final / dt = {ratio} is not a positive integer"
            )
        if self.sample_every < 1:
            raise ConfigurationError("sample_every must be >= 1")

    @property
    def n_steps(self):
        return int(round(self.t_final / self.dt))

    def sampled(self, step):
        return step % self.sample_every == 0 or step == self.n_steps


@dataclass(eq=False)
class Trajectory:
    """Sampled states (rows) on the free dofs with the three EDE terms."""

    pair: object
    time_grid: TimeGrid
    steps: np.ndarray
    times: np.ndarray
    states: np.ndarray
    energies: np.ndarray
    dissipation_integral: np.ndarray
    dual_integral: np.ndarray
    ede_residual: np.ndarray
    identity_defect: np.ndarray
    fenchel_defect: np.ndarray
    solver_iterations: int = 0

    @property
    def initial_energy(self):
        return float(self.energies[0])

    def relative_residual(self, index=-1):
        scale = self.initial_energy
        residual = abs(float(self.ede_residual[index]))
        return residual / scale if scale > 0 else residual

    def field(self, index):
        """Nodal values (nodes, d) of a stored state, zero on the clamped nodes."""
        return self.pair.lift(self.states[index])

    def l2_norms(self):
        return np.array([self.pair.l2_norm(state) for state in self.states])

    def bounds_hold(self, slack=1e-9):
        """A priori bounds: energy and both EDE integrals stay below E(u0)."""
        limit = self.initial_energy * (1.0 + slack) + np.finfo(float).tiny
        return bool(
            np.max(self.energies) <= limit
            and self.dissipation_integral[-1] <= limit
            and self.dual_integral[-1] <= limit
        )

    def rows(self):
        norms = self.l2_norms()
        for k in range(len(self.times)):
            yield (
                self.times[k],
                self.energies[k],
                self.dissipation_integral[k],
                self.dual_integral[k],
                self.ede_residual[k],
                norms[k],
            )


class ThetaStepper:
    """Solves (M + theta dt K) u+ = (M - (1 - theta) dt K) u once per call."""

    def __init__(self, pair, dt, theta=1.0, solver="cg"):
        self.pair = pair
        self.dt = dt
        self.theta = theta
        self.solver = solver
        self.iterations = 0
        if pair.explicit:
            self.system = (pair.M + (theta * dt) * pair.K).tocsr()
            self.explicit_rhs = (pair.M - ((1.0 - theta) * dt) * pair.K).tocsr()
        else:
            M = scipy.sparse.linalg.aslinearoperator(pair.M)
            K = scipy.sparse.linalg.aslinearoperator(pair.K)
            self.system = M + (theta * dt) * K
            self.explicit_rhs = M - ((1.0 - theta) * dt) * K
        self._factor = None
        if solver == "direct":
            if not pair.explicit:
                raise ConfigurationError("the direct solver needs assembled matrices")
            try:
                self._factor = scipy.sparse.linalg.factorized(self.system.tocsc())
            except (ArithmeticError, RuntimeError, ValueError) as err:
                raise SolverError(f"sparse LU factorization failed: {to_native(err)}") from err
        elif solver != "cg":
            raise ConfigurationError(f"unknown solver {solver!r}")

    def advance(self, u):
        rhs = self.explicit_rhs @ u
        if self._factor is not None:
            try:
                return self._factor(rhs)
            except (ArithmeticError, RuntimeError, ValueError) as err:
                raise SolverError(f"sparse LU solve failed: {to_native(err)}") from err
        u_next, iterations = KelvinVoigtFunctions.cg_solve(self.system, rhs, x0=u)
        self.iterations += iterations
        return u_next


def step(pair, u, dt, scheme="implicit-euler", theta=1.0, solver="cg"):
    theta = 1.0 if scheme == "implicit-euler" else theta
    return ThetaStepper(pair, dt, theta, solver).advance(np.asarray(u, dtype=float))


def _initial_vector(pair, u0):
    if isinstance(u0, DisplacementField):
        return pair.restrict(u0.values)
    values = getattr(u0, "values", u0)
    values = np.asarray(values, dtype=float).ravel()
    if values.size == pair.n_dofs:
        return values.copy()
    if values.size == pair.n_global:
        clamped = np.ones(pair.n_global, dtype=bool)
        clamped[pair.dof_map] = False
        if np.any(values[clamped] != 0.0):
            raise InvariantError("initial state is nonzero on clamped dofs")
        return values[pair.dof_map]
    raise ConfigurationError(
        f"initial state has {values.size} entries, expected {pair.n_dofs} or {pair.n_global}"
    )


def run(pair, u0, time_grid, solver="cg", observer: Optional[Callable] = None):
    """Integrate from u0 over time_grid; observer(k, t, state, row) sees every sample."""
    started = time.perf_counter()
    u = _initial_vector(pair, u0)
    if not np.all(np.isfinite(u)):
        raise InvariantError("initial state has non-finite entries")
    dt = time_grid.dt
    theta = time_grid.theta
    stepper = ThetaStepper(pair, dt, theta, solver)
    energy = pair.energy(u)
    initial = energy
    slack = KelvinVoigtConstants.ENERGY_SLACK * max(initial, np.finfo(float).tiny)
    dissipated = 0.0
    dual = 0.0
    record = _Recorder(observer)
    record.add(0, 0.0, u, (energy, 0.0, 0.0, 0.0, 0.0, 0.0))
    for k in range(1, time_grid.n_steps + 1):
        u_next = stepper.advance(u)
        if not np.all(np.isfinite(u_next)):
            raise InvariantError(f"non-finite state at step {k}")
        velocity = (u_next - u) / dt
        stage = theta * u_next + (1.0 - theta) * u
        force = -(pair.K @ stage)
        rate = pair.dissipation(velocity)
        dual_rate = dual_dissipation(pair, force, x0=velocity)
        energy_next = pair.energy(u_next)
        if energy_next > energy + slack:
            raise InvariantError(
                f"energy increased at step {k}: {energy!r} -> {energy_next!r}"
            )
        dissipated += dt * rate
        dual += dt * dual_rate
        fenchel = rate + dual_rate - float(force @ velocity)
        u, energy = u_next, energy_next
        if time_grid.sampled(k):
            record.add(
                k,
                k * dt,
                u,
                (
                    energy,
                    dissipated,
                    dual,
                    energy - initial + dissipated + dual,
                    abs(dual_rate - rate),
                    fenchel,
                ),
            )
    log.info(
        "ran %d steps of %s (theta=%g, dt=%g): E %.6e -> %.6e, %d solver iterations (%.2fs)",
        time_grid.n_steps,
        pair.model,
        theta,
        dt,
        initial,
        energy,
        stepper.iterations,
        time.perf_counter() - started,
    )
    return record.trajectory(pair, time_grid, stepper.iterations)


@dataclass
class _Recorder:
    observer: Optional[Callable] = None
    rows: list = field(default_factory=list)
    states: list = field(default_factory=list)

    def add(self, k, t, state, values):
        self.rows.append((k, t) + values)
        self.states.append(np.array(state, copy=True))
        if self.observer is not None:
            self.observer(k, t, state, values)

    def trajectory(self, pair, time_grid, iterations):
        table = np.array(self.rows, dtype=float)
        return Trajectory(
            pair=pair,
            time_grid=time_grid,
            steps=table[:, 0].astype(int),
            times=table[:, 1],
            states=np.array(self.states),
            energies=table[:, 2],
            dissipation_integral=table[:, 3],
            dual_integral=table[:, 4],
            ede_residual=table[:, 5],
            identity_defect=table[:, 6],
            fenchel_defect=table[:, 7],
            solver_iterations=iterations,
        )


def ede_residual(trajectory, pair, t_index):
    """E(u(t)) - E(u(0)) + int D(u') + int D*(-K u), recomputed from stored states."""
    if not -len(trajectory.times) <= t_index < len(trajectory.times):
        raise IndexError(f"t_index {t_index} outside trajectory")
    residual = (
        pair.energy(trajectory.states[t_index])
        - pair.energy(trajectory.states[0])
        + trajectory.dissipation_integral[t_index]
        + trajectory.dual_integral[t_index]
    )
    return EdeCheck(float(residual), float(trajectory.identity_defect[t_index]))


def flow_map_matrix(pair):
    """Matrix-free action v -> M^-1 K v."""
    size = pair.n_dofs

    def apply(v):
        solution, _ = KelvinVoigtFunctions.cg_solve(pair.M, pair.K @ np.ravel(v))
        return solution

    return scipy.sparse.linalg.LinearOperator((size, size), matvec=apply, dtype=float)


def _smallest_rate(pair):
    if not pair.explicit:
        values = scipy.sparse.linalg.eigs(
            flow_map_matrix(pair), k=1, which="SR", return_eigenvectors=False
        )
        return float(np.real(values[0]))
    if pair.n_dofs <= KelvinVoigtConstants.DENSE_EIGEN_LIMIT:
        values = scipy.linalg.eigh(
            pair.K.toarray(), pair.M.toarray(), eigvals_only=True, subset_by_index=[0, 0]
        )
        return float(values[0])
    values = scipy.sparse.linalg.eigsh(
        pair.K, k=1, M=pair.M, sigma=0.0, which="LM", return_eigenvectors=False
    )
    return float(values[0])


def decay_rate(pair):
    """Smallest eigenvalue of M^-1 K, the slowest exponential decay of the flow."""
    try:
        return _smallest_rate(pair)
    except (ArithmeticError, RuntimeError, ValueError) as err:
        raise SolverError(f"decay rate eigenproblem failed: {to_native(err)}") from err
