# -*- coding: utf-8 -*-
# Copyright: (c) 2026, peridynamic-kv contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

"""Bond-based nonlocal strain, divergence, energy and dissipation on a grid.

Every bond b = (i, j) of the lattice stencil carries the quadrature weight
omega_b = rho(x_j - x_i) dx^d. With S the bond strain operator and A the
node-by-bond weight matrix:

    divergence   D = A S
    dissipation  M = S^T W S,  W = diag(omega dx^d)
    energy       K = beta dx^d D^T D + alpha T^T W T,  T = S - (1/d) P D

where P copies a node value onto the bonds leaving that node. T^T W T is
expanded as M - (2/d) dx^d D^T D + (dx^d / d^2) D^T diag(m) D with m_i the
clipped stencil mass of node i, so the quadrature seen by boundary cells is
kept as is.
"""

from __future__ import absolute_import, division, print_function

__metaclass__ = type

import functools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from peridynamic_kv.module_utils.common import (
    AssemblyError,
    ConfigurationError,
    InvariantError,
    KelvinVoigtFunctions,
)
from peridynamic_kv.module_utils.kernels import stencil_weights

log = logging.getLogger(__name__)


@dataclass(eq=False)
class DisplacementField:
    grid: object
    values: np.ndarray
    time_tag: Optional[float] = None
    constrained: bool = True

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(
            self.grid.n_nodes, self.grid.dim
        )
        if not np.all(np.isfinite(values)):
            raise InvariantError("displacement field has non-finite entries")
        if self.constrained:
            collar = values[~self.grid.interior_mask]
            leaked = int(np.count_nonzero(np.any(collar != 0.0, axis=1)))
            if leaked:
                raise InvariantError(
                    f"displacement field is nonzero on {leaked} collar nodes"
                )
        self.values = values

    @classmethod
    def from_function(cls, grid, function, time_tag=None, constrained=True):
        """Sample function at the nodes; constrained fields are cut to zero on the collar."""
        values = np.array(function(grid.nodes), dtype=float).reshape(
            grid.n_nodes, grid.dim
        )
        if constrained:
            values[~grid.interior_mask] = 0.0
        return cls(grid, values, time_tag, constrained)

    @classmethod
    def zeros(cls, grid, time_tag=None):
        return cls(grid, np.zeros((grid.n_nodes, grid.dim)), time_tag)

    @property
    def flat(self):
        return self.values.ravel()


@dataclass(frozen=True)
class MaterialParams:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ConfigurationError(
                f"alpha and beta must be > 0, got alpha={self.alpha}, beta={self.beta}"
            )

    def lame(self, dim):
        mu = 2.0 * self.alpha / (dim + 2)
        lam = self.beta - 2.0 * self.alpha / (dim * (dim + 2))
        return mu, lam


@dataclass(frozen=True, eq=False)
class OperatorPair:
    """Riesz form M of the dissipation and energy form K on the free dofs."""

    M: object
    K: object
    dof_map: np.ndarray
    n_global: int
    model: str = "synthetic"
    space: object = None
    dim: int = 1
    expansion_defect: float = 0.0

    @classmethod
    def from_matrices(cls, M, K, model="synthetic"):
        M = scipy.sparse.csr_matrix(np.atleast_2d(np.asarray(M, dtype=float)))
        K = scipy.sparse.csr_matrix(np.atleast_2d(np.asarray(K, dtype=float)))
        if M.shape != K.shape or M.shape[0] != M.shape[1]:
            raise ConfigurationError(f"incompatible shapes {M.shape} and {K.shape}")
        size = M.shape[0]
        return cls(M, K, np.arange(size), size, model)

    @property
    def n_dofs(self):
        return len(self.dof_map)

    @property
    def explicit(self):
        return scipy.sparse.issparse(self.M) and scipy.sparse.issparse(self.K)

    def restrict(self, values):
        return np.asarray(values, dtype=float).ravel()[self.dof_map]

    def lift(self, x):
        full = np.zeros(self.n_global)
        full[self.dof_map] = x
        if self.space is None:
            return full
        return full.reshape(-1, self.dim)

    def energy(self, x):
        return 0.5 * float(x @ (self.K @ x))

    def dissipation(self, v):
        return 0.5 * float(v @ (self.M @ v))

    def l2_norm(self, x):
        if self.space is None:
            return float(np.linalg.norm(x))
        return self.space.l2_norm(self.lift(x))


class BondOperator:
    """Sparse bond structure of one kernel on one grid, collar included."""

    def __init__(self, kernel, grid, quadrature="midpoint", threads=1):
        if kernel.dim != grid.dim:
            raise ConfigurationError(
                f"kernel dimension {kernel.dim} does not match grid dimension {grid.dim}"
            )
        started = time.perf_counter()
        self.kernel = kernel
        self.grid = grid
        self.quadrature = quadrature
        offsets, weights = stencil_weights(kernel, grid.spacing, quadrature)
        dim = grid.dim
        n_nodes = grid.n_nodes

        def _bonds(k):
            targets = grid.flat_index(grid.lattice + offsets[k])
            origins = np.flatnonzero(targets >= 0)
            return origins, targets[origins]

        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            parts = list(pool.map(_bonds, range(len(offsets))))
        self.origin = np.concatenate([p[0] for p in parts])
        self.target = np.concatenate([p[1] for p in parts])
        offset_id = np.repeat(np.arange(len(offsets)), [len(p[0]) for p in parts])
        xi = offsets[offset_id] * grid.spacing
        self.direction = xi / np.sum(xi**2, axis=1, keepdims=True)
        self.omega = weights[offset_id]
        self.bond_weight = self.omega * grid.cell_volume
        n_bonds = len(self.origin)

        rows = np.repeat(np.arange(n_bonds), 2 * dim)
        components = np.tile(np.arange(dim), (n_bonds, 1))
        cols = np.concatenate(
            [
                self.origin[:, None] * dim + components,
                self.target[:, None] * dim + components,
            ],
            axis=1,
        ).ravel()
        data = np.concatenate([-self.direction, self.direction], axis=1).ravel()
        self.strain = scipy.sparse.csr_matrix(
            (data, (rows, cols)), shape=(n_bonds, n_nodes * dim)
        )
        self.average = scipy.sparse.csr_matrix(
            (self.omega, (self.origin, np.arange(n_bonds))), shape=(n_nodes, n_bonds)
        )
        self.divergence = (self.average @ self.strain).tocsr()
        self.mass = np.asarray(self.average.sum(axis=1)).ravel()
        log.debug(
            "bond operator: %d bonds over %d nodes in %.2fs",
            n_bonds,
            n_nodes,
            time.perf_counter() - started,
        )

    @property
    def n_bonds(self):
        return len(self.origin)

    def strains(self, u):
        return self.strain @ u

    def divergences(self, u):
        return self.divergence @ u

    def inner(self, u, v):
        return float(np.sum(self.bond_weight * self.strains(u) * self.strains(v)))

    def divergence_product(self, u, v):
        return float(
            np.sum(self.divergences(u) * self.divergences(v)) * self.grid.cell_volume
        )

    def deviatoric(self, u):
        return self.strains(u) - self.divergences(u)[self.origin] / self.grid.dim

    def energy_form(self, params, u, v):
        """Gateaux derivative dE(u)(v), evaluated bond by bond."""
        volumetric = params.beta * self.divergence_product(u, v)
        shear = params.alpha * float(
            np.sum(self.bond_weight * self.deviatoric(u) * self.deviatoric(v))
        )
        return volumetric + shear

    def energy_density(self, params, u):
        divergence = self.divergences(u)
        shear = np.bincount(
            self.origin,
            weights=self.omega * self.deviatoric(u) ** 2,
            minlength=self.grid.n_nodes,
        )
        return 0.5 * params.beta * divergence**2 + 0.5 * params.alpha * shear


@functools.lru_cache(maxsize=4)
def bond_operator(kernel, grid, quadrature="midpoint", threads=1):
    return BondOperator(kernel, grid, quadrature, threads)


def _flat(u):
    if isinstance(u, DisplacementField):
        return u.flat
    return np.asarray(u, dtype=float).ravel()


def nonlocal_strain(u, i, j):
    if i == j:
        raise ValueError("nonlocal strain is undefined on the diagonal (i == j)")
    nodes = u.grid.nodes
    xi = nodes[j] - nodes[i]
    return float((u.values[j] - u.values[i]) @ xi / (xi @ xi))


def nonlocal_divergence(kernel, grid, u, i, quadrature="midpoint"):
    offsets, weights = stencil_weights(kernel, grid.spacing, quadrature)
    targets = grid.flat_index(grid.lattice[i] + offsets)
    keep = targets >= 0
    xi = offsets[keep] * grid.spacing
    values = u.values if isinstance(u, DisplacementField) else np.reshape(u, (-1, grid.dim))
    jumps = values[targets[keep]] - values[i]
    strains = np.sum(jumps * xi, axis=1) / np.sum(xi**2, axis=1)
    return float(np.sum(weights[keep] * strains))


def divergence_field(kernel, grid, u, quadrature="midpoint", threads=1):
    return bond_operator(kernel, grid, quadrature, threads).divergences(_flat(u))


def seminorm_sq(kernel, grid, u, quadrature="midpoint"):
    flat = _flat(u)
    return bond_operator(kernel, grid, quadrature).inner(flat, flat)


def inner_product(kernel, grid, u, v, quadrature="midpoint"):
    return bond_operator(kernel, grid, quadrature).inner(_flat(u), _flat(v))


def energy_density(kernel, grid, params, u, quadrature="midpoint"):
    return bond_operator(kernel, grid, quadrature).energy_density(params, _flat(u))


def energy(kernel, grid, params, u, quadrature="midpoint"):
    density = energy_density(kernel, grid, params, u, quadrature)
    return float(np.sum(density) * grid.cell_volume)


def energy_form(kernel, grid, params, u, v, quadrature="midpoint"):
    return bond_operator(kernel, grid, quadrature).energy_form(
        params, _flat(u), _flat(v)
    )


def dissipation(kernel, grid, v, quadrature="midpoint"):
    return 0.5 * seminorm_sq(kernel, grid, v, quadrature)


def free_dofs(grid):
    nodes = np.flatnonzero(grid.interior_mask)
    return (nodes[:, None] * grid.dim + np.arange(grid.dim)).ravel()


def _guard_collar(grid, dof_map, *matrices):
    nodes = dof_map // grid.dim
    leaked = np.count_nonzero(~grid.interior_mask[nodes])
    if leaked:
        raise AssemblyError(f"{leaked} collar dofs leaked into the operator rows")
    for matrix in matrices:
        if matrix.shape != (len(dof_map), len(dof_map)):
            raise AssemblyError(
                f"operator shape {matrix.shape} does not match {len(dof_map)} free dofs"
            )
        if scipy.sparse.issparse(matrix) and not np.all(np.isfinite(matrix.data)):
            raise AssemblyError("operator has non-finite entries")


def _symmetrized(matrix):
    return ((matrix + matrix.T) * 0.5).tocsr()


def _matrix_free(bonds, params, dof_map):
    dim = bonds.grid.dim
    volume = bonds.grid.cell_volume
    strain = bonds.strain[:, dof_map].tocsr()
    divergence = bonds.divergence[:, dof_map].tocsr()
    strain_t = strain.T.tocsr()
    divergence_t = divergence.T.tocsr()
    size = len(dof_map)

    def apply_m(x):
        return strain_t @ (bonds.bond_weight * (strain @ np.ravel(x)))

    def apply_k(x):
        x = np.ravel(x)
        div = divergence @ x
        grad_div = divergence_t @ div
        shear = (
            apply_m(x)
            - (2.0 / dim) * volume * grad_div
            + (volume / dim**2) * (divergence_t @ (bonds.mass * div))
        )
        return params.beta * volume * grad_div + params.alpha * shear

    shape = (size, size)
    M = scipy.sparse.linalg.LinearOperator(
        shape, matvec=apply_m, rmatvec=apply_m, dtype=float
    )
    K = scipy.sparse.linalg.LinearOperator(
        shape, matvec=apply_k, rmatvec=apply_k, dtype=float
    )
    return M, K


def assemble(kernel, grid, params, quadrature="midpoint", matrix_free=False, threads=1):
    """OperatorPair (M, K) of the nonlocal model on the interior dofs of grid."""
    grid.domain.check_horizon(kernel.horizon)
    started = time.perf_counter()
    bonds = bond_operator(kernel, grid, quadrature, threads)
    dim = grid.dim
    volume = grid.cell_volume
    dof_map = free_dofs(grid)
    strain = bonds.strain[:, dof_map].tocsr()
    divergence = bonds.divergence[:, dof_map].tocsr()
    gram = (divergence.T @ divergence).tocsr()
    M_explicit = _symmetrized(
        strain.T @ scipy.sparse.diags(bonds.bond_weight) @ strain
    )
    shear = (
        M_explicit
        - (2.0 / dim) * volume * gram
        + (volume / dim**2) * (divergence.T @ scipy.sparse.diags(bonds.mass) @ divergence)
    )
    K_explicit = _symmetrized(params.beta * volume * gram + params.alpha * shear)
    expanded = params.alpha * M_explicit + (params.beta - params.alpha / dim) * volume * gram
    scale = scipy.sparse.linalg.norm(K_explicit)
    defect = scipy.sparse.linalg.norm(K_explicit - expanded) / scale if scale > 0 else 0.0
    if matrix_free:
        M, K = _matrix_free(bonds, params, dof_map)
    else:
        M, K = M_explicit, K_explicit
    _guard_collar(grid, dof_map, M, K)
    log.info(
        "assembled nonlocal operators: %d dofs, h=%g, dx=%g, %s quadrature, "
        "expansion defect %.3e (%.2fs)",
        len(dof_map),
        kernel.horizon,
        grid.spacing,
        quadrature,
        defect,
        time.perf_counter() - started,
    )
    return OperatorPair(
        M=M,
        K=K,
        dof_map=dof_map,
        n_global=grid.n_nodes * dim,
        model="nonlocal",
        space=grid,
        dim=dim,
        expansion_defect=float(defect),
    )


def dual_dissipation(pair, xi, x0=None):
    """Legendre transform D*(xi) = xi^T M^-1 xi / 2."""
    xi = np.asarray(xi, dtype=float).ravel()
    if not np.any(xi):
        return 0.0
    solution, _ = KelvinVoigtFunctions.cg_solve(pair.M, xi, x0=x0)
    return 0.5 * float(xi @ solution)


def corollary_bound_constant(kernel, grid, params, quadrature="midpoint"):
    """C with |u^T K v| <= C |u|_n |v|_n, from the largest discrete stencil mass."""
    m_max = float(np.max(bond_operator(kernel, grid, quadrature).mass))
    return params.beta * m_max + params.alpha * (1.0 + m_max / grid.dim) ** 2


def poincare_korn_constant(pair):
    """Smallest eigenvalue of M against the lumped L2 mass of the grid."""
    if not pair.explicit:
        raise ConfigurationError("spectral checks need assembled matrices")
    return KelvinVoigtFunctions.smallest_eigenvalue(pair.M) / pair.space.cell_volume
