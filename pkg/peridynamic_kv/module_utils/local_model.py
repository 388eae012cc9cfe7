# -*- coding: utf-8 -*-
# Copyright: (c) 2026, peridynamic-kv contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

"""Local Kelvin-Voigt limit: elasticity/viscosity tensors, sphere averages, P1 elements."""

from __future__ import absolute_import, division, print_function

__metaclass__ = type

import itertools
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse

from peridynamic_kv.module_utils.common import (
    AssemblyError,
    ConfigurationError,
    InvariantError,
)
from peridynamic_kv.module_utils.nonlocal_model import OperatorPair

log = logging.getLogger(__name__)

# degree-2 rules on the reference simplex, barycentric points and weights
_QUADRATURE = {
    2: (
        np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
        np.full(3, 1 / 3),
    ),
    3: (
        np.array(
            [
                [0.5854101966249685, 0.1381966011250105, 0.1381966011250105, 0.1381966011250105],
                [0.1381966011250105, 0.5854101966249685, 0.1381966011250105, 0.1381966011250105],
                [0.1381966011250105, 0.1381966011250105, 0.5854101966249685, 0.1381966011250105],
                [0.1381966011250105, 0.1381966011250105, 0.1381966011250105, 0.5854101966249685],
            ]
        ),
        np.full(4, 1 / 4),
    ),
}


def _identity_products(dim):
    delta = np.eye(dim)
    pairing = np.einsum("ik,jl->ijkl", delta, delta)
    trace = np.einsum("ij,kl->ijkl", delta, delta)
    return pairing, trace


def elasticity_tensor(mu, lam, dim):
    pairing, trace = _identity_products(dim)
    return mu * pairing + lam * trace


@dataclass(frozen=True, eq=False)
class ElasticTensors:
    dim: int
    C: np.ndarray
    D: np.ndarray
    mu: float
    lam: float
    alpha: float
    beta: float

    @cached_property
    def C_sym(self):
        return _minor_symmetrized(self.C)

    @cached_property
    def D_sym(self):
        return _minor_symmetrized(self.D)


def _minor_symmetrized(tensor):
    return 0.25 * (
        tensor
        + tensor.transpose(1, 0, 2, 3)
        + tensor.transpose(0, 1, 3, 2)
        + tensor.transpose(1, 0, 3, 2)
    )


def viscosity_tensor(dim):
    pairing, trace = _identity_products(dim)
    return 2.0 / (dim + 2) * pairing + 1.0 / (dim + 2) * trace


def tensors_from_peridynamic(alpha, beta, dim):
    if dim not in (2, 3):
        raise ConfigurationError(f"dim must be 2 or 3, got {dim}")
    if not (alpha > 0 and beta > 0):
        raise ConfigurationError(f"alpha and beta must be > 0, got {alpha}, {beta}")
    pairing, trace = _identity_products(dim)
    shear = 2.0 * alpha / (dim + 2)
    bulk = beta - 2.0 * alpha / (dim * (dim + 2))
    C = shear * pairing + bulk * trace
    return ElasticTensors(dim, C, viscosity_tensor(dim), shear, bulk, alpha, beta)


def tensors_from_lame(mu, lam, dim):
    """Second map of the moduli: (mu, lambda) back to (alpha, beta) and the tensors."""
    if not (mu > 0 and lam + 2.0 * mu / dim > 0):
        raise ConfigurationError(f"mu={mu}, lambda={lam} do not give a coercive energy")
    alpha = mu * (dim + 2) / 2.0
    beta = lam + 2.0 * alpha / (dim * (dim + 2))
    return ElasticTensors(
        dim, elasticity_tensor(mu, lam, dim), viscosity_tensor(dim), mu, lam, alpha, beta
    )


def sphere_moment(exponents, dim):
    """Average of prod s_i^{k_i} over the unit sphere for total degree up to 4."""
    exponents = [int(k) for k in exponents]
    if len(exponents) > dim or any(k < 0 for k in exponents):
        raise ValueError(f"unsupported exponent pattern {tuple(exponents)} in d={dim}")
    degree = sum(exponents)
    if degree not in (1, 2, 3, 4):
        raise ValueError(f"unsupported total degree {degree}")
    if any(k % 2 for k in exponents):
        return 0.0
    pattern = sorted(k for k in exponents if k)
    if pattern == [2]:
        return 1.0 / dim
    if pattern == [4]:
        return 3.0 / (dim * (dim + 2))
    if pattern == [2, 2]:
        return 1.0 / (dim * (dim + 2))
    raise ValueError(f"unsupported exponent pattern {tuple(exponents)}")


def _symmetric(matrix):
    return 0.5 * (matrix + np.swapaxes(matrix, -1, -2))


def quadratic_sphere_product(A, B, dim):
    """Sphere average of (s.As)(s.Bs), closed form."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    contraction = np.sum(_symmetric(A) * _symmetric(B), axis=(-2, -1))
    traces = np.trace(A, axis1=-2, axis2=-1) * np.trace(B, axis1=-2, axis2=-1)
    return 2.0 / (dim * (dim + 2)) * contraction + 1.0 / (dim * (dim + 2)) * traces


def moment_contraction(A, B, dim):
    """sum A_ij B_kl <s_i s_j s_k s_l>, term by term from sphere_moment."""
    total = 0.0
    for i, j, k, l in itertools.product(range(dim), repeat=4):
        counts = np.bincount([i, j, k, l], minlength=dim)
        total += A[i, j] * B[k, l] * sphere_moment(counts, dim)
    return total


def energy_density(tensors, gradient, form="tensor"):
    """Elastic energy density of displacement gradients (..., d, d)."""
    dim = tensors.dim
    strain = _symmetric(np.asarray(gradient, dtype=float))
    trace = np.trace(strain, axis1=-2, axis2=-1)
    if form == "tensor":
        return 0.5 * np.einsum("ijkl,...ij,...kl->...", tensors.C, strain, strain)
    if form == "lame":
        return 0.5 * tensors.mu * np.sum(strain**2, axis=(-2, -1)) + 0.5 * tensors.lam * trace**2
    if form == "sphere":
        deviation = quadratic_sphere_product(gradient, gradient, dim) - trace**2 / dim**2
        return 0.5 * tensors.beta * trace**2 + 0.5 * tensors.alpha * dim * deviation
    raise ValueError(f"unknown energy form {form!r}")


def dissipation_density(tensors, gradient, form="tensor"):
    dim = tensors.dim
    strain = _symmetric(np.asarray(gradient, dtype=float))
    trace = np.trace(strain, axis1=-2, axis2=-1)
    if form == "tensor":
        return 0.5 * np.einsum("ijkl,...ij,...kl->...", tensors.D, strain, strain)
    if form == "lame":
        return np.sum(strain**2, axis=(-2, -1)) / (dim + 2) + trace**2 / (2.0 * (dim + 2))
    if form == "sphere":
        return 0.5 * dim * quadratic_sphere_product(gradient, gradient, dim)
    raise ValueError(f"unknown dissipation form {form!r}")


@dataclass(frozen=True, eq=False)
class Mesh:
    """Simplicial mesh of Omega; boundary nodes are clamped."""

    points: np.ndarray
    cells: np.ndarray
    boundary_mask: np.ndarray
    spacing: Optional[float] = None

    def __post_init__(self):
        dim = self.points.shape[1]
        if self.cells.shape[1] != dim + 1:
            raise AssemblyError(f"cells must have {dim + 1} vertices in d={dim}")
        scale = self.spacing if self.spacing else 1.0
        tiny = 1e-12 * scale**dim
        degenerate = np.flatnonzero(self.volumes <= tiny)
        if len(degenerate):
            raise AssemblyError(
                f"{len(degenerate)} degenerate elements (first: {int(degenerate[0])})"
            )

    @classmethod
    def structured(cls, domain, spacing):
        """Two triangles per square (d=2) or six Kuhn tetrahedra per cube (d=3)."""
        dim = domain.dim
        lengths = domain.lengths
        counts = np.rint(lengths / spacing).astype(int)
        if np.any(counts < 1) or np.any(np.abs(counts * spacing - lengths) > 1e-9 * lengths):
            raise ConfigurationError(
                f"mesh spacing {spacing} does not divide the box edges {tuple(lengths)}"
            )
        shape = tuple(int(n) + 1 for n in counts)
        lattice = np.stack(
            [m.ravel() for m in np.meshgrid(*[np.arange(n) for n in shape], indexing="ij")],
            axis=1,
        )
        points = np.asarray(domain.lower) + lattice * spacing
        boundary = np.any((lattice == 0) | (lattice == counts), axis=1)
        corners = np.stack(
            [m.ravel() for m in np.meshgrid(*[np.arange(n) for n in counts], indexing="ij")],
            axis=1,
        )
        cells = []
        for order in itertools.permutations(range(dim)):
            path = [np.zeros(dim, dtype=int)]
            for axis in order:
                step = path[-1].copy()
                step[axis] += 1
                path.append(step)
            vertices = [
                np.ravel_multi_index(tuple((corners + offset).T), shape) for offset in path
            ]
            cells.append(np.stack(vertices, axis=1))
        cells = np.concatenate(cells, axis=0)
        return cls(points, cells, boundary, float(spacing))

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def n_nodes(self):
        return self.points.shape[0]

    @property
    def free_mask(self):
        return ~self.boundary_mask

    @cached_property
    def _jacobians(self):
        vertices = self.points[self.cells]
        return np.swapaxes(vertices[:, 1:] - vertices[:, :1], 1, 2)

    @cached_property
    def volumes(self):
        return np.abs(np.linalg.det(self._jacobians)) / math.factorial(self.dim)

    @cached_property
    def shape_gradients(self):
        """Gradients of the barycentric functions, shape (cells, d + 1, d)."""
        inverse = np.linalg.inv(self._jacobians)
        tail = inverse
        head = -np.sum(tail, axis=1, keepdims=True)
        return np.concatenate([head, tail], axis=1)

    @cached_property
    def mass_matrix(self):
        """Scalar P1 mass matrix."""
        dim = self.dim
        local = (np.ones((dim + 1, dim + 1)) + np.eye(dim + 1)) / ((dim + 1) * (dim + 2))
        data = self.volumes[:, None, None] * local
        rows = np.repeat(self.cells, dim + 1, axis=1)
        cols = np.tile(self.cells, (1, dim + 1))
        return scipy.sparse.csr_matrix(
            (data.ravel(), (rows.ravel(), cols.ravel())), shape=(self.n_nodes, self.n_nodes)
        )

    def l2_norm(self, values):
        values = np.reshape(values, (self.n_nodes, -1))
        return float(np.sqrt(np.sum(values * (self.mass_matrix @ values))))

    def quadrature_points(self):
        """Degree-2 points (cells * q, d) with weights (cells * q,) and barycentrics."""
        bary, weights = _QUADRATURE[self.dim]
        points = np.einsum("qa,cad->cqd", bary, self.points[self.cells])
        weights = self.volumes[:, None] * weights[None, :]
        return points.reshape(-1, self.dim), weights.ravel(), bary

    def locate(self, points):
        """Containing cell and barycentric coordinates of each point (structured meshes)."""
        points = np.atleast_2d(points)
        if not self.spacing:
            raise ConfigurationError("point location needs a structured mesh")
        dim = self.dim
        lower = self.points.min(axis=0)
        upper = self.points.max(axis=0)
        counts = np.rint((upper - lower) / self.spacing).astype(int)
        corner = np.clip(
            np.floor((points - lower) / self.spacing).astype(int), 0, counts - 1
        )
        cube = np.ravel_multi_index(tuple(corner.T), tuple(counts))
        per_cube = math.factorial(dim)
        n_cubes = int(np.prod(counts))
        best_cell = np.zeros(len(points), dtype=int)
        best_bary = np.zeros((len(points), dim + 1))
        best_score = np.full(len(points), -np.inf)
        for piece in range(per_cube):
            cell = piece * n_cubes + cube
            anchor = self.points[self.cells[cell, 0]]
            inverse = np.linalg.inv(self._jacobians[cell])
            tail = np.einsum("pij,pj->pi", inverse, points - anchor)
            bary = np.concatenate([1.0 - tail.sum(axis=1, keepdims=True), tail], axis=1)
            score = bary.min(axis=1)
            better = score > best_score
            best_cell[better] = cell[better]
            best_bary[better] = bary[better]
            best_score[better] = score[better]
        if np.any(best_score < -1e-9):
            raise ConfigurationError("points outside the mesh")
        return best_cell, best_bary


@dataclass(eq=False)
class FemField:
    mesh: Mesh
    values: np.ndarray
    time_tag: Optional[float] = None

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float).reshape(
            self.mesh.n_nodes, self.mesh.dim
        )

    @classmethod
    def interpolate(cls, mesh, function, time_tag=None, clamped=True):
        values = np.array(function(mesh.points), dtype=float).reshape(mesh.n_nodes, mesh.dim)
        if clamped:
            values[mesh.boundary_mask] = 0.0
        return cls(mesh, values, time_tag)

    @property
    def flat(self):
        return self.values.ravel()

    def gradients(self):
        """Constant displacement gradient per element, shape (cells, d, d)."""
        nodal = self.values[self.mesh.cells]
        return np.einsum("cai,caj->cij", nodal, self.mesh.shape_gradients)

    def evaluate(self, points):
        cells, bary = self.mesh.locate(points)
        return np.einsum("pa,pai->pi", bary, self.values[self.mesh.cells[cells]])


@dataclass(frozen=True, eq=False)
class FemSystem:
    mesh: Mesh
    tensors: ElasticTensors
    M_full: object
    K_full: object
    dof_map: np.ndarray
    M_loc: object
    K_loc: object

    def pair(self):
        return OperatorPair(
            M=self.M_loc,
            K=self.K_loc,
            dof_map=self.dof_map,
            n_global=self.mesh.n_nodes * self.mesh.dim,
            model="local",
            space=self.mesh,
            dim=self.mesh.dim,
        )


def _element_matrices(tensor, gradients, volumes):
    # K_e[a, i, b, k] = vol * T_ijkl dphi_a/dx_j dphi_b/dx_l
    local = np.einsum("ijkl,caj,cbl->caibk", tensor, gradients, gradients)
    return local * volumes[:, None, None, None, None]


def assemble_local(tensors, mesh, threads=1):
    if tensors.dim != mesh.dim:
        raise ConfigurationError("tensor and mesh dimensions differ")
    started = time.perf_counter()
    dim = mesh.dim
    n_dofs = mesh.n_nodes * dim
    local_dofs = (mesh.cells[:, :, None] * dim + np.arange(dim)).reshape(len(mesh.cells), -1)
    chunks = np.array_split(np.arange(len(mesh.cells)), max(1, threads))

    def _assemble(tensor):
        def _chunk(cells):
            block = _element_matrices(
                tensor, mesh.shape_gradients[cells], mesh.volumes[cells]
            ).reshape(len(cells), (dim + 1) * dim, (dim + 1) * dim)
            rows = np.repeat(local_dofs[cells], (dim + 1) * dim, axis=1)
            cols = np.tile(local_dofs[cells], (1, (dim + 1) * dim))
            return block.ravel(), rows.ravel(), cols.ravel()

        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            parts = list(pool.map(_chunk, chunks))
        data = np.concatenate([p[0] for p in parts])
        rows = np.concatenate([p[1] for p in parts])
        cols = np.concatenate([p[2] for p in parts])
        matrix = scipy.sparse.csr_matrix((data, (rows, cols)), shape=(n_dofs, n_dofs))
        return ((matrix + matrix.T) * 0.5).tocsr()

    M_full = _assemble(tensors.D_sym)
    K_full = _assemble(tensors.C_sym)
    nodes = np.flatnonzero(mesh.free_mask)
    dof_map = (nodes[:, None] * dim + np.arange(dim)).ravel()
    M_loc = M_full[dof_map][:, dof_map].tocsr()
    K_loc = K_full[dof_map][:, dof_map].tocsr()
    log.info(
        "assembled local system: %d cells, %d free dofs (%.2fs)",
        len(mesh.cells),
        len(dof_map),
        time.perf_counter() - started,
    )
    return FemSystem(mesh, tensors, M_full, K_full, dof_map, M_loc, K_loc)


def local_energy(tensors, u_fem, form="tensor"):
    density = energy_density(tensors, u_fem.gradients(), form)
    return float(np.sum(density * u_fem.mesh.volumes))


def local_dissipation(tensors, v_fem, form="tensor"):
    density = dissipation_density(tensors, v_fem.gradients(), form)
    return float(np.sum(density * v_fem.mesh.volumes))


def local_div_average(u_fem, point):
    """Sphere average of s.grad u(x) s at a point, checked against div u / d."""
    cells, _ = u_fem.mesh.locate(point)
    gradient = u_fem.gradients()[cells[0]]
    dim = u_fem.mesh.dim
    average = 0.0
    for i, j in itertools.product(range(dim), repeat=2):
        counts = np.bincount([i, j], minlength=dim)
        average += gradient[i, j] * sphere_moment(counts, dim)
    expected = np.trace(gradient) / dim
    if abs(average - expected) > 1e-12 * max(1.0, np.abs(gradient).max()):
        raise InvariantError(f"sphere average {average} differs from div u / d = {expected}")
    return float(average)
