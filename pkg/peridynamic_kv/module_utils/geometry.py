# -*- coding: utf-8 -*-
# Copyright: (c) 2026, peridynamic-kv contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

"""Box domain with a collar and the uniform grid that discretizes it."""

from __future__ import absolute_import, division, print_function

__metaclass__ = type

import functools
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np

from peridynamic_kv.module_utils.common import ConfigurationError

log = logging.getLogger(__name__)

_FUZZ = 1e-9


@dataclass(frozen=True)
class Domain:
    """Omega as an axis-aligned box; Omega-tilde inflates it by collar_width per side."""

    dim: int
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    collar_width: float

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ConfigurationError(f"dim must be 2 or 3, got {self.dim}")
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        if len(self.lower) != self.dim or len(self.upper) != self.dim:
            raise ConfigurationError(f"box corners must have {self.dim} coordinates")
        if any(u <= l for l, u in zip(self.lower, self.upper)):
            raise ConfigurationError("box edge lengths must be strictly positive")
        if not self.collar_width >= 0:
            raise ConfigurationError("collar_width must be nonnegative")

    @classmethod
    def unit(cls, dim, collar_width):
        return cls(dim, (0.0,) * dim, (1.0,) * dim, collar_width)

    @classmethod
    def from_params(cls, block):
        """Domain from a validated `domain` config block."""
        return cls(block["dim"], block["lower"], block["upper"], block["collar_width"])

    @property
    def lengths(self):
        return np.subtract(self.upper, self.lower)

    @property
    def volume(self):
        return float(np.prod(self.lengths))

    @property
    def extended_volume(self):
        return float(np.prod(self.lengths + 2.0 * self.collar_width))

    def check_horizon(self, horizon):
        if horizon > self.collar_width * (1.0 + _FUZZ):
            raise ConfigurationError(
                f"collar_width {self.collar_width} is smaller than horizon {horizon}"
            )

    def contains(self, points, closed=False):
        """Membership in the open box (closed=True for its closure)."""
        points = np.atleast_2d(points)
        lower = np.asarray(self.lower)
        upper = np.asarray(self.upper)
        if closed:
            return np.all((points >= lower) & (points <= upper), axis=1)
        return np.all((points > lower) & (points < upper), axis=1)

    def boundary_distance(self, points):
        points = np.atleast_2d(points)
        gaps = np.minimum(points - np.asarray(self.lower), np.asarray(self.upper) - points)
        return np.min(gaps, axis=1)


@dataclass(frozen=True)
class Grid:
    """Uniform node lattice covering Omega-tilde; node j sits at lower + j * spacing."""

    domain: Domain
    spacing: float

    @cached_property
    def index_bounds(self):
        ratio = self.domain.collar_width / self.spacing
        first = -int(np.floor(ratio + _FUZZ))
        last = np.floor((self.domain.lengths + self.domain.collar_width) / self.spacing + _FUZZ)
        return first, last.astype(int)

    @property
    def dim(self):
        return self.domain.dim

    @cached_property
    def shape(self):
        first, last = self.index_bounds
        return tuple(int(n) for n in last - first + 1)

    @property
    def n_nodes(self):
        return int(np.prod(self.shape))

    @cached_property
    def lattice(self):
        """Integer lattice coordinate of every node, C order."""
        first, _ = self.index_bounds
        axes = [np.arange(n) + first for n in self.shape]
        mesh = np.meshgrid(*axes, indexing="ij")
        lattice = np.stack([m.ravel() for m in mesh], axis=1)
        lattice.setflags(write=False)
        return lattice

    @cached_property
    def nodes(self):
        nodes = np.asarray(self.domain.lower) + self.lattice * self.spacing
        nodes.setflags(write=False)
        return nodes

    @property
    def points(self):
        return self.nodes

    @cached_property
    def interior_mask(self):
        # a node on the boundary of Omega counts as collar
        offsets = self.lattice * self.spacing
        tolerance = _FUZZ * self.spacing
        mask = np.all(
            (self.lattice >= 1) & (offsets < self.domain.lengths - tolerance), axis=1
        )
        mask.setflags(write=False)
        return mask

    @property
    def free_mask(self):
        return self.interior_mask

    @property
    def cell_volume(self):
        return self.spacing**self.dim

    @property
    def n_interior(self):
        return int(np.count_nonzero(self.interior_mask))

    @cached_property
    def node_volumes(self):
        """Trapezoid volumes; they tile the box spanned by the outermost nodes."""
        first, last = self.index_bounds
        halved = (self.lattice == first) | (self.lattice == last)
        volumes = self.cell_volume * np.prod(np.where(halved, 0.5, 1.0), axis=1)
        volumes.setflags(write=False)
        return volumes

    @cached_property
    def center_node(self):
        center = 0.5 * (np.asarray(self.domain.lower) + np.asarray(self.domain.upper))
        return int(np.argmin(np.linalg.norm(self.nodes - center, axis=1)))

    def flat_index(self, lattice):
        """Flat node index of lattice coordinates; -1 where outside the grid."""
        first, _ = self.index_bounds
        position = np.atleast_2d(lattice) - first
        inside = np.all((position >= 0) & (position < np.asarray(self.shape)), axis=1)
        flat = np.full(position.shape[0], -1, dtype=np.int64)
        flat[inside] = np.ravel_multi_index(tuple(position[inside].T), self.shape)
        return flat

    def nearest_node(self, points):
        lattice = np.rint(
            (np.atleast_2d(points) - np.asarray(self.domain.lower)) / self.spacing
        ).astype(np.int64)
        return self.flat_index(lattice)

    def l2_norm(self, values):
        squared = np.sum(np.square(values).reshape(self.n_nodes, -1), axis=1)
        return float(np.sqrt(np.sum(squared * self.node_volumes)))


def build_grid(domain, spacing):
    if not spacing > 0:
        raise ConfigurationError(f"grid spacing must be > 0, got {spacing}")
    if spacing > domain.collar_width * (1.0 + _FUZZ):
        raise ConfigurationError(
            f"grid spacing {spacing} exceeds collar_width {domain.collar_width}: "
            "at least one collar layer is required"
        )
    grid = Grid(domain, float(spacing))
    log.debug(
        "grid %s with %d nodes (%d interior)", grid.shape, grid.n_nodes, grid.n_interior
    )
    return grid


@functools.lru_cache(maxsize=64)
def lattice_stencil(dim, spacing, horizon):
    """Integer offsets k != 0 with |k| * spacing <= horizon, in lexicographic order."""
    if not horizon > 0:
        raise ConfigurationError(f"horizon must be > 0, got {horizon}")
    reach = int(np.floor(horizon / spacing + _FUZZ))
    axis = np.arange(-reach, reach + 1)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    offsets = np.stack([m.ravel() for m in mesh], axis=1)
    squared = np.sum(offsets**2, axis=1)
    limit = (horizon / spacing) ** 2 * (1.0 + _FUZZ)
    keep = (squared > 0) & (squared <= limit)
    stencil = offsets[keep]
    stencil.setflags(write=False)
    return stencil


def neighbors(grid, node, horizon):
    """Nodes x' != x with |x' - x| <= horizon, clipped to the grid."""
    if not 0 <= node < grid.n_nodes:
        raise IndexError(f"node {node} outside grid of {grid.n_nodes} nodes")
    stencil = lattice_stencil(grid.dim, grid.spacing, horizon)
    targets = grid.flat_index(grid.lattice[node] + stencil)
    keep = targets >= 0
    return [
        (int(j), k * grid.spacing) for j, k in zip(targets[keep], stencil[keep])
    ]
