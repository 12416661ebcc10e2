"""Periodic hypercubic lattices: sites, nearest-neighbour edges, Laplacian.

Sites are indexed in row-major (C) order, so the last coordinate varies
fastest: ``flat = ((x0 * L1) + x1) * L2 + x2``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import LatticeError
from .linalg import DENSE_LIMIT, SymmetricOperator


class DegenerateSideWarning(UserWarning):
    """A side of length 2 makes both periodic neighbours the same site."""


@dataclass(frozen=True)
class LatticeShape:
    """Geometry of a periodic box in Z^d.

    Instances are immutable; derived arrays are cached on first use and
    must not be mutated by callers.
    """

    dimension: int
    side_lengths: tuple[int, ...]
    _edges: np.ndarray = field(repr=False, compare=False)

    @property
    def num_sites(self) -> int:
        return int(np.prod(self.side_lengths))

    @property
    def edges(self) -> np.ndarray:
        """(num_edges, 2) int array, each undirected bond exactly once."""
        return self._edges

    @property
    def num_edges(self) -> int:
        return len(self._edges)

    def coordinates(self, flat_index: int) -> tuple[int, ...]:
        if not 0 <= flat_index < self.num_sites:
            raise LatticeError(f"site {flat_index} outside [0, {self.num_sites})")
        return tuple(int(c) for c in np.unravel_index(flat_index, self.side_lengths))

    def flat_index(self, coordinates) -> int:
        coords = tuple(int(c) % L for c, L in zip(coordinates, self.side_lengths))
        if len(coords) != self.dimension:
            raise LatticeError(f"expected {self.dimension} coordinates, got {len(coordinates)}")
        return int(np.ravel_multi_index(coords, self.side_lengths))

    @cached_property
    def all_coordinates(self) -> np.ndarray:
        """(num_sites, d) array of site coordinates in flat order."""
        grids = np.indices(self.side_lengths).reshape(self.dimension, -1)
        return np.ascontiguousarray(grids.T)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.bincount(self._edges.ravel(), minlength=self.num_sites)

    @cached_property
    def neighbor_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Padded neighbour lists ``(nbr, mask)`` of shape (num_sites, max_degree).

        Padding entries point at the site itself and carry ``mask == False``.
        """
        n = self.num_sites
        width = int(self.degrees.max()) if n > 1 else 0
        nbr = np.repeat(np.arange(n)[:, None], width, axis=1)
        mask = np.zeros((n, width), dtype=bool)
        fill = np.zeros(n, dtype=int)
        for a, b in self._edges:
            nbr[a, fill[a]] = b
            mask[a, fill[a]] = True
            fill[a] += 1
            nbr[b, fill[b]] = a
            mask[b, fill[b]] = True
            fill[b] += 1
        nbr.setflags(write=False)
        mask.setflags(write=False)
        return nbr, mask

    @cached_property
    def color_classes(self) -> tuple[np.ndarray, ...]:
        """Partition of the sites into independent sets (no edge inside a class).

        Even tori use the parity checkerboard; otherwise a greedy colouring in
        flat order is used.  Both are deterministic.
        """
        n = self.num_sites
        if all(L % 2 == 0 for L in self.side_lengths):
            parity = self.all_coordinates.sum(axis=1) % 2
            return tuple(np.flatnonzero(parity == c) for c in (0, 1))
        nbr, mask = self.neighbor_table
        colour = np.full(n, -1)
        for i in range(n):
            taken = {colour[j] for j, m in zip(nbr[i], mask[i]) if m}
            c = 0
            while c in taken:
                c += 1
            colour[i] = c
        return tuple(np.flatnonzero(colour == c) for c in range(colour.max() + 1))

    def periodic_displacement(self, site: int, origin: int = 0) -> np.ndarray:
        """Minimal-image displacement vector from ``origin`` to ``site``."""
        L = np.asarray(self.side_lengths)
        delta = (self.all_coordinates[site] - self.all_coordinates[origin]) % L
        return np.where(delta > L // 2, delta - L, delta)

    def distance_from_origin(self) -> np.ndarray:
        """Euclidean minimal-image distance of every site from site 0."""
        L = np.asarray(self.side_lengths)
        delta = self.all_coordinates % L
        delta = np.where(delta > L // 2, delta - L, delta)
        return np.sqrt((delta.astype(float) ** 2).sum(axis=1))

    def translate(self, shift) -> np.ndarray:
        """Permutation ``p`` with ``p[i]`` the image of site ``i`` under ``shift``."""
        shifted = (self.all_coordinates + np.asarray(shift)) % np.asarray(self.side_lengths)
        return np.ravel_multi_index(shifted.T, self.side_lengths)


def build_lattice(dimension: int, side_lengths) -> LatticeShape:
    """Build a periodic lattice with a deduplicated nearest-neighbour edge list."""
    sides = tuple(int(L) for L in side_lengths)
    problems = []
    if int(dimension) < 1:
        problems.append(f"dimension must be >= 1, got {dimension}")
    if len(sides) != int(dimension):
        problems.append(f"{len(sides)} side lengths given for dimension {dimension}")
    bad = [L for L in sides if L < 2]
    if bad:
        problems.append(f"side lengths must be >= 2, got {bad}")
    if problems:
        raise LatticeError("; ".join(problems))
    if any(L == 2 for L in sides):
        warnings.warn(
            f"side length 2 in {sides}: periodic neighbours coincide, a single bond is stored",
            DegenerateSideWarning,
            stacklevel=2,
        )

    n = int(np.prod(sides))
    coords = np.indices(sides).reshape(len(sides), -1).T
    pairs = []
    for axis, L in enumerate(sides):
        fwd = coords.copy()
        fwd[:, axis] = (fwd[:, axis] + 1) % L
        j = np.ravel_multi_index(fwd.T, sides)
        i = np.arange(n)
        if L == 2:
            # forward and backward neighbour coincide: keep one bond per pair
            keep = coords[:, axis] == 0
            i, j = i[keep], j[keep]
        pairs.append(np.stack([i, j], axis=1))
    edges = np.concatenate(pairs, axis=0)
    edges = np.sort(edges, axis=1)
    edges.setflags(write=False)
    return LatticeShape(int(dimension), sides, edges)


def _edge_operator(shape: LatticeShape, weights: np.ndarray, sparse: bool | None) -> SymmetricOperator:
    """Weighted graph Laplacian ``sum_e w_e (e_i - e_j)(e_i - e_j)^T``."""
    n = shape.num_sites
    i, j = shape.edges[:, 0], shape.edges[:, 1]
    if sparse is None:
        sparse = n > DENSE_LIMIT
    if sparse:
        from scipy import sparse as sp

        rows = np.concatenate([i, j, i, j])
        cols = np.concatenate([j, i, i, j])
        vals = np.concatenate([-weights, -weights, weights, weights])
        return SymmetricOperator(sp.csr_matrix((vals, (rows, cols)), shape=(n, n)))
    mat = np.zeros((n, n))
    np.add.at(mat, (i, j), -weights)
    np.add.at(mat, (j, i), -weights)
    np.add.at(mat, (i, i), weights)
    np.add.at(mat, (j, j), weights)
    return SymmetricOperator(mat)


def laplacian(shape: LatticeShape, sparse: bool | None = None) -> SymmetricOperator:
    """Return ``-Delta`` (positive semidefinite) with periodic boundary conditions."""
    return _edge_operator(shape, np.ones(shape.num_edges), sparse)


def weighted_laplacian(shape: LatticeShape, edge_weights, sparse: bool | None = None) -> SymmetricOperator:
    w = np.asarray(edge_weights, dtype=float)
    if w.shape != (shape.num_edges,):
        raise LatticeError(f"expected {shape.num_edges} edge weights, got shape {w.shape}")
    return _edge_operator(shape, w, sparse)


def gradient_form(shape: LatticeShape, f) -> float:
    """Sum over bonds of ``(f_i - f_j)**2``."""
    f = np.asarray(f, dtype=float)
    if f.shape != (shape.num_sites,):
        raise LatticeError(f"field has shape {f.shape}, lattice has {shape.num_sites} sites")
    diff = f[shape.edges[:, 0]] - f[shape.edges[:, 1]]
    return float(diff @ diff)


def laplacian_eigenvalues(shape: LatticeShape) -> np.ndarray:
    """Eigenvalues of ``-Delta`` from the Fourier modes, in flat momentum order.

    A side of length 2 carries a single bond, which halves its dispersion.
    """
    parts = []
    for L in shape.side_lengths:
        k = np.arange(L)
        scale = 1.0 if L == 2 else 2.0
        parts.append(scale * (1.0 - np.cos(2.0 * np.pi * k / L)))
    grids = np.meshgrid(*parts, indexing="ij")
    return np.sum(grids, axis=0).ravel()
