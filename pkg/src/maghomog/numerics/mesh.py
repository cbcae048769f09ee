"""Structured P1 triangulations of the square (0, L)^2.

Each grid square is split into two triangles. The diagonal direction
alternates in a checkerboard ("union jack") pattern so the triangulation
is invariant under the mirror maps y1 -> L - y1 and y2 -> L - y2 whenever
the number of squares per side is even.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

# reference-triangle gradients of the barycentric basis
_REF_GRAD = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulation of ``(0, length)^2`` with ``n`` squares per side.

    In periodic mode opposite-face nodes are identified, so there are
    ``n**2`` nodes; in Dirichlet mode there are ``(n + 1)**2``.
    """

    n: int
    periodic: bool
    length: float = 1.0
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"need at least 2 squares per side, got {self.n}")
        if self.periodic and self.n % 2:
            raise ValueError("periodic union-jack mesh needs an even n")

    @property
    def boundary_mode(self) -> str:
        return "periodic" if self.periodic else "dirichlet"

    @property
    def h(self) -> float:
        return self.length / self.n

    @property
    def nodes_per_side(self) -> int:
        return self.n if self.periodic else self.n + 1

    @property
    def n_nodes(self) -> int:
        return self.nodes_per_side**2

    @property
    def n_elements(self) -> int:
        return 2 * self.n * self.n

    def node_index(self, i, j):
        """Node id of lattice point (i, j); wraps in periodic mode."""
        if self.periodic:
            return np.mod(i, self.n) + self.n * np.mod(j, self.n)
        return i + (self.n + 1) * j

    @cached_property
    def nodes(self) -> np.ndarray:
        k = np.arange(self.nodes_per_side)
        i, j = np.meshgrid(k, k, indexing="xy")
        return np.column_stack([i.ravel(), j.ravel()]) * self.h

    @cached_property
    def _lattice(self):
        # (n_elements, 3, 2) integer lattice coordinates, not wrapped
        n = self.n
        jj, ii = np.divmod(np.arange(n * n), n)
        even = (ii + jj) % 2 == 0
        off = np.empty((n * n, 2, 3, 2), dtype=np.int64)
        # even squares: diagonal (0,0)-(1,1)
        off_even = np.array([[[0, 0], [1, 0], [1, 1]], [[0, 0], [1, 1], [0, 1]]])
        # odd squares: diagonal (1,0)-(0,1)
        off_odd = np.array([[[0, 0], [1, 0], [0, 1]], [[1, 0], [1, 1], [0, 1]]])
        off[even] = off_even
        off[~even] = off_odd
        base = np.stack([ii, jj], axis=1)[:, None, None, :]
        return (off + base).reshape(-1, 3, 2)

    @cached_property
    def elements(self) -> np.ndarray:
        lat = self._lattice
        return self.node_index(lat[..., 0], lat[..., 1])

    @cached_property
    def vertex_coords(self) -> np.ndarray:
        """Unwrapped vertex coordinates, shape (n_elements, 3, 2)."""
        return self._lattice * self.h

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertex_coords.mean(axis=1)

    @cached_property
    def areas(self) -> np.ndarray:
        v = self.vertex_coords
        e1, e2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def grads(self) -> np.ndarray:
        """Basis gradients, shape (n_elements, 3, 2); row a is grad N_a."""
        v = self.vertex_coords
        jac = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2)
        inv = np.linalg.inv(jac)
        return np.einsum("ak,ekl->eal", _REF_GRAD, inv)

    @property
    def measure(self) -> float:
        return self.length**self.dim

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        if self.periodic:
            return np.empty(0, dtype=np.int64)
        x = self.nodes
        tol = 1e-9 * self.h
        on = (x[:, 0] < tol) | (x[:, 1] < tol) | (x[:, 0] > self.length - tol) | (x[:, 1] > self.length - tol)
        return np.flatnonzero(on)

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    @cached_property
    def lumped_mass(self) -> np.ndarray:
        m = np.zeros(self.n_nodes)
        np.add.at(m, self.elements, np.repeat(self.areas[:, None] / 3.0, 3, axis=1))
        return m

    def locate(self, points) -> np.ndarray:
        """Element containing each point (periodic wrap in periodic mode)."""
        p = np.asarray(points, dtype=float) / self.h
        if self.periodic:
            p = np.mod(p, self.n)
        else:
            p = np.clip(p, 0.0, self.n * (1.0 - 1e-15))
        cell = np.floor(p).astype(np.int64)
        cell = np.clip(cell, 0, self.n - 1)
        s, t = (p - cell).T
        i, j = cell.T
        even = (i + j) % 2 == 0
        second = np.where(even, t > s, s + t >= 1.0)
        return 2 * (j * self.n + i) + second.astype(np.int64)

    def interpolate(self, nodal, points) -> np.ndarray:
        """Evaluate a P1 nodal field at arbitrary points."""
        e = self.locate(points)
        p = np.asarray(points, dtype=float)
        v = self.vertex_coords[e]
        if self.periodic:
            # shift points into the unwrapped frame of their element
            p = p - np.floor(p / self.length) * self.length
        lam12 = np.einsum("eal,el->ea", self.grads[e][:, 1:], p - v[:, 0])
        lam = np.column_stack([1.0 - lam12.sum(axis=1), lam12])
        vals = np.asarray(nodal)[self.elements[e]]
        if vals.ndim == 2:
            return np.einsum("ea,ea->e", lam, vals)
        return np.einsum("ea,ea...->e...", lam, vals)

    def element_gradient(self, nodal) -> np.ndarray:
        """Piecewise-constant gradient, shape (n_elements, 2) or (n_elements, c, 2)."""
        vals = np.asarray(nodal)[self.elements]
        return np.einsum("ea...,eal->e...l", vals, self.grads)

    def integral(self, nodal) -> float:
        """Exact integral of a P1 nodal field."""
        return float(np.sum(self.areas * np.asarray(nodal)[self.elements].mean(axis=1)))

    def mean(self, nodal) -> float:
        return self.integral(nodal) / self.measure
