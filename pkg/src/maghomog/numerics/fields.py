"""Discrete fields on a :class:`Mesh` and the norms used throughout."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh

# barycentric coordinates of the four sub-triangle centroids of the
# midpoint refinement; equal weights 1/4
SUBSAMPLE_BARY = np.array(
    [
        [2 / 3, 1 / 6, 1 / 6],
        [1 / 6, 2 / 3, 1 / 6],
        [1 / 6, 1 / 6, 2 / 3],
        [1 / 3, 1 / 3, 1 / 3],
    ]
)

_VALUE_SHAPE = {"scalar": (), "vector": (2,), "matrix": (2, 2)}


def subsample_points(mesh: Mesh) -> np.ndarray:
    """Four quadrature points per element, shape (n_elements, 4, 2)."""
    return np.einsum("qa,eak->eqk", SUBSAMPLE_BARY, mesh.vertex_coords)


@dataclass(frozen=True, eq=False)
class Field:
    """Values attached to a mesh.

    ``location`` is ``"node"`` (P1 nodal values), ``"element"`` (one
    constant per triangle) or ``"quadrature"`` (four sub-sample points per
    triangle, see :func:`subsample_points`).
    """

    mesh: Mesh
    values: np.ndarray
    kind: str = "scalar"
    location: str = "node"

    def __post_init__(self):
        if self.kind not in _VALUE_SHAPE:
            raise ValueError(f"unknown field kind {self.kind!r}")
        lead = {
            "node": (self.mesh.n_nodes,),
            "element": (self.mesh.n_elements,),
            "quadrature": (self.mesh.n_elements, 4),
        }[self.location]
        expected = lead + _VALUE_SHAPE[self.kind]
        if np.shape(self.values) != expected:
            raise ValueError(f"{self.kind} {self.location} field needs shape {expected}, got {np.shape(self.values)}")

    def gradient(self) -> "Field":
        if self.location != "node" or self.kind == "matrix":
            raise ValueError("gradient needs a nodal scalar or vector field")
        g = self.mesh.element_gradient(self.values)
        return Field(self.mesh, g, "vector" if self.kind == "scalar" else "matrix", "element")


def _pointwise_sq(values, kind):
    v = np.asarray(values, dtype=float)
    if kind == "scalar":
        return v**2
    axes = tuple(range(v.ndim - len(_VALUE_SHAPE[kind]), v.ndim))
    return np.sum(v**2, axis=axes)


def l2_norm(f: Field) -> float:
    mesh = f.mesh
    if f.location == "element":
        return float(np.sqrt(np.sum(mesh.areas * _pointwise_sq(f.values, f.kind))))
    if f.location == "quadrature":
        return float(np.sqrt(np.sum(mesh.areas[:, None] / 4.0 * _pointwise_sq(f.values, f.kind))))
    # exact for P1: int u^2 = |T|/12 (sum u_a^2 + (sum u_a)^2), per component
    v = np.asarray(f.values, dtype=float)[mesh.elements]
    v = v.reshape(v.shape[0], 3, -1)
    per = (np.sum(v**2, axis=1) + np.sum(v, axis=1) ** 2).sum(axis=1)
    return float(np.sqrt(np.sum(mesh.areas / 12.0 * per)))


def sup_norm(f: Field) -> float:
    """Max pointwise magnitude (Euclidean / Frobenius for vectors / matrices)."""
    return float(np.sqrt(np.max(_pointwise_sq(f.values, f.kind))))


def field_norms(f: Field, which: str) -> float:
    """``which`` is one of ``"L2"``, ``"sup"``, ``"H1-semi"``."""
    if which == "L2":
        return l2_norm(f)
    if which == "sup":
        return sup_norm(f)
    if which == "H1-semi":
        return l2_norm(f.gradient())
    raise ValueError(f"unknown norm {which!r}")


def sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.swapaxes(m, -1, -2))
