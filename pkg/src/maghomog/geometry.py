"""Unit cell, inclusion shapes, piecewise-constant coefficients and the
epsilon-tiled macro domain."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .numerics.mesh import Mesh

INCLUSION_KINDS = ("disk", "ellipse", "smoothed-square", "laminate", "none")


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class InclusionSpec:
    """One inclusion inside the unit cell.

    ``params`` holds ``radius`` (disk), ``semi_axes`` (ellipse, axis
    aligned) or ``half_width`` and ``corner_radius`` (smoothed square).
    ``kind="none"`` is the empty inclusion, Y_s = {}. ``kind="laminate"``
    is the layer ``y[axis] < fraction`` (params ``fraction``, ``axis``); it
    spans the cell, so it is a coefficient pattern and not a particle.
    """

    kind: str = "disk"
    center: tuple = (0.5, 0.5)
    params: dict = field(default_factory=lambda: {"radius": 0.25})

    def __post_init__(self):
        if self.kind not in INCLUSION_KINDS:
            raise GeometryError(f"unknown inclusion kind {self.kind!r}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.kind == "none":
            return
        if self.kind == "laminate":
            fr = float(self.params.get("fraction", 0.5))
            if not 0.0 < fr < 1.0 or int(self.params.get("axis", 0)) not in (0, 1):
                raise GeometryError("laminate needs 0 < fraction < 1 and axis in {0, 1}")
            return
        lo, hi = self._extent()
        c = np.asarray(self.center)
        if np.any(c - lo <= 0.0) or np.any(c + hi >= 1.0):
            raise GeometryError(f"{self.kind} inclusion touches the cell boundary")
        if self.kind == "smoothed-square":
            w, rc = self.params["half_width"], self.params["corner_radius"]
            if not 0.0 < rc <= w:
                raise GeometryError("smoothed-square needs 0 < corner_radius <= half_width")

    @classmethod
    def disk(cls, radius=0.25, center=(0.5, 0.5)):
        return cls("disk", center, {"radius": float(radius)})

    @classmethod
    def laminate(cls, fraction=0.5, axis=0):
        return cls("laminate", (0.5, 0.5), {"fraction": float(fraction), "axis": int(axis)})

    @classmethod
    def empty(cls):
        return cls("none", (0.5, 0.5), {})

    def _extent(self):
        p = self.params
        if self.kind == "disk":
            r = float(p["radius"])
            if r <= 0.0:
                raise GeometryError("disk radius must be positive")
            return np.array([r, r]), np.array([r, r])
        if self.kind == "ellipse":
            ax = np.asarray(p["semi_axes"], dtype=float)
            if np.any(ax <= 0.0):
                raise GeometryError("ellipse semi-axes must be positive")
            return ax, ax
        w = float(p["half_width"])
        return np.array([w, w]), np.array([w, w])

    @property
    def is_empty(self) -> bool:
        return self.kind == "none"

    @property
    def is_particle(self) -> bool:
        return self.kind not in ("none", "laminate")

    def contains(self, y) -> np.ndarray:
        """Membership of points already reduced to the unit cell."""
        y = np.asarray(y, dtype=float)
        if self.kind == "none":
            return np.zeros(y.shape[:-1], dtype=bool)
        p = self.params
        if self.kind == "laminate":
            return y[..., int(p.get("axis", 0))] < float(p.get("fraction", 0.5))
        d = y - np.asarray(self.center)
        if self.kind == "disk":
            return d[..., 0] ** 2 + d[..., 1] ** 2 < p["radius"] ** 2
        if self.kind == "ellipse":
            a, b = p["semi_axes"]
            return (d[..., 0] / a) ** 2 + (d[..., 1] / b) ** 2 < 1.0
        w, rc = p["half_width"], p["corner_radius"]
        q = np.maximum(np.abs(d) - (w - rc), 0.0)
        inside_box = np.all(np.abs(d) < w, axis=-1)
        return inside_box & (q[..., 0] ** 2 + q[..., 1] ** 2 < rc**2)

    def area(self) -> float:
        p = self.params
        if self.kind == "none":
            return 0.0
        if self.kind == "laminate":
            return float(p.get("fraction", 0.5))
        if self.kind == "disk":
            return np.pi * p["radius"] ** 2
        if self.kind == "ellipse":
            return np.pi * p["semi_axes"][0] * p["semi_axes"][1]
        w, rc = p["half_width"], p["corner_radius"]
        return (2 * w) ** 2 - (4 - np.pi) * rc**2

    def as_dict(self) -> dict:
        return {"kind": self.kind, "center": list(self.center), "params": {k: (list(v) if isinstance(v, (list, tuple)) else v) for k, v in self.params.items()}}


def _check_matrix(name, a):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape != (2, 2):
        raise GeometryError(f"{name} must be 2x2, got shape {a.shape}")
    if np.max(np.abs(a - a.T)) > 1e-14 * max(np.max(np.abs(a)), 1.0):
        raise GeometryError(f"{name} is not symmetric")
    eig = np.linalg.eigvalsh(a)
    if eig[0] <= 0.0:
        raise GeometryError(f"{name} violates ellipticity (eigenvalue {eig[0]:g})")
    return a, eig


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Symmetric elliptic permeability, ``a_in`` on Y_s and ``a_out`` on Y_f.

    ``modulation(y, inside)`` optionally multiplies the phase value by a
    smooth positive scalar; it defaults to the constant 1.
    """

    a_in: np.ndarray
    a_out: np.ndarray
    modulation: Callable | None = None
    bounds: tuple | None = None

    def __post_init__(self):
        a_in, e_in = _check_matrix("a_in", self.a_in)
        a_out, e_out = _check_matrix("a_out", self.a_out)
        a_in.setflags(write=False)
        a_out.setflags(write=False)
        object.__setattr__(self, "a_in", a_in)
        object.__setattr__(self, "a_out", a_out)
        if self.bounds is not None:
            lam, Lam = map(float, self.bounds)
            if not 0.0 < lam <= Lam:
                raise GeometryError(f"need 0 < lambda <= Lambda, got {lam}, {Lam}")
            allv = np.concatenate([e_in, e_out])
            if allv.min() < lam or allv.max() > Lam:
                raise GeometryError("coefficient eigenvalues outside the declared [lambda, Lambda]")

    @classmethod
    def isotropic(cls, a_in: float, a_out: float = 1.0):
        return cls(a_in * np.eye(2), a_out * np.eye(2))

    @property
    def ellipticity(self) -> tuple[float, float]:
        """(lambda, Lambda) over both phases (ignores modulation)."""
        e = np.concatenate([np.linalg.eigvalsh(self.a_in), np.linalg.eigvalsh(self.a_out)])
        return float(e.min()), float(e.max())


@dataclass(frozen=True, eq=False)
class CellGeometry:
    """Periodic unit cell Y = (0,1)^2 meshed with ``resolution`` squares per side."""

    inclusion: InclusionSpec
    coeff: CoefficientField
    resolution: int
    dim: int = 2

    @cached_property
    def mesh(self) -> Mesh:
        return Mesh(self.resolution, periodic=True)

    @cached_property
    def solid(self) -> np.ndarray:
        """Per-element phase: True where the centroid lies in Y_s."""
        return self.inclusion.contains(self.mesh.centroids)

    @cached_property
    def element_coeff(self) -> np.ndarray:
        return coefficient_at(self, self.mesh.centroids)

    @property
    def volume_fraction(self) -> float:
        return float(self.mesh.areas[self.solid].sum())


def build_unit_cell(inclusion: InclusionSpec, coeff: CoefficientField, resolution: int) -> CellGeometry:
    if resolution < 8:
        raise GeometryError(f"cell resolution must be >= 8, got {resolution}")
    if resolution % 2:
        raise GeometryError("cell resolution must be even")
    return CellGeometry(inclusion, coeff, int(resolution))


def coefficient_at(cell: CellGeometry, y) -> np.ndarray:
    """Permeability at ``y`` (any point of R^2); exactly Y-periodic."""
    y = np.asarray(y, dtype=float)
    frac = y - np.floor(y)
    inside = cell.inclusion.contains(frac)
    c = cell.coeff
    out = np.where(inside[..., None, None], c.a_in, c.a_out)
    if c.modulation is not None:
        out = out * np.asarray(c.modulation(frac, inside), dtype=float)[..., None, None]
    return out


@dataclass(frozen=True, eq=False)
class MacroGeometry:
    """Omega = (0,1)^2 tiled by m x m cells of size epsilon = 1/m."""

    cell: CellGeometry
    m: int
    resolution_per_cell: int

    @property
    def epsilon(self) -> float:
        return 1.0 / self.m

    @property
    def cells_per_side(self) -> int:
        return self.m

    @property
    def under_resolved(self) -> bool:
        return self.resolution_per_cell < 8

    @cached_property
    def mesh(self) -> Mesh:
        return Mesh(self.m * self.resolution_per_cell, periodic=False)

    @cached_property
    def element_coeff(self) -> np.ndarray:
        return coefficient_at(self.cell, self.mesh.centroids * self.m)

    @cached_property
    def solid(self) -> np.ndarray:
        y = self.mesh.centroids * self.m
        return self.cell.inclusion.contains(y - np.floor(y))

    @cached_property
    def particle_id(self) -> np.ndarray:
        """Index of the epsilon-cell of each element (-1 on fluid elements)."""
        ij = np.floor(self.mesh.centroids * self.m).astype(np.int64)
        return np.where(self.solid, ij[:, 0] + self.m * ij[:, 1], -1)

    def coefficient(self, x) -> np.ndarray:
        return coefficient_at(self.cell, np.asarray(x, dtype=float) * self.m)


DEFAULT_MAX_NODES_PER_SIDE = 2048


def build_macro_domain(cell: CellGeometry, m: int, resolution_per_cell: int, max_nodes_per_side=DEFAULT_MAX_NODES_PER_SIDE, allow_under_resolved=False) -> MacroGeometry:
    """``allow_under_resolved`` admits meshes with fewer than 8 elements per
    cell; solvers then flag their output as invalid."""
    if m < 2:
        raise GeometryError(f"need m >= 2 cells per side, got {m}")
    lo = 2 if allow_under_resolved else 8
    if resolution_per_cell < lo:
        raise GeometryError(f"resolution_per_cell must be >= 8, got {resolution_per_cell}")
    if resolution_per_cell % 2:
        raise GeometryError("resolution_per_cell must be even")
    if m * resolution_per_cell > max_nodes_per_side:
        raise GeometryError(f"{m * resolution_per_cell} nodes per side exceeds the budget of {max_nodes_per_side}")
    return MacroGeometry(cell, int(m), int(resolution_per_cell))
