"""Scalar diffusion with strongly imposed Dirichlet data."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .assembly import assemble_scalar
from .mesh import Mesh
from .solvers import solve_spd


class DirichletResult(NamedTuple):
    u: np.ndarray  # nodal values, boundary rows equal to the data bitwise
    residual: float
    iterations: int
    energy_residual: float


def boundary_values(mesh: Mesh, data) -> np.ndarray:
    bn = mesh.boundary_nodes
    if data is None:
        return np.zeros(bn.size)
    if callable(data):
        return np.asarray(data(mesh.nodes[bn]), dtype=float).reshape(bn.size)
    return np.broadcast_to(np.asarray(data, dtype=float), (bn.size,)).copy()


def solve_dirichlet(mesh: Mesh, coeff, source=None, data=None, tol=1e-8, flux=None) -> DirichletResult:
    """``-Div(a grad u) = f`` (plus optional weak flux load), ``u = data`` on the boundary.

    ``energy_residual`` is the relative defect of the discrete energy
    identity ``int a grad u . grad u = int f u + boundary flux term``, where
    the boundary term is the reaction ``u_B . (K u - b)_B``.
    """
    if mesh.periodic:
        raise ValueError("Dirichlet solve needs a non-periodic mesh")
    K, b = assemble_scalar(mesh, coeff, source=source, flux=flux)
    bn, inn = mesh.boundary_nodes, mesh.interior_nodes
    u = np.zeros(mesh.n_nodes)
    u[bn] = boundary_values(mesh, data)
    Kii = K[inn][:, inn]
    rhs = b[inn] - K[inn][:, bn] @ u[bn]
    out = solve_spd(Kii, rhs, tol=tol)
    u[inn] = out.x
    Ku = K @ u
    energy = float(u @ Ku)
    work = float(u @ b) + float(u[bn] @ (Ku - b)[bn])
    scale = max(abs(energy), abs(float(u @ b)), 1e-300)
    return DirichletResult(u, out.residual, out.iterations, abs(energy - work) / scale)
