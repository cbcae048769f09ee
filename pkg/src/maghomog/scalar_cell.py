"""Scalar cell problems, effective permeability and the cell Maxwell stress.

Indices are 0-based: ``omega[i]`` is the corrector for the direction e^i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CellGeometry
from .numerics import Field, SolverError, assemble_scalar, solve_spd


@dataclass(frozen=True, eq=False)
class ScalarCellSolution:
    cell: CellGeometry
    omega: np.ndarray  # (d, n_nodes), zero cell mean
    grad_omega: np.ndarray  # (d, n_elements, 2)
    residuals: tuple
    iterations: tuple

    @property
    def dim(self) -> int:
        return self.omega.shape[0]

    @property
    def corrected_gradients(self) -> np.ndarray:
        """``e^i + grad omega^i`` per element, shape (d, n_elements, 2)."""
        return self.grad_omega + np.eye(self.dim)[:, None, :]

    def field(self, i) -> Field:
        return Field(self.cell.mesh, self.omega[i])

    @property
    def sup_omega(self) -> np.ndarray:
        return np.abs(self.omega).max(axis=1)

    @property
    def sup_grad_omega(self) -> np.ndarray:
        return np.linalg.norm(self.grad_omega, axis=2).max(axis=1)


def solve_correctors(cell: CellGeometry, tol=1e-10, max_iter_factor=50.0) -> ScalarCellSolution:
    """Solve ``-Div[a (e^i + grad omega^i)] = 0`` with periodic BCs, i = 0..d-1."""
    mesh = cell.mesh
    a = cell.element_coeff
    K, _ = assemble_scalar(mesh, a)
    d = cell.dim
    omega = np.zeros((d, mesh.n_nodes))
    res, its = [], []
    for i in range(d):
        flux = a[:, :, i]  # a e^i
        _, b = assemble_scalar(mesh, a, flux=flux)
        try:
            out = solve_spd(K, b, tol=tol, constraint="zero-mean", max_iter_factor=max_iter_factor)
        except SolverError as exc:
            raise SolverError(f"cell corrector omega^{i}: {exc}", exc.residual, exc.iterations) from exc
        w = out.x - mesh.mean(out.x)
        omega[i] = w
        res.append(out.residual)
        its.append(out.iterations)
    grad = np.stack([mesh.element_gradient(omega[i]) for i in range(d)])
    return ScalarCellSolution(cell, omega, grad, tuple(res), tuple(its))


def effective_permeability(cell: CellGeometry, sol: ScalarCellSolution, form="energy") -> np.ndarray:
    """``A_jk = <a (e^k + grad omega^k) . (e^j + grad omega^j)>_Y``.

    ``form="flux"`` uses ``<a (e^k + grad omega^k) . e^j>`` instead; the two
    agree up to solver tolerance.
    """
    g = sol.corrected_gradients
    ag = np.einsum("emn,ken->kem", cell.element_coeff, g)
    w = cell.mesh.areas / cell.mesh.measure
    if form == "energy":
        A = np.einsum("e,kem,jem->jk", w, ag, g)
    elif form == "flux":
        A = np.einsum("e,kej->jk", w, ag)
    else:
        raise ValueError(f"unknown form {form!r}")
    return A


def maxwell_cell_stress(cell: CellGeometry, sol: ScalarCellSolution, i: int, j: int) -> np.ndarray:
    """``tau_ref^{ij} = a [g_i (x) g_j - (g_i . g_j) I / 2]`` per element, g_k = e^k + grad omega^k."""
    g = sol.corrected_gradients
    outer = np.einsum("em,en->emn", g[i], g[j])
    dot = np.einsum("em,em->e", g[i], g[j])
    inner = outer - 0.5 * dot[:, None, None] * np.eye(2)
    return np.einsum("emk,ekn->emn", cell.element_coeff, inner)


def all_maxwell_cell_stresses(cell: CellGeometry, sol: ScalarCellSolution) -> np.ndarray:
    """Shape (d, d, n_elements, 2, 2)."""
    d = sol.dim
    return np.array([[maxwell_cell_stress(cell, sol, i, j) for j in range(d)] for i in range(d)])


def voigt_reuss_bounds(cell: CellGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Arithmetic (upper) and harmonic (lower) volume averages of the element coefficients."""
    w = cell.mesh.areas / cell.mesh.measure
    a = cell.element_coeff
    upper = np.einsum("e,emn->mn", w, a)
    lower = np.linalg.inv(np.einsum("e,emn->mn", w, np.linalg.inv(a)))
    return lower, upper
