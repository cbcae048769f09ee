"""Homogenized potential and Stokes problems, first-order correctors and
the corrector-error metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .finescale import FineScaleSolution, PhysicalParams
from .numerics import Field, Mesh, SaddleSolver, SolverError, assemble_stokes, solve_dirichlet, subsample_points, sym
from .scalar_cell import ScalarCellSolution
from .stokes_cell import EffectiveTensors, StokesCellSolution, legendre_hadamard_constant, viscosity_symmetry_defect


class MeshMismatchError(ValueError):
    pass


class TensorValidationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class HomogenizedSolution:
    phi0: Field
    u0: Field | None = None
    pi0: Field | None = None
    tensors: EffectiveTensors | None = None
    residuals: dict = field(default_factory=dict)


def _A_of(tensors) -> np.ndarray:
    return np.asarray(tensors.A if isinstance(tensors, EffectiveTensors) else tensors, dtype=float)


def solve_scalar_homogenized(tensors, f=1.0, k=None, resolution=128, tol=1e-8) -> Field:
    """``-Div(A grad phi0) = f`` in Omega, ``phi0 = k`` on the boundary (default ``k = x_1``)."""
    A = _A_of(tensors)
    if np.max(np.abs(A - A.T)) > 1e-10 * np.abs(A).max() or np.linalg.eigvalsh(0.5 * (A + A.T))[0] <= 0.0:
        raise TensorValidationError("effective permeability is not symmetric positive definite")
    k = (lambda x: np.asarray(x)[:, 0]) if k is None else k
    mesh = Mesh(int(resolution), periodic=False)
    out = solve_dirichlet(mesh, 0.5 * (A + A.T), source=f, data=k, tol=tol)
    return Field(mesh, out.u)


def homogenized_data_stress(B: np.ndarray, grad_phi0: np.ndarray, S: float) -> np.ndarray:
    """``S B^{ij} d_i phi0 d_j phi0`` per element."""
    return S * np.einsum("ijmn,ei,ej->emn", B, grad_phi0, grad_phi0)


def solve_stokes_homogenized(tensors: EffectiveTensors, phi0: Field, params: PhysicalParams, tol=1e-8, stab_beta=0.05, lh_samples=10_000, seed=0):
    """Anisotropic Stokes flow on the mesh of ``phi0``:

    ``-Div[(2/Re) N^{ij}_{mn} D(u0)_ij - pi0 delta_mn + S B^{ij}_{mn} d_i phi0 d_j phi0] = g / Fr^2``,
    ``Div u0 = 0``, ``u0 = 0`` on the boundary, ``pi0`` of zero mean.
    """
    N = np.asarray(tensors.N, dtype=float)
    if viscosity_symmetry_defect(N) > 1e-8 * max(np.abs(N).max(), 1.0):
        raise TensorValidationError("effective viscosity violates its index symmetries")
    beta = legendre_hadamard_constant(N, lh_samples, seed)
    if beta <= 0.0:
        raise TensorValidationError(f"effective viscosity fails Legendre-Hadamard (beta={beta:.3e})")
    mesh = phi0.mesh
    g = mesh.element_gradient(phi0.values)
    C = (2.0 / params.Re) * N.transpose(2, 3, 0, 1)
    tau = homogenized_data_stress(np.asarray(tensors.B, dtype=float), g, params.S)
    op, rhs = assemble_stokes(mesh, extra_stress=tau, body_force=params.body_force(mesh.centroids), stab_beta=stab_beta, viscosity_tensor=C)
    try:
        res = SaddleSolver(op).solve(rhs, tol=tol)
    except SolverError as exc:
        raise SolverError(f"homogenized Stokes: {exc}", exc.residual, exc.iterations) from exc
    return Field(mesh, res.velocity, "vector"), Field(mesh, res.pressure)


def _macro_at(field_: Field, pts: np.ndarray) -> np.ndarray:
    """Element gradient of a nodal field at points, shape pts.shape[:-1] + grad shape."""
    mesh = field_.mesh
    flat = pts.reshape(-1, 2)
    grad = mesh.element_gradient(field_.values)
    out = grad[mesh.locate(flat)]
    return out.reshape(pts.shape[:-1] + grad.shape[1:])


def _cell_at(cell_mesh: Mesh, values: np.ndarray, pts: np.ndarray, epsilon: float) -> np.ndarray:
    """Element-constant cell data (..., n_cell_elements, ...) at y = x / eps mod 1, element axis first."""
    flat = pts.reshape(-1, 2) / epsilon
    e = cell_mesh.locate(flat)
    return values[e].reshape(pts.shape[:-1] + values.shape[1:])


def uncorrected_gradient(phi0: Field, mesh: Mesh) -> Field:
    return Field(mesh, _macro_at(phi0, subsample_points(mesh)), "vector", "quadrature")


def build_corrector_phi1(phi0: Field, cell_sol: ScalarCellSolution, epsilon: float, mesh: Mesh) -> Field:
    """Corrected gradient ``d_i phi0(x) (e^i + grad_y omega^i(x/eps))`` at the
    quadrature points of the fine mesh ``mesh``."""
    pts = subsample_points(mesh)
    G = _macro_at(phi0, pts)  # (ne, 4, 2)
    cg = np.moveaxis(cell_sol.corrected_gradients, 0, 1)  # (ne_cell, d, 2)
    W = _cell_at(cell_sol.cell.mesh, cg, pts, epsilon)  # (ne, 4, d, 2)
    return Field(mesh, np.einsum("eqi,eqik->eqk", G, W), "vector", "quadrature")


def uncorrected_strain(u0: Field, mesh: Mesh) -> Field:
    return Field(mesh, sym(_macro_at(u0, subsample_points(mesh))), "matrix", "quadrature")


def build_corrector_u1(u0: Field, phi0: Field, stokes_sol: StokesCellSolution, S: float, epsilon: float, mesh: Mesh, Re=1.0) -> Field:
    """Corrected strain ``D(u0) + D_y u1`` on the quadrature points of ``mesh`` with

    ``u1 = -D(u0)_ij chi^{ij} + (S Re / 2) d_i phi0 d_j phi0 xi^{ij}``.

    The ``Re / 2`` factor converts the cell problems, posed with unit
    stress ``D(.)``, to the fluid stress ``(2/Re) D(.)``.
    """
    pts = subsample_points(mesh)
    E = sym(_macro_at(u0, pts))  # (ne, 4, 2, 2)
    G = _macro_at(phi0, pts)  # (ne, 4, 2)
    cm = stokes_sol.cell.mesh
    Dchi = _cell_at(cm, np.moveaxis(stokes_sol.chi_strain(), 2, 0), pts, epsilon)  # (ne, 4, d, d, 2, 2)
    out = E - np.einsum("eqij,eqijmn->eqmn", E, Dchi)
    if S != 0.0:
        Dxi = _cell_at(cm, np.moveaxis(stokes_sol.xi_strain(), 2, 0), pts, epsilon)
        out = out + 0.5 * S * Re * np.einsum("eqi,eqj,eqijmn->eqmn", G, G, Dxi)
    return Field(mesh, out, "matrix", "quadrature")


def _quad_l2(mesh: Mesh, diff: np.ndarray) -> float:
    sq = np.sum(diff.reshape(diff.shape[0], 4, -1) ** 2, axis=2)
    return float(np.sqrt(np.sum(mesh.areas[:, None] / 4.0 * sq)))


def _check_quadrature(fine: FineScaleSolution, f: Field, kind: str):
    if f.mesh is not fine.mesh and (f.mesh.n != fine.mesh.n or f.mesh.periodic != fine.mesh.periodic):
        raise MeshMismatchError("corrector field and fine-scale solution live on different meshes")
    if f.location != "quadrature" or f.kind != kind:
        raise MeshMismatchError(f"expected a {kind} quadrature field")


def corrector_error_scalar(fine: FineScaleSolution, corrected_grad: Field) -> float:
    """``|| grad phi^eps - corrected_grad ||_{L2(Omega)}`` with four points per element."""
    _check_quadrature(fine, corrected_grad, "vector")
    return _quad_l2(fine.mesh, fine.grad_phi[:, None, :] - corrected_grad.values)


def corrector_error_stokes(fine: FineScaleSolution, corrected_strain: Field) -> float:
    """``|| D(u^eps) - corrected_strain ||_{L2(Omega)}`` (Frobenius pointwise)."""
    _check_quadrature(fine, corrected_strain, "matrix")
    return _quad_l2(fine.mesh, fine.strain[:, None] - corrected_strain.values)


REPORT_COLUMNS = ("epsilon", "err_grad_phi", "err_grad_phi_nocorr", "err_D_u", "err_D_u_nocorr", "sup_grad_phi", "wall_time_s")


@dataclass(frozen=True)
class ConvergenceRow:
    epsilon: float
    err_grad_phi: float
    err_grad_phi_nocorr: float
    err_D_u: float = float("nan")
    err_D_u_nocorr: float = float("nan")
    sup_grad_phi: float = float("nan")
    wall_time_s: float | None = None

    def as_dict(self) -> dict:
        return {c: getattr(self, c) for c in REPORT_COLUMNS}


@dataclass(frozen=True)
class ConvergenceReport:
    rows: tuple

    def __post_init__(self):
        rows = tuple(sorted(self.rows, key=lambda r: -r.epsilon))
        for r in rows:
            for c in REPORT_COLUMNS[1:6]:
                v = getattr(r, c)
                if not (np.isnan(v) or (np.isfinite(v) and v >= 0.0)):
                    raise ValueError(f"{c}={v} at eps={r.epsilon} is not a finite nonnegative norm")
        object.__setattr__(self, "rows", rows)

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def non_increasing(self, name, slack=0.05) -> bool:
        v = self.column(name)
        return bool(np.all(v[1:] <= (1.0 + slack) * v[:-1]))

    def corrector_gain(self, name="err_grad_phi") -> float:
        """Corrected / uncorrected error at the smallest epsilon."""
        last = self.rows[-1]
        return getattr(last, name) / getattr(last, name + "_nocorr")
