"""Stokes cell problems with rigid inclusions (viscosity penalization),
effective viscosity and effective coupling.

The cell fluid carries the stress ``D(v)`` (viscosity 1/2 in the
``2 mu D`` law); inclusion elements get ``mu_pen``. Indices are 0-based.

For ``i == j`` the affine field ``P^{ii}`` is not divergence free, so no
periodic divergence-free ``chi^{ii}`` can make ``P^{ii} - chi^{ii}`` rigid.
The cell problems are therefore driven by the deviatoric part
``P^{ij} - delta_ij y / d``; the trace part only adds ``delta_ij I / d`` to
the strain, which the effective-viscosity integrals keep.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import CellGeometry
from .scalar_cell import ScalarCellSolution, all_maxwell_cell_stresses, effective_permeability
from .interface import balance_integrals
from .numerics import SaddleSolver, SolverError, assemble_stokes, stress_load, sym

CELL_FLUID_VISCOSITY = 0.5


class PenalizationError(RuntimeError):
    pass


def cell_viscosity(cell: CellGeometry, mu_pen: float) -> np.ndarray:
    return np.where(cell.solid, mu_pen, CELL_FLUID_VISCOSITY)


def affine_strain(i: int, j: int, d: int = 2, deviatoric=False) -> np.ndarray:
    """``D(P^{ij}) = sym(e^i (x) e^j)``, optionally minus its trace part."""
    E = np.zeros((d, d))
    E[i, j] += 0.5
    E[j, i] += 0.5
    if deviatoric and i == j:
        E -= np.eye(d) / d
    return E


@dataclass(frozen=True, eq=False)
class CellStokesField:
    velocity: np.ndarray  # (n_nodes, 2), zero mean
    pressure: np.ndarray  # (n_nodes,), zero mean
    strain: np.ndarray  # (n_elements, 2, 2): D(velocity)
    rigidity: float  # || rigid-constraint strain ||_{L2(Y_s)}
    divergence: float  # || div velocity ||_{L2(Y)}
    force: np.ndarray
    torque: float
    residual: float


class CellStokesSolver:
    """One factorization of the penalized periodic cell operator, reused for
    every chi and xi right-hand side."""

    def __init__(self, cell: CellGeometry, mu_pen=1e6, stab_beta=0.05, tol=1e-10):
        if cell.dim != 2:
            raise NotImplementedError("Stokes cell problems are implemented for d = 2 only")
        if cell.inclusion.kind == "laminate":
            raise ValueError("a laminate spans the cell; Stokes cell problems need a particle or no inclusion")
        self.cell = cell
        self.mu_pen = float(mu_pen)
        self.tol = tol
        self.mu = cell_viscosity(cell, mu_pen)
        self.op, _ = assemble_stokes(cell.mesh, self.mu, stab_beta=stab_beta, mu_ref=CELL_FLUID_VISCOSITY)
        self.solver = SaddleSolver(self.op)

    def _solve(self, data_stress, rigid_target):
        mesh = self.cell.mesh
        N = mesh.n_nodes
        rhs = np.zeros(3 * N)
        rhs[: 2 * N] = stress_load(mesh, data_stress)
        try:
            res = self.solver.solve(rhs, tol=self.tol)
        except SolverError as exc:
            raise SolverError(f"cell Stokes solve failed: {exc}", exc.residual, exc.iterations) from exc
        grad = mesh.element_gradient(res.velocity)  # (ne, 2, 2): [e, comp, deriv]
        strain = sym(grad)
        solid = self.cell.solid
        defect = rigid_target - strain
        rig = np.sqrt(np.sum(mesh.areas[solid] * np.sum(defect[solid] ** 2, axis=(1, 2))))
        div = np.sqrt(np.sum(mesh.areas * np.trace(grad, axis1=1, axis2=2) ** 2))
        stress = 2.0 * self.mu[:, None, None] * strain + data_stress
        if self.cell.inclusion.is_empty:
            force, torque = np.zeros(2), 0.0
        else:
            f, t = balance_integrals(mesh, solid, stress, res.pressure, self.cell.inclusion.center)
            force, torque = f[0], float(t[0])
        return CellStokesField(res.velocity, res.pressure, strain, float(rig), float(div), force, torque, res.residual)

    def chi(self, i: int, j: int) -> CellStokesField:
        """``chi^{ij}``: the affine data stress ``-2 mu D(P^{ij})`` drives the flow."""
        Ed = affine_strain(i, j, deviatoric=True)
        data = -2.0 * self.mu[:, None, None] * Ed
        return self._solve(data, np.broadcast_to(Ed, (self.cell.mesh.n_elements, 2, 2)))

    def xi(self, tau_ij: np.ndarray) -> CellStokesField:
        """``xi^{ij}`` driven by the cell Maxwell stress ``tau_ij`` (n_elements, 2, 2).

        Only ``sym(tau_ij)`` enters the weak form, so ``xi^{ij} = xi^{ji}``;
        the balance diagnostics use the same symmetric part.
        """
        tau = sym(np.asarray(tau_ij, dtype=float))
        return self._solve(tau, np.zeros((self.cell.mesh.n_elements, 2, 2)))


def solve_chi(cell: CellGeometry, i: int, j: int, mu_pen=1e6, stab_beta=0.05, tol=1e-10) -> CellStokesField:
    return CellStokesSolver(cell, mu_pen, stab_beta, tol).chi(i, j)


def solve_xi(cell: CellGeometry, tau_ref_ij, i: int, j: int, mu_pen=1e6, stab_beta=0.05, tol=1e-10) -> CellStokesField:
    return CellStokesSolver(cell, mu_pen, stab_beta, tol).xi(tau_ref_ij)


@dataclass(frozen=True, eq=False)
class StokesCellSolution:
    cell: CellGeometry
    mu_pen: float
    chi: list  # chi[i][j] -> CellStokesField
    xi: list

    @property
    def rigidity_chi(self) -> np.ndarray:
        return np.array([[f.rigidity for f in row] for row in self.chi])

    @property
    def rigidity_xi(self) -> np.ndarray:
        return np.array([[f.rigidity for f in row] for row in self.xi])

    def chi_strain(self) -> np.ndarray:
        """D_y chi^{ij} per element, shape (d, d, n_elements, 2, 2)."""
        return np.array([[f.strain for f in row] for row in self.chi])

    def xi_strain(self) -> np.ndarray:
        return np.array([[f.strain for f in row] for row in self.xi])

    def max_balance(self) -> tuple[float, float]:
        fields = [f for row in self.chi + self.xi for f in row]
        return max(float(np.linalg.norm(f.force)) for f in fields), max(abs(f.torque) for f in fields)


def solve_stokes_cells(cell: CellGeometry, tau_all: np.ndarray, mu_pen=1e6, stab_beta=0.05, tol=1e-10) -> StokesCellSolution:
    """All d^2 chi problems and d^2 xi problems on one factorization."""
    s = CellStokesSolver(cell, mu_pen, stab_beta, tol)
    d = cell.dim
    chi = [[s.chi(i, j) for j in range(d)] for i in range(d)]
    xi = [[s.xi(tau_all[i, j]) for j in range(d)] for i in range(d)]
    return StokesCellSolution(cell, float(mu_pen), chi, xi)


def effective_viscosity(cell: CellGeometry, chi_all) -> np.ndarray:
    """``N[i, j, m, n] = <D(P^{ij} - chi^{ij}) : D(P^{mn} - chi^{mn})>_Y``."""
    d = cell.dim
    w = cell.mesh.areas / cell.mesh.measure
    W = np.array([[affine_strain(i, j)[None] - chi_all[i][j].strain for j in range(d)] for i in range(d)])
    return np.einsum("e,ijekl,mnekl->ijmn", w, W, W)


def effective_coupling(cell: CellGeometry, xi_all, tau_all) -> np.ndarray:
    """``B[i, j] = <D(xi^{ij}) + tau^{ij}>_Y`` as a (d, d, d, d) array."""
    d = cell.dim
    w = cell.mesh.areas / cell.mesh.measure
    return np.array([[np.einsum("e,ekl->kl", w, xi_all[i][j].strain + tau_all[i, j]) for j in range(d)] for i in range(d)])


def legendre_hadamard_constant(N: np.ndarray, samples=10_000, seed=0) -> float:
    """Minimum of ``N[i,j,m,n] z_i z_m h_j h_n`` over random unit vectors z, h."""
    rng = np.random.default_rng(seed)
    d = N.shape[0]
    z = rng.normal(size=(samples, d))
    h = rng.normal(size=(samples, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    h /= np.linalg.norm(h, axis=1, keepdims=True)
    return float(np.min(np.einsum("ijmn,si,sm,sj,sn->s", N, z, z, h, h)))


def viscosity_symmetry_defect(N: np.ndarray) -> float:
    """Largest violation of N^{ij}_{mn} = N^{mn}_{ij} = N^{ji}_{mn} = N^{ij}_{nm}."""
    return float(max(np.abs(N - N.transpose(2, 3, 0, 1)).max(), np.abs(N - N.transpose(1, 0, 2, 3)).max(), np.abs(N - N.transpose(0, 1, 3, 2)).max()))


def penalization_order(mu_values, residuals) -> float:
    """Least-squares slope of -log(residual) against log(mu_pen)."""
    x = np.log(np.asarray(mu_values, dtype=float))
    y = np.log(np.asarray(residuals, dtype=float))
    return float(-np.polyfit(x, y, 1)[0])


def check_penalization(mu_values, residuals, factor=10.0):
    """Raise if a residual exceeds ``factor`` times the C / mu_pen trend fitted to the best run."""
    mu = np.asarray(mu_values, dtype=float)
    r = np.asarray(residuals, dtype=float)
    C = np.min(r * mu)
    bad = r > factor * C / mu
    if np.any(bad):
        raise PenalizationError(f"rigidity residual off the 1/mu_pen trend at mu_pen={mu[bad].tolist()}")


class InvariantError(RuntimeError):
    def __init__(self, name, message):
        super().__init__(f"{name}: {message}")
        self.name = name


@dataclass(frozen=True, eq=False)
class EffectiveTensors:
    """``A`` (d, d); ``N[i, j, m, n]`` = N^{ij}_{mn}; ``B[i, j]`` = the d x d matrix B^{ij}."""

    A: np.ndarray
    N: np.ndarray | None = None
    B: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


def compute_effective_tensors(cell: CellGeometry, scalar: ScalarCellSolution, stokes: StokesCellSolution | None) -> EffectiveTensors:
    A = effective_permeability(cell, scalar)
    if stokes is None:
        return EffectiveTensors(A)
    tau = all_maxwell_cell_stresses(cell, scalar)
    return EffectiveTensors(A, effective_viscosity(cell, stokes.chi), effective_coupling(cell, stokes.xi, tau))


def tensor_invariants(T: EffectiveTensors, bounds=None, lh_samples=10_000, seed=0) -> dict:
    """Measured invariant defects of the effective tensors.

    ``B_transpose_defect`` is ``max |B^{ij} - (B^{ji})^T|``: the cell Maxwell
    stress satisfies ``tau^{ij} = (tau^{ji})^T`` for symmetric a, so this
    is the exchange relation the coupling matrices obey.
    """
    A = T.A
    eig = np.linalg.eigvalsh(0.5 * (A + A.T))
    out = {"A_symmetry_defect": float(np.abs(A - A.T).max()), "A_eig_min": float(eig[0]), "A_eig_max": float(eig[-1])}
    if bounds is not None:
        lam, Lam = bounds
        out["A_bounds_excess"] = float(max(lam - eig[0], eig[-1] - Lam, 0.0))
    if T.N is not None:
        out["N_symmetry_defect"] = viscosity_symmetry_defect(T.N)
        out["N_legendre_hadamard"] = legendre_hadamard_constant(T.N, lh_samples, seed)
    if T.B is not None:
        out["B_transpose_defect"] = float(np.abs(T.B - T.B.transpose(1, 0, 3, 2)).max())
        out["B_trace_max"] = float(np.abs(np.einsum("ijkk->ij", T.B)).max())
    return out


def check_tensor_invariants(T: EffectiveTensors, bounds=None, tol=1e-8, b_tol=1e-6, lh_samples=10_000, seed=0) -> dict:
    """Raise :class:`InvariantError` naming the first violated invariant."""
    v = tensor_invariants(T, bounds, lh_samples, seed)
    scale = max(np.abs(T.A).max(), 1.0)
    if v["A_symmetry_defect"] > tol * scale:
        raise InvariantError("A_symmetry", f"defect {v['A_symmetry_defect']:.3e}")
    if v["A_eig_min"] <= 0.0:
        raise InvariantError("A_ellipticity", f"min eigenvalue {v['A_eig_min']:.3e}")
    if bounds is not None and v["A_bounds_excess"] > tol * scale:
        raise InvariantError("A_bounds", f"eigenvalues [{v['A_eig_min']:.6g}, {v['A_eig_max']:.6g}] outside {tuple(bounds)}")
    if T.N is not None:
        if v["N_symmetry_defect"] > tol * max(np.abs(T.N).max(), 1.0):
            raise InvariantError("N_symmetry", f"defect {v['N_symmetry_defect']:.3e}")
        if v["N_legendre_hadamard"] <= 0.0:
            raise InvariantError("N_legendre_hadamard", f"beta {v['N_legendre_hadamard']:.3e}")
    if T.B is not None and v["B_transpose_defect"] > b_tol * max(np.abs(T.B).max(), 1.0):
        raise InvariantError("B_exchange", f"defect {v['B_transpose_defect']:.3e}")
    return v
