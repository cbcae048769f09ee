"""Fine-scale problems on Omega = (0,1)^2 with an epsilon-periodic microstructure:
the magnetic potential, the Dirichlet boundary correctors, the Maxwell
stress and the penalized suspension Stokes flow (one-way coupled)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .geometry import MacroGeometry
from .interface import balance_integrals
from .numerics import SaddleSolver, SolverError, assemble_stokes, solve_dirichlet, sym


class UnderResolvedWarning(UserWarning):
    pass


def _as_callable(v, ncomp=None):
    if callable(v) or v is None:
        return v
    c = np.asarray(v, dtype=float)
    if ncomp is None:
        return lambda x: np.full(np.shape(x)[0], float(c))
    return lambda x: np.broadcast_to(c, (np.shape(x)[0], ncomp))


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensionless groups and data of the coupled problem.

    ``g_body``: body force (constant 2-vector or callable(points) -> (n, 2)),
    ``f_source``: scalar source, ``k_bc``: Dirichlet data for the potential.
    """

    Re: float = 1.0
    Fr: float = 1.0
    S: float = 1.0
    g_body: object = (0.0, -1.0)
    f_source: object = 1.0
    k_bc: object = field(default=None)

    def __post_init__(self):
        for name in ("Re", "Fr"):
            if not float(getattr(self, name)) > 0.0:
                raise ValueError(f"{name} must be positive")
        if not float(self.S) >= 0.0:
            raise ValueError("S must be non-negative")
        if self.k_bc is None:
            object.__setattr__(self, "k_bc", lambda x: np.asarray(x)[:, 0])

    @property
    def fluid_viscosity(self) -> float:
        """``mu`` in the ``2 mu D(u)`` law: the fluid stress is (2/Re) D(u)."""
        return 1.0 / self.Re

    def body_force(self, x) -> np.ndarray:
        g = _as_callable(self.g_body, 2)
        return np.asarray(g(x), dtype=float) / self.Fr**2


@dataclass(frozen=True, eq=False)
class FineScaleSolution:
    macro: MacroGeometry
    phi: np.ndarray  # nodal
    grad_phi: np.ndarray  # (n_elements, 2)
    residual: float
    iterations: int
    energy_residual: float
    valid: bool = True
    u: np.ndarray | None = None  # (n_nodes, 2)
    p: np.ndarray | None = None
    tau: np.ndarray | None = None  # (n_elements, 2, 2)
    diagnostics: dict = field(default_factory=dict)

    @property
    def epsilon(self) -> float:
        return self.macro.epsilon

    @property
    def mesh(self):
        return self.macro.mesh

    @property
    def strain(self) -> np.ndarray:
        if self.u is None:
            raise ValueError("no velocity on this solution")
        return sym(self.mesh.element_gradient(self.u))


def solve_scalar_finescale(macro: MacroGeometry, f=1.0, g=None, tol=1e-8) -> FineScaleSolution:
    """``-Div[a(x/eps) grad phi] = f`` in Omega, ``phi = g`` on the boundary (default ``g = x_1``)."""
    valid = not macro.under_resolved
    if not valid:
        warnings.warn(f"{macro.resolution_per_cell} elements per cell is below 8: solution flagged invalid", UnderResolvedWarning, stacklevel=2)
    g = (lambda x: np.asarray(x)[:, 0]) if g is None else g
    mesh = macro.mesh
    try:
        out = solve_dirichlet(mesh, macro.element_coeff, source=f, data=g, tol=tol)
    except SolverError as exc:
        raise SolverError(f"fine-scale potential (eps={macro.epsilon:g}): {exc}", exc.residual, exc.iterations) from exc
    grad = mesh.element_gradient(out.u)
    return FineScaleSolution(macro, out.u, grad, out.residual, out.iterations, out.energy_residual, valid)


def dirichlet_corrector(macro: MacroGeometry, i: int, tol=1e-8) -> FineScaleSolution:
    """``Phi^{i,eps}``: a(x/eps)-harmonic with boundary data x_i (0-based i)."""
    return solve_scalar_finescale(macro, f=None, g=lambda x: np.asarray(x)[:, i], tol=tol)


def gradient_sup(sol: FineScaleSolution) -> float:
    return float(np.linalg.norm(sol.grad_phi, axis=1).max())


def maxwell_stress_field(macro: MacroGeometry, sol: FineScaleSolution, S: float) -> np.ndarray:
    """``S a(x/eps) (grad phi (x) grad phi - |grad phi|^2 I / 2)`` per element."""
    g = sol.grad_phi
    inner = np.einsum("em,en->emn", g, g) - 0.5 * np.einsum("em,em->e", g, g)[:, None, None] * np.eye(2)
    return S * np.einsum("emk,ekn->emn", macro.element_coeff, inner)


def particle_centers(macro: MacroGeometry) -> np.ndarray:
    m = macro.m
    iy, ix = np.divmod(np.arange(m * m), m)
    c = np.asarray(macro.cell.inclusion.center, dtype=float)
    return (np.column_stack([ix, iy]) + c) / m


def fluid_pressure_weight(macro: MacroGeometry) -> np.ndarray:
    mesh = macro.mesh
    w = np.zeros(mesh.n_nodes)
    fl = ~macro.solid
    np.add.at(w, mesh.elements[fl], np.repeat(mesh.areas[fl, None] / 3.0, 3, axis=1))
    return w


def solve_suspension_finescale(macro: MacroGeometry, params: PhysicalParams, sol: FineScaleSolution, mu_pen=1e6, tol=1e-8, stab_beta=0.05) -> FineScaleSolution:
    """Penalized Stokes flow ``-Div[(2/Re) D(u) - p I + tau(phi)] = g / Fr^2``, ``u = 0`` on the boundary.

    Particles carry viscosity ``mu_pen``. The Maxwell stress and the body
    force act on every element; ``p`` has zero mean over the fluid.
    """
    if sol.macro is not macro:
        raise ValueError("potential was solved on a different macro geometry")
    mesh = macro.mesh
    mu_f = params.fluid_viscosity
    mu = np.where(macro.solid, mu_pen, mu_f)
    tau = maxwell_stress_field(macro, sol, params.S)
    force = params.body_force(mesh.centroids)
    op, rhs = assemble_stokes(mesh, mu, extra_stress=tau, body_force=force, stab_beta=stab_beta, mu_ref=mu_f)
    solver = SaddleSolver(op, pressure_mean_weight=fluid_pressure_weight(macro))
    try:
        res = solver.solve(rhs, tol=tol)
    except SolverError as exc:
        raise SolverError(f"fine-scale Stokes (eps={macro.epsilon:g}): {exc}", exc.residual, exc.iterations) from exc
    strain = sym(mesh.element_gradient(res.velocity))
    diag = dict(sol.diagnostics)
    diag.update(stokes_residual=res.residual, factor_seconds=solver.factor_seconds, mu_pen=float(mu_pen))
    if macro.solid.any():
        e2 = mesh.areas * np.sum(strain**2, axis=(1, 2))
        pid = macro.particle_id
        per = np.sqrt(np.bincount(pid[macro.solid], weights=e2[macro.solid], minlength=macro.m**2))
        diag["rigidity_per_particle"] = per
        diag["rigidity_ratio"] = float(np.sqrt(e2[macro.solid].sum() / max(e2.sum(), 1e-300)))
        stress = 2.0 * mu[:, None, None] * strain + sym(tau)
        f, t = balance_integrals(mesh, macro.solid, stress, res.pressure, particle_centers(macro), np.where(pid < 0, 0, pid))
        diag["balance_force"] = f
        diag["balance_torque"] = t
    return replace(sol, u=res.velocity, p=res.pressure, tau=tau, diagnostics=diag)
