"""Linear solvers: projected Jacobi-PCG for SPD systems, and a direct
quasi-definite factorization (or MINRES) for stabilized saddle systems."""

from __future__ import annotations

import logging
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import SaddleOperator

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Iteration cap exceeded or residual target missed."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class CompatibilityError(ValueError):
    """Right-hand side has a component along the operator's kernel."""


class BreakdownError(SolverError):
    pass


class CGResult(NamedTuple):
    x: np.ndarray
    residual: float
    iterations: int


def solve_spd(K, b, tol=1e-10, constraint="none", x0=None, max_iter=None, max_iter_factor=50.0) -> CGResult:
    """Jacobi-preconditioned conjugate gradients.

    With ``constraint="zero-mean"`` the operator is assumed to have the
    constant vector in its kernel; the right-hand side must be compatible
    and every iterate, residual and preconditioned residual is projected
    onto the mean-zero subspace. Returns the solution with the true
    relative residual ``|Kx - b| / |b|``.
    """
    K = sp.csr_matrix(K)
    b = np.asarray(b, dtype=float)
    n = b.size
    if constraint not in ("none", "zero-mean"):
        raise ValueError(f"unknown constraint {constraint!r}")
    project = constraint == "zero-mean"
    if project and abs(b.mean()) > 1e-10 * max(np.linalg.norm(b), 1e-300):
        raise CompatibilityError(f"rhs mean {b.mean():.3e} is not zero under zero-mean constraint")
    if max_iter is None:
        max_iter = int(np.ceil(max_iter_factor * np.sqrt(n)))

    def P(v):
        return v - v.mean() if project else v

    b = P(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return CGResult(np.zeros(n), 0.0, 0)
    dinv = 1.0 / K.diagonal()
    x = np.zeros(n) if x0 is None else P(np.array(x0, dtype=float))
    r = P(b - K @ x)
    z = P(dinv * r)
    p = z.copy()
    rz = r @ z
    it = 0
    rel = np.linalg.norm(r) / bnorm
    while rel > tol:
        if it >= max_iter:
            raise SolverError(f"CG did not reach tol {tol:.1e} in {max_iter} iterations (residual {rel:.3e})", rel, it)
        Kp = K @ p
        pKp = p @ Kp
        if pKp <= 0.0:
            raise BreakdownError("CG breakdown: operator not positive definite", rel, it)
        alpha = rz / pKp
        x += alpha * p
        r -= alpha * Kp
        if project:
            r -= r.mean()
        it += 1
        if it % 50 == 0:
            r = P(b - K @ x)
        rel = np.linalg.norm(r) / bnorm
        z = P(dinv * r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    x = P(x)
    true = np.linalg.norm(P(b - K @ x)) / bnorm
    if true > tol:
        # recurrence drift; polish from the current iterate
        return solve_spd(K, b, tol, constraint, x0=x, max_iter=max_iter - it)
    return CGResult(x, float(true), it)


# ----------------------------------------------------------------------------
# saddle systems


class SaddleResult(NamedTuple):
    velocity: np.ndarray  # (n_nodes, 2)
    pressure: np.ndarray  # (n_nodes,)
    residual: float
    iterations: int


def _backward_error(r, denom) -> float:
    mask = denom > 0.0
    if not np.any(mask):
        return 0.0
    return float(np.max(np.abs(r[mask]) / denom[mask]))


class SaddleSolver:
    """Reusable solver for one :class:`SaddleOperator`.

    Periodic meshes: the two velocity translations and the pressure constant
    span the kernel; one dof of each is pinned during the solve and the
    returned velocity and pressure are shifted to zero mean. Dirichlet
    meshes: boundary velocities are eliminated and prescribed; one pressure
    dof is pinned and the pressure returned with zero mean over ``pressure_mean_weight``.

    The reported residual is the componentwise relative residual
    ``max_i |b - Kx|_i / (|K||x| + |b|)_i``. Penalized rows carry entries of
    size ``mu_pen``, and a plain ``|b - Kx| / |b|`` would then measure
    round-off in those rows rather than the accuracy of the solve.

    ``method="direct"`` factorizes the pinned symmetric quasi-definite
    matrix once with diagonal pivoting and a symmetric minimum-degree
    ordering, then refines iteratively; ``method="minres"`` runs
    block-Jacobi preconditioned MINRES.
    """

    def __init__(self, op: SaddleOperator, method="direct", pressure_mean_weight=None):
        self.op = op
        self.method = method
        mesh = op.mesh
        N = mesh.n_nodes
        self.N = N
        self.K = op.full().tocsr()
        if mesh.periodic:
            fixed_v = np.array([0, N])
            self.kernel_dofs = fixed_v
        else:
            bn = mesh.boundary_nodes
            fixed_v = np.concatenate([bn, bn + N])
            self.kernel_dofs = np.empty(0, dtype=np.int64)
        pin_p = 2 * N + (0 if mesh.periodic else int(mesh.interior_nodes[0]))
        self.velocity_fixed = fixed_v
        self.pinned = np.concatenate([fixed_v, [pin_p]])
        mask = np.ones(3 * N, dtype=bool)
        mask[self.pinned] = False
        self.free = np.flatnonzero(mask)
        # the pinned rows are linear combinations of the others for a
        # compatible rhs, and prescribed velocity rows carry no equation
        self.check_rows = self.free
        self.Kff = self.K[self.free][:, self.free].tocsc()
        self.absK = abs(self.K)
        self._lu = None
        w = mesh.lumped_mass if pressure_mean_weight is None else np.asarray(pressure_mean_weight, dtype=float)
        self.p_weight = w / w.sum()
        self.factor_seconds = 0.0

    def _factor(self):
        if self._lu is None:
            import time

            t0 = time.perf_counter()
            try:
                self._lu = spla.splu(self.Kff, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options=dict(SymmetricMode=True))
            except RuntimeError as exc:
                raise BreakdownError(f"saddle factorization broke down: {exc}") from exc
            self.factor_seconds = time.perf_counter() - t0
            log.debug("saddle LU: %d dofs, fill %d, %.2fs", self.Kff.shape[0], self._lu.L.nnz + self._lu.U.nnz, self.factor_seconds)
        return self._lu

    def check_compatible(self, rhs):
        N = self.N
        pres = rhs[2 * N :]
        scale = max(np.linalg.norm(rhs), 1e-300)
        if abs(pres.sum()) > 1e-10 * scale:
            raise CompatibilityError("rhs has a component along the pressure-constant mode")
        if self.op.mesh.periodic:
            for k in range(2):
                if abs(rhs[k * N : (k + 1) * N].sum()) > 1e-9 * scale:
                    raise CompatibilityError("rhs has a component along a rigid translation")

    def solve(self, rhs, tol=1e-10, velocity_bc=None, max_refine=6) -> SaddleResult:
        N = self.N
        rhs = np.asarray(rhs, dtype=float)
        self.check_compatible(rhs)
        x = np.zeros(3 * N)
        if velocity_bc is not None and not self.op.mesh.periodic:
            ub = np.asarray(velocity_bc, dtype=float).reshape(N, 2)
            x[self.velocity_fixed] = np.concatenate([ub[:, 0], ub[:, 1]])[self.velocity_fixed]
        b = rhs - self.K @ x
        if not np.any(b[self.check_rows]):
            return self._finish(self._project(x), 0.0, 0)
        bf = b[self.free]
        if self.method == "direct":
            lu = self._factor()
            y = lu.solve(bf)
            iters = 1
            absKff = abs(self.Kff)
            last = np.inf
            for _ in range(max_refine):
                r = bf - self.Kff @ y
                err = _backward_error(r, absKff @ np.abs(y) + np.abs(bf))
                if err <= 0.1 * tol or err > 0.5 * last:
                    break
                last = err
                y += lu.solve(r)
                iters += 1
        elif self.method == "minres":
            M = sp.diags(1.0 / np.abs(self.Kff.diagonal()))
            its = [0]
            absKff = abs(self.Kff)
            y = np.zeros_like(bf)
            # restarted on the true residual until the componentwise target is met
            for _ in range(max_refine):
                r = bf - self.Kff @ y
                if _backward_error(r, absKff @ np.abs(y) + np.abs(bf)) <= tol:
                    break
                dy, info = spla.minres(self.Kff, r, M=M, rtol=1e-3 * tol, maxiter=20 * self.Kff.shape[0], callback=lambda _: its.__setitem__(0, its[0] + 1))
                if info != 0:
                    raise SolverError(f"MINRES failed to converge (info={info})", iterations=its[0])
                y += dy
            iters = its[0]
        else:
            raise ValueError(f"unknown saddle method {self.method!r}")
        x[self.free] = y
        x = self._project(x)
        rows = self.check_rows
        r = (rhs - self.K @ x)[rows]
        rel = _backward_error(r, (self.absK @ np.abs(x))[rows] + np.abs(rhs[rows]))
        if rel > tol:
            raise SolverError(f"saddle residual {rel:.3e} exceeds tol {tol:.1e}", rel, iters)
        return self._finish(x, rel, iters)

    def _project(self, x):
        N = self.N
        x = x.copy()
        mesh = self.op.mesh
        if mesh.periodic:
            w = mesh.lumped_mass / mesh.lumped_mass.sum()
            for k in range(2):
                x[k * N : (k + 1) * N] -= w @ x[k * N : (k + 1) * N]
        x[2 * N :] -= self.p_weight @ x[2 * N :]
        return x

    def _finish(self, x, rel, iters):
        N = self.N
        u = np.column_stack([x[:N], x[N : 2 * N]])
        return SaddleResult(u, x[2 * N :].copy(), float(rel), iters)


def solve_saddle(op: SaddleOperator, rhs, tol=1e-10, velocity_bc=None, method="direct", pressure_mean_weight=None) -> SaddleResult:
    return SaddleSolver(op, method, pressure_mean_weight).solve(rhs, tol, velocity_bc)
