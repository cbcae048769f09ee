"""Galerkin assembly of P1 scalar diffusion and stabilized P1-P1 Stokes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh

# 3-point edge-midpoint rule: barycentric coordinates, exact for quadratics
_MIDPOINT_BARY = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])


class EllipticityError(ValueError):
    pass


def element_values(mesh: Mesh, sampler, shape=()) -> np.ndarray:
    """Broadcast a constant, per-element array or callable(centroids) to elements."""
    if callable(sampler):
        out = np.asarray(sampler(mesh.centroids), dtype=float)
    else:
        out = np.asarray(sampler, dtype=float)
    return np.broadcast_to(out, (mesh.n_elements,) + shape).copy()


def _coo(rows, cols, vals, shape):
    return sp.coo_matrix(
        (np.concatenate([v.ravel() for v in vals]), (np.concatenate([r.ravel() for r in rows]), np.concatenate([c.ravel() for c in cols]))),
        shape=shape,
    ).tocsr()


def _pairs(e_rows, e_cols):
    return np.broadcast_to(e_rows[:, :, None], e_rows.shape + (e_cols.shape[1],)), np.broadcast_to(
        e_cols[:, None, :], (e_cols.shape[0], e_rows.shape[1], e_cols.shape[1])
    )


def load_vector(mesh: Mesh, source, scale=1.0) -> np.ndarray:
    """``int f N_a`` with the edge-midpoint rule; ``source`` is callable(points) or constant."""
    if source is None:
        return np.zeros(mesh.n_nodes)
    pts = np.einsum("qa,eak->eqk", _MIDPOINT_BARY, mesh.vertex_coords)
    if callable(source):
        fq = np.asarray(source(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape[:2])
    else:
        fq = np.full(pts.shape[:2], float(source))
    contrib = np.einsum("eq,qa->ea", fq, _MIDPOINT_BARY) * (mesh.areas[:, None] / 3.0) * scale
    b = np.zeros(mesh.n_nodes)
    np.add.at(b, mesh.elements, contrib)
    return b


def assemble_scalar(mesh: Mesh, coeff, source=None, flux=None):
    """Stiffness ``K_ab = sum_T |T| a_T grad N_a . grad N_b`` and a load vector.

    ``coeff`` is a (2, 2) matrix, per-element (n_elements, 2, 2) array or a
    callable of element centroids. The load is ``int f N_a`` for ``source``
    plus ``-int F . grad N_a`` for a per-element ``flux`` F.
    """
    a = element_values(mesh, coeff, (2, 2))
    if np.max(np.abs(a - np.swapaxes(a, 1, 2))) > 1e-12 * max(np.max(np.abs(a)), 1.0):
        raise EllipticityError("element coefficient is not symmetric")
    lam_min = np.linalg.eigvalsh(a)[:, 0]
    if np.any(lam_min <= 0.0):
        raise EllipticityError(f"element coefficient not elliptic (min eigenvalue {lam_min.min():.3e})")

    G = mesh.grads
    ke = mesh.areas[:, None, None] * np.einsum("eak,ekl,ebl->eab", G, a, G)
    r, c = _pairs(mesh.elements, mesh.elements)
    K = _coo([r], [c], [ke], (mesh.n_nodes, mesh.n_nodes))

    b = load_vector(mesh, source)
    if flux is not None:
        F = element_values(mesh, flux, (2,))
        np.add.at(b, mesh.elements, -mesh.areas[:, None] * np.einsum("eak,ek->ea", G, F))
    return K, b


def symmetry_defect(K) -> float:
    """``max|K - K^T| / max|K|``."""
    K = sp.csr_matrix(K)
    d = abs(K - K.T)
    scale = abs(K).max()
    return float(d.max() / scale) if scale > 0 else 0.0


# ----------------------------------------------------------------------------
# Stokes


@dataclass(frozen=True, eq=False)
class SaddleOperator:
    """Blocks of ``[[A, B^T], [B, -C]]`` for velocity (x then y) and pressure.

    ``A`` is the viscous block, ``B`` the (negative, weak) divergence and
    ``C`` the positive semidefinite pressure stabilization.
    """

    mesh: Mesh
    A: sp.csr_matrix
    B: sp.csr_matrix
    C: sp.csr_matrix

    @property
    def n_velocity(self) -> int:
        return self.A.shape[0]

    @property
    def n_pressure(self) -> int:
        return self.C.shape[0]

    def full(self) -> sp.csr_matrix:
        return sp.bmat([[self.A, self.B.T], [self.B, -self.C]], format="csr")


def strain_basis(mesh: Mesh) -> np.ndarray:
    """``D(N_a e_k)`` per element, shape (n_elements, 3, 2, 2, 2) as [e, a, k, i, j]."""
    G = mesh.grads
    eye = np.eye(2)
    grad = np.einsum("ki,eaj->eakij", eye, G)
    return 0.5 * (grad + np.swapaxes(grad, -1, -2))


def _velocity_dofs(mesh: Mesh) -> np.ndarray:
    # (n_elements, 3, 2): dof of node a, component k
    N = mesh.n_nodes
    return mesh.elements[:, :, None] + N * np.arange(2)[None, None, :]


def stress_load(mesh: Mesh, stress) -> np.ndarray:
    """``-int tau : D(v)`` for a per-element stress, as a velocity vector (x then y).

    Only the symmetric part of ``tau`` enters.
    """
    tau = element_values(mesh, stress, (2, 2))
    ts = 0.5 * (tau + np.swapaxes(tau, 1, 2))
    contrib = -mesh.areas[:, None, None] * np.einsum("eki,eai->eak", ts, mesh.grads)
    out = np.zeros(2 * mesh.n_nodes)
    np.add.at(out, _velocity_dofs(mesh), contrib)
    return out


def body_load(mesh: Mesh, force) -> np.ndarray:
    """``int f . v`` for a constant, per-element or callable(points) body force."""
    out = np.zeros(2 * mesh.n_nodes)
    if force is None:
        return out
    if callable(force):
        for k in range(2):
            out[k * mesh.n_nodes : (k + 1) * mesh.n_nodes] = load_vector(mesh, lambda x, k=k: np.asarray(force(x))[..., k])
        return out
    f = element_values(mesh, force, (2,))
    contrib = (mesh.areas / 3.0)[:, None, None] * f[:, None, :]
    np.add.at(out, _velocity_dofs(mesh), np.broadcast_to(contrib, (mesh.n_elements, 3, 2)))
    return out


def assemble_stokes(mesh: Mesh, viscosity=1.0, extra_stress=None, body_force=None, stab_beta=0.05, mu_ref=None, viscosity_tensor=None):
    """Stabilized equal-order discretization of ``-Div[2 mu D(u) - p I + tau] = f``, ``Div u = 0``.

    Weak form: ``int 2 mu D(u):D(v) - int p div v = -int tau:D(v) + int f.v``
    and ``-int q div u - beta h^2/mu_ref int grad p . grad q = 0``.

    ``viscosity_tensor`` (shape (2, 2, 2, 2), stress_mn = C[m, n, i, j] D_ij)
    replaces the isotropic ``2 mu`` law when given. Returns the operator and
    the right-hand side (velocity part followed by zero pressure part).
    """
    N = mesh.n_nodes
    ar = mesh.areas
    G = mesh.grads
    vdof = _velocity_dofs(mesh).reshape(mesh.n_elements, 6)
    if viscosity_tensor is None:
        mu = element_values(mesh, viscosity)
        if np.any(mu <= 0.0):
            raise ValueError("viscosity must be positive")
        GG = np.einsum("eak,ebk->eab", G, G)
        # 2 D(N_a e_k):D(N_b e_l) = delta_kl grad N_a.grad N_b + d_l N_a d_k N_b
        ke = np.einsum("kl,eab->eakbl", np.eye(2), GG) + np.einsum("eal,ebk->eakbl", G, G)
        ke = (mu * ar)[:, None, None, None, None] * ke
        mu_min = float(mu.min())
    else:
        Cv = np.asarray(viscosity_tensor, dtype=float)
        Dv = strain_basis(mesh)
        ke = ar[:, None, None, None, None] * np.einsum("eakmn,mnij,ebl ij->eakbl".replace(" ", ""), Dv, Cv, Dv)
        mu_min = 0.5 * float(np.min(np.linalg.eigvalsh(_kelvin(Cv))))
        if mu_min <= 0.0:
            raise ValueError("viscosity tensor is not positive on symmetric strains")
    ke = ke.reshape(mesh.n_elements, 6, 6)
    r, c = _pairs(vdof, vdof)
    A = _coo([r], [c], [ke], (2 * N, 2 * N))

    # B_{c,(b,l)} = -int N_c d_l N_b
    be = -(ar / 3.0)[:, None, None, None] * np.broadcast_to(G[:, None, :, :], (mesh.n_elements, 3, 3, 2))
    r, c = _pairs(mesh.elements, vdof)
    B = _coo([r], [c], [be.reshape(mesh.n_elements, 3, 6)], (N, 2 * N))

    mu_ref = mu_min if mu_ref is None else mu_ref
    ce = (stab_beta * mesh.h**2 / mu_ref) * ar[:, None, None] * np.einsum("eak,ebk->eab", G, G)
    r, c = _pairs(mesh.elements, mesh.elements)
    C = _coo([r], [c], [ce], (N, N))

    rhs = np.zeros(3 * N)
    if extra_stress is not None:
        rhs[: 2 * N] += stress_load(mesh, extra_stress)
    rhs[: 2 * N] += body_load(mesh, body_force)
    return SaddleOperator(mesh, A, B, C), rhs


def _kelvin(C):
    # symmetric 4th-order tensor on symmetric 2x2 matrices -> 3x3 Kelvin matrix
    idx = [(0, 0), (1, 1), (0, 1)]
    w = [1.0, 1.0, np.sqrt(2.0)]
    return np.array([[w[p] * w[q] * C[i, j, k, l] for q, (k, l) in enumerate(idx)] for p, (i, j) in enumerate(idx)])
