import numpy as np
import pytest
import scipy.sparse as sp

from maghomog.numerics import (
    CompatibilityError,
    EllipticityError,
    Field,
    Mesh,
    SaddleSolver,
    SolverError,
    assemble_scalar,
    assemble_stokes,
    body_load,
    field_norms,
    solve_dirichlet,
    solve_spd,
    subsample_points,
    symmetry_defect,
)


def _random_spd_field(rng, ne):
    L = rng.normal(size=(ne, 2, 2))
    return np.einsum("eij,ekj->eik", L, L) + 0.1 * np.eye(2)


def test_mesh_counts_and_areas():
    m = Mesh(8, periodic=True)
    assert m.n_nodes == 64 and m.n_elements == 128
    assert np.isclose(m.areas.sum(), 1.0)
    d = Mesh(8, periodic=False)
    assert d.n_nodes == 81
    assert d.boundary_nodes.size == 32
    with pytest.raises(ValueError):
        Mesh(7, periodic=True)


def test_locate_and_interpolate_linear_exact(rng):
    m = Mesh(10, periodic=False)
    pts = rng.uniform(0, 1, size=(200, 2))
    e = m.locate(pts)
    # each point lies inside its element (barycentric coordinates nonnegative)
    v = m.vertex_coords[e]
    lam12 = np.einsum("eal,el->ea", m.grads[e][:, 1:], pts - v[:, 0])
    lam = np.column_stack([1 - lam12.sum(1), lam12])
    assert lam.min() > -1e-12
    f = 2.0 * m.nodes[:, 0] - 3.0 * m.nodes[:, 1] + 0.5
    assert np.allclose(m.interpolate(f, pts), 2 * pts[:, 0] - 3 * pts[:, 1] + 0.5)


def test_periodic_locate_wraps():
    m = Mesh(8, periodic=True)
    p = np.array([[0.3, 0.7]])
    assert m.locate(p)[0] == m.locate(p + [2.0, -1.0])[0]


def test_galerkin_symmetry_random_coefficients(rng):
    m = Mesh(12, periodic=True)
    for _ in range(20):
        K, _ = assemble_scalar(m, _random_spd_field(rng, m.n_elements))
        assert symmetry_defect(K) <= 1e-14


def test_rejects_bad_coefficients():
    m = Mesh(4, periodic=False)
    with pytest.raises(EllipticityError):
        assemble_scalar(m, np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(EllipticityError):
        assemble_scalar(m, -np.eye(2))


def test_constant_in_periodic_kernel():
    m = Mesh(8, periodic=True)
    K, _ = assemble_scalar(m, np.eye(2))
    assert np.abs(K @ np.ones(m.n_nodes)).max() < 1e-13


def test_cg_zero_mean_and_compatibility():
    m = Mesh(16, periodic=True)
    K, _ = assemble_scalar(m, np.eye(2))
    x = np.sin(2 * np.pi * m.nodes[:, 0])
    b = K @ x
    out = solve_spd(K, b, tol=1e-12, constraint="zero-mean")
    assert out.residual <= 1e-12
    assert abs(out.x.mean()) < 1e-14
    assert np.allclose(out.x, x - x.mean(), atol=1e-9)
    with pytest.raises(CompatibilityError):
        solve_spd(K, b + 1.0, constraint="zero-mean")


def test_cg_iteration_cap_reports_residual():
    m = Mesh(32, periodic=False)
    K, _ = assemble_scalar(m, np.eye(2))
    Kii = K[m.interior_nodes][:, m.interior_nodes]
    with pytest.raises(SolverError) as exc:
        solve_spd(Kii, np.ones(Kii.shape[0]), tol=1e-12, max_iter=3)
    assert exc.value.residual > 1e-12 and exc.value.iterations == 3


def _scalar_error(n):
    m = Mesh(n, periodic=False)
    exact = lambda x: np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])  # noqa: E731
    f = lambda x: 2 * np.pi**2 * exact(x)  # noqa: E731
    out = solve_dirichlet(m, np.eye(2), source=f, data=0.0, tol=1e-12)
    pts = subsample_points(m)
    uh = m.interpolate(out.u, pts.reshape(-1, 2)).reshape(pts.shape[:2])
    err = uh - exact(pts.reshape(-1, 2)).reshape(pts.shape[:2])
    return np.sqrt(np.sum(m.areas[:, None] / 4 * err**2))


def test_scalar_manufactured_order():
    errs = [_scalar_error(n) for n in (16, 32, 64)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() >= 1.8, orders


def _stokes_manufactured(n, mu=1.0):
    """u = curl psi, psi = x^2(1-x)^2 y^2(1-y)^2; p = sin(pi x) cos(pi y)."""
    X, Y = (lambda x: x[:, 0]), (lambda x: x[:, 1])

    def u(x):
        a, b = X(x), Y(x)
        fa, fb = a**2 * (1 - a) ** 2, b**2 * (1 - b) ** 2
        dfa, dfb = 2 * a * (1 - a) * (1 - 2 * a), 2 * b * (1 - b) * (1 - 2 * b)
        return np.column_stack([fa * dfb, -dfa * fb])

    def force(x):
        a, b = X(x), Y(x)
        fa, fb = a**2 * (1 - a) ** 2, b**2 * (1 - b) ** 2
        dfa, dfb = 2 * a * (1 - a) * (1 - 2 * a), 2 * b * (1 - b) * (1 - 2 * b)
        d2fa, d2fb = 2 - 12 * a + 12 * a**2, 2 - 12 * b + 12 * b**2
        d3fa, d3fb = -12 + 24 * a, -12 + 24 * b
        lap_u1 = d2fa * dfb + fa * d3fb
        lap_u2 = -(d3fa * fb + dfa * d2fb)
        px = np.pi * np.cos(np.pi * a) * np.cos(np.pi * b)
        py = -np.pi * np.sin(np.pi * a) * np.sin(np.pi * b)
        return np.column_stack([-mu * lap_u1 + px, -mu * lap_u2 + py])

    return Mesh(n, periodic=False), u, force


def _stokes_error(n):
    mu = 1.0
    m, u, force = _stokes_manufactured(n, mu)
    # -Div[2 mu D(u)] = -mu Lap u for divergence-free u
    op, _ = assemble_stokes(m, viscosity=mu)
    rhs = np.zeros(3 * m.n_nodes)
    rhs[: 2 * m.n_nodes] = body_load(m, force)
    res = SaddleSolver(op).solve(rhs, tol=1e-10)
    pts = subsample_points(m).reshape(-1, 2)
    uh = m.interpolate(res.velocity, pts)
    err = (uh - u(pts)).reshape(m.n_elements, 4, 2)
    return np.sqrt(np.sum(m.areas[:, None] / 4 * np.sum(err**2, axis=2))), res.residual


def test_stokes_manufactured_velocity_order():
    out = [_stokes_error(n) for n in (16, 32, 64)]
    errs = np.array([e for e, _ in out])
    assert max(r for _, r in out) <= 1e-10
    orders = np.log2(errs[:-1] / errs[1:])
    assert orders.min() >= 1.5, orders


def test_saddle_periodic_projection_and_compatibility():
    m = Mesh(8, periodic=True)
    op, _ = assemble_stokes(m, viscosity=0.5)
    N = m.n_nodes
    rhs = np.zeros(3 * N)
    rhs[:N] = 1.0  # translation component
    with pytest.raises(CompatibilityError):
        SaddleSolver(op).solve(rhs)
    x = m.nodes
    rhs[:] = 0.0
    rhs[: 2 * N] = body_load(m, np.column_stack([np.sin(2 * np.pi * x[:, 1]), 0 * x[:, 0]])[m.elements].mean(axis=1))
    res = SaddleSolver(op).solve(rhs, tol=1e-10)
    assert res.residual <= 1e-10
    w = m.lumped_mass
    assert np.abs(w @ res.velocity).max() < 1e-14
    assert abs(w @ res.pressure) < 1e-14


def test_saddle_minres_matches_direct():
    m = Mesh(8, periodic=False)
    op, rhs = assemble_stokes(m, viscosity=1.0, body_force=lambda x: np.column_stack([x[:, 1] ** 2, -x[:, 0]]))
    a = SaddleSolver(op).solve(rhs, tol=1e-10)
    b = SaddleSolver(op, method="minres").solve(rhs, tol=1e-10)
    assert np.allclose(a.velocity, b.velocity, atol=1e-8)


def test_field_shapes_and_norms():
    m = Mesh(8, periodic=False)
    f = Field(m, m.nodes[:, 0])
    assert np.isclose(field_norms(f, "L2"), np.sqrt(1 / 3))
    assert np.isclose(field_norms(f, "H1-semi"), 1.0)
    assert np.isclose(field_norms(f, "sup"), 1.0)
    with pytest.raises(ValueError):
        Field(m, np.zeros(3))
    assert f.gradient().location == "element"
