import warnings

import numpy as np
import pytest

from maghomog.geometry import CoefficientField, InclusionSpec, build_macro_domain, build_unit_cell
from maghomog.finescale import (
    PhysicalParams,
    UnderResolvedWarning,
    dirichlet_corrector,
    gradient_sup,
    maxwell_stress_field,
    solve_scalar_finescale,
    solve_suspension_finescale,
)


def _macro(inc, a_in=5.0, a_out=1.0, m=4, rpc=16, **kw):
    cell = build_unit_cell(inc, CoefficientField.isotropic(a_in, a_out), max(rpc, 8))
    return build_macro_domain(cell, m, rpc, **kw)


@pytest.fixture(scope="module")
def disk_macro8():
    return _macro(InclusionSpec.disk(0.25), m=8)


def test_linear_data_reproduced_for_constant_coefficient():
    mg = _macro(InclusionSpec.empty(), 3.0, 3.0)
    sol = solve_scalar_finescale(mg, f=None, tol=1e-12)
    assert np.abs(sol.phi - mg.mesh.nodes[:, 0]).max() < 1e-8
    assert np.allclose(sol.grad_phi, [1.0, 0.0], atol=1e-7)


def test_manufactured_potential_converges():
    exact_grad = lambda x: np.column_stack(
        [1 + np.pi * np.cos(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]), np.pi * np.sin(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1])]
    )
    src = lambda x: 2 * np.pi**2 * np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])
    errs = []
    for rpc in (8, 16):
        mg = _macro(InclusionSpec.empty(), 1.0, 1.0, m=4, rpc=rpc)
        sol = solve_scalar_finescale(mg, f=src, tol=1e-12)
        d = sol.grad_phi - exact_grad(mg.mesh.centroids)
        errs.append(np.sqrt(np.sum(mg.mesh.areas * np.sum(d**2, axis=1))))
    assert np.log2(errs[0] / errs[1]) >= 0.9


def test_boundary_data_imposed_bitwise(disk_macro8):
    sol = solve_scalar_finescale(disk_macro8)
    bn = disk_macro8.mesh.boundary_nodes
    assert np.array_equal(sol.phi[bn], disk_macro8.mesh.nodes[bn, 0])
    assert sol.energy_residual < 1e-6 and sol.valid


def test_dirichlet_corrector_mean_gradient(disk_macro8):
    # int grad Phi = int_{boundary} x_i n = e_i on the unit square
    for i in range(2):
        Phi = dirichlet_corrector(disk_macro8, i, tol=1e-11)
        mean = np.einsum("e,ek->k", disk_macro8.mesh.areas, Phi.grad_phi)
        assert np.allclose(mean, np.eye(2)[i], atol=1e-8)
        assert gradient_sup(Phi) > 1.0


def test_under_resolved_flagged():
    mg = _macro(InclusionSpec.disk(0.25), m=4, rpc=4, allow_under_resolved=True)
    with pytest.warns(UnderResolvedWarning):
        sol = solve_scalar_finescale(mg)
    assert not sol.valid


def test_maxwell_stress_of_uniform_field():
    mg = _macro(InclusionSpec.empty(), 2.0, 2.0)
    sol = solve_scalar_finescale(mg, f=None, tol=1e-12)
    tau = maxwell_stress_field(mg, sol, S=3.0)
    assert np.allclose(tau, 3.0 * 2.0 * np.diag([0.5, -0.5]), atol=1e-6)


def test_no_forcing_no_flow(disk_macro8):
    sol = solve_scalar_finescale(disk_macro8)
    out = solve_suspension_finescale(disk_macro8, PhysicalParams(S=0.0, g_body=(0.0, 0.0)), sol)
    assert np.abs(out.u).max() < 1e-12


def test_constant_stress_drives_no_flow():
    mg = _macro(InclusionSpec.empty(), 2.0, 2.0)
    sol = solve_scalar_finescale(mg, f=None, tol=1e-12)
    out = solve_suspension_finescale(mg, PhysicalParams(S=1.0, g_body=(0.0, 0.0)), sol)
    assert np.abs(out.u).max() < 1e-8


def test_one_way_coupling_and_rigidity(disk_macro8):
    sol = solve_scalar_finescale(disk_macro8)
    phi = sol.phi.copy()
    out = solve_suspension_finescale(disk_macro8, PhysicalParams(), sol)
    assert np.array_equal(out.phi, phi)
    d = out.diagnostics
    assert d["rigidity_ratio"] <= 1e-2
    assert d["rigidity_per_particle"].shape == (64,)
    assert d["balance_force"].shape == (64, 2)
    assert np.abs(np.mean(out.u, axis=0)).max() < 1.0


def test_mismatched_potential_rejected(disk_macro8):
    other = _macro(InclusionSpec.disk(0.25), m=8)
    sol = solve_scalar_finescale(other)
    with pytest.raises(ValueError):
        solve_suspension_finescale(disk_macro8, PhysicalParams(), sol)


def test_physical_params_validation():
    with pytest.raises(ValueError):
        PhysicalParams(Re=0.0)
    with pytest.raises(ValueError):
        PhysicalParams(S=-1.0)
    assert PhysicalParams(Re=4.0).fluid_viscosity == 0.25
    assert np.allclose(PhysicalParams(Fr=2.0).body_force(np.zeros((3, 2))), [[0.0, -0.25]] * 3)
