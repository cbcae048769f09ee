import numpy as np
import pytest

from maghomog.geometry import CoefficientField, InclusionSpec, build_unit_cell
from maghomog.scalar_cell import (
    all_maxwell_cell_stresses,
    effective_permeability,
    maxwell_cell_stress,
    solve_correctors,
    voigt_reuss_bounds,
)


def test_constant_coefficient_collapse():
    cell = build_unit_cell(InclusionSpec.empty(), CoefficientField.isotropic(2.5, 2.5), 16)
    sol = solve_correctors(cell)
    assert np.abs(sol.omega).max() <= 1e-12
    assert np.allclose(effective_permeability(cell, sol), 2.5 * np.eye(2), atol=1e-12)


def test_laminate_oracle():
    # layers normal to e1: harmonic mean across, arithmetic mean along
    cell = build_unit_cell(InclusionSpec.laminate(0.5, axis=0), CoefficientField.isotropic(1.0, 4.0), 32)
    A = effective_permeability(cell, solve_correctors(cell))
    assert np.allclose(A, np.diag([1.6, 2.5]), rtol=1e-10, atol=1e-10)


def test_laminate_corrected_gradient_per_layer():
    cell = build_unit_cell(InclusionSpec.laminate(0.5, axis=0), CoefficientField.isotropic(1.0, 4.0), 16)
    sol = solve_correctors(cell)
    g = sol.corrected_gradients[0]
    # flux a (1 + w') is constant = 1.6  ->  1 + w' = 1.6 in the a=1 layer, 0.4 in the a=4 layer
    assert np.allclose(g[cell.solid, 0], 1.6) and np.allclose(g[~cell.solid, 0], 0.4)
    assert np.allclose(g[:, 1], 0.0, atol=1e-12)


def test_disk_symmetry_and_forms(disk_cell32):
    cell, sol, _ = disk_cell32
    A = effective_permeability(cell, sol)
    assert np.allclose(A, effective_permeability(cell, sol, form="flux"), atol=1e-10)
    assert abs(A[0, 1]) < 1e-12 and abs(A[0, 0] - A[1, 1]) < 1e-10
    lo, hi = voigt_reuss_bounds(cell)
    assert np.all(np.linalg.eigvalsh(A - lo) >= -1e-12) and np.all(np.linalg.eigvalsh(hi - A) >= -1e-12)


def test_omega_mirror_antisymmetry(disk_cell32):
    # omega^1(y1, y2) = -omega^1(1 - y1, y2), checked by mirroring the discrete solution
    cell, sol, _ = disk_cell32
    mesh = cell.mesh
    n = mesh.n
    i, j = np.divmod(np.arange(mesh.n_nodes), n)[::-1]
    mirrored = mesh.node_index((n - i) % n, j)
    assert np.abs(sol.omega[0] + sol.omega[0][mirrored]).max() < 1e-9
    assert np.abs(sol.omega[0].mean()) < 1e-14


def test_disk_permeability_refinement():
    # Maxwell-Garnett / Rayleigh estimate for a dilute-ish square array: ~1.301
    vals = []
    for n in (32, 64, 128):
        cell = build_unit_cell(InclusionSpec.disk(0.25), CoefficientField.isotropic(5.0, 1.0), n)
        vals.append(effective_permeability(cell, solve_correctors(cell))[0, 0])
    assert abs(vals[-1] - vals[-2]) < abs(vals[-2] - vals[-3]) or abs(vals[-1] - vals[-2]) < 5e-3
    assert 1.29 < vals[-1] < 1.32


def test_maxwell_stress_identities(disk_cell32):
    cell, sol, tau = disk_cell32
    assert tau.shape == (2, 2, cell.mesh.n_elements, 2, 2)
    # tau^{ij} = (tau^{ji})^T and traceless for scalar phases
    assert np.allclose(tau[0, 1], np.swapaxes(tau[1, 0], 1, 2), atol=1e-14)
    assert np.abs(np.trace(tau, axis1=3, axis2=4)).max() < 1e-13
    assert np.allclose(maxwell_cell_stress(cell, sol, 1, 1), tau[1, 1])


def test_sup_gradient_refinement_bounded():
    sups = []
    for n in (32, 64):
        cell = build_unit_cell(InclusionSpec.disk(0.25), CoefficientField.isotropic(5.0, 1.0), n)
        sups.append(solve_correctors(cell).sup_grad_omega[0])
    assert sups[1] / sups[0] <= 1.25
