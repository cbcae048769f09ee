import numpy as np
import pytest

from maghomog.geometry import CoefficientField, InclusionSpec, build_unit_cell
from maghomog.harness.config import default_config
from maghomog.harness.pipeline import run_cell_pipeline
from maghomog.scalar_cell import all_maxwell_cell_stresses, solve_correctors


@pytest.fixture(scope="session")
def disk_cell32():
    cell = build_unit_cell(InclusionSpec.disk(0.25), CoefficientField.isotropic(5.0, 1.0), 32)
    sol = solve_correctors(cell)
    return cell, sol, all_maxwell_cell_stresses(cell, sol)


@pytest.fixture(scope="session")
def default_cell():
    """Default disk cell pipeline at resolution 64 (omega, chi, xi and tensors)."""
    return run_cell_pipeline(default_config())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
