"""Cell pipeline (correctors and effective tensors) and the epsilon sweep."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .. import __version__

from ..finescale import dirichlet_corrector, gradient_sup, solve_scalar_finescale, solve_suspension_finescale
from ..geometry import CellGeometry, build_macro_domain
from ..homogenized import (
    ConvergenceReport,
    ConvergenceRow,
    build_corrector_phi1,
    build_corrector_u1,
    corrector_error_scalar,
    corrector_error_stokes,
    solve_scalar_homogenized,
    solve_stokes_homogenized,
    uncorrected_gradient,
    uncorrected_strain,
)
from ..numerics import SolverError
from ..scalar_cell import ScalarCellSolution, all_maxwell_cell_stresses, solve_correctors
from ..stokes_cell import (
    CellStokesField,
    EffectiveTensors,
    StokesCellSolution,
    check_tensor_invariants,
    compute_effective_tensors,
    solve_stokes_cells,
    tensor_invariants,
)
from .config import ExperimentConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CellResult:
    cell: CellGeometry
    scalar: ScalarCellSolution
    stokes: StokesCellSolution | None
    tensors: EffectiveTensors
    invariants: dict
    from_cache: bool = False


# ---------------------------------------------------------------- cell cache

_FIELD_ARRAYS = ("velocity", "pressure", "strain", "force")
_FIELD_SCALARS = ("rigidity", "divergence", "torque", "residual")


def _save_cell(path: Path, res: CellResult):
    arrs = {"omega": res.scalar.omega, "grad_omega": res.scalar.grad_omega, "sc_residuals": np.array(res.scalar.residuals), "sc_iterations": np.array(res.scalar.iterations)}
    if res.stokes is not None:
        arrs["mu_pen"] = np.array(res.stokes.mu_pen)
        for fam in ("chi", "xi"):
            rows = getattr(res.stokes, fam)
            for i, row in enumerate(rows):
                for j, f in enumerate(row):
                    for a in _FIELD_ARRAYS + _FIELD_SCALARS:
                        arrs[f"{fam}_{i}{j}_{a}"] = np.asarray(getattr(f, a))
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, **arrs)
    tmp.replace(path)


def _load_field(z, prefix) -> CellStokesField:
    kw = {a: z[f"{prefix}_{a}"] for a in _FIELD_ARRAYS}
    kw.update({a: float(z[f"{prefix}_{a}"]) for a in _FIELD_SCALARS})
    return CellStokesField(**kw)


def _load_cell(path: Path, cell: CellGeometry):
    z = np.load(path)
    scalar = ScalarCellSolution(cell, z["omega"], z["grad_omega"], tuple(z["sc_residuals"].tolist()), tuple(int(v) for v in z["sc_iterations"]))
    stokes = None
    if "mu_pen" in z:
        fams = {}
        for fam in ("chi", "xi"):
            fams[fam] = [[_load_field(z, f"{fam}_{i}{j}") for j in range(2)] for i in range(2)]
        stokes = StokesCellSolution(cell, float(z["mu_pen"]), fams["chi"], fams["xi"])
    return scalar, stokes


def run_cell_pipeline(config: ExperimentConfig, resolution=None, cache_dir=None, stokes=True, check=True) -> CellResult:
    """omega, chi, xi on the unit cell, then A, N, B; all tensor invariants are
    asserted before returning (``InvariantError`` names the failed one)."""
    res = int(resolution or config.data["cell"]["resolution"])
    cell = config.cell(res)
    cdat, sdat = config.data["cell"], config.data["solver"]
    want_stokes = stokes and cell.inclusion.kind != "laminate"
    path = Path(cache_dir) / f"cell-{config.cell_key(res)}.npz" if cache_dir is not None else None
    from_cache = False
    scalar = stokes_sol = None
    if path is not None and path.exists():
        scalar, stokes_sol = _load_cell(path, cell)
        from_cache = stokes_sol is not None or not want_stokes
    if not from_cache:
        scalar = solve_correctors(cell, tol=sdat["tol_cell"])
        stokes_sol = None
        if want_stokes:
            tau = all_maxwell_cell_stresses(cell, scalar)
            stokes_sol = solve_stokes_cells(cell, tau, mu_pen=cdat["mu_pen"], stab_beta=cdat["stab_beta"], tol=sdat["tol_cell"])
    if not want_stokes:
        stokes_sol = None
    tensors = compute_effective_tensors(cell, scalar, stokes_sol)
    bounds = config.bounds or cell.coeff.ellipticity
    chk = config.data["check"]
    if check:
        inv = check_tensor_invariants(tensors, bounds, lh_samples=chk["lh_samples"], seed=chk["seed"])
    else:
        inv = tensor_invariants(tensors, bounds, chk["lh_samples"], chk["seed"])
    out = CellResult(cell, scalar, stokes_sol, tensors, inv, from_cache)
    if path is not None and not from_cache:
        _save_cell(path, out)
    return out


# ---------------------------------------------------------------- sweep


@dataclass(frozen=True, eq=False)
class ReportBundle:
    config_hash: str
    tensors: EffectiveTensors
    invariants: dict
    report: ConvergenceReport
    gradient_rows: tuple
    diagnostics: dict
    failures: tuple = ()
    provenance: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        return "partial" if self.failures else "complete"


def _homogenized(config, sweep_cell, resolution):
    phys = config.physics
    tol = config.data["solver"]["tol_macro"]
    phi0 = solve_scalar_homogenized(sweep_cell.tensors, phys.f_source, phys.k_bc, resolution, tol=tol)
    u0 = None
    if sweep_cell.stokes is not None:
        chk = config.data["check"]
        u0, _ = solve_stokes_homogenized(sweep_cell.tensors, phi0, phys, tol=tol, stab_beta=config.data["cell"]["stab_beta"], lh_samples=chk["lh_samples"], seed=chk["seed"])
    return phi0, u0


def _epsilon_job(args):
    config, sweep_cell, phi0, u0, m = args
    t0 = time.perf_counter()
    rpc = int(config.data["sweep"]["resolution_per_cell"])
    tol = config.data["solver"]["tol_macro"]
    phys = config.physics
    macro = build_macro_domain(sweep_cell.cell, m, rpc)
    if phi0 is None:
        # homogenized problems solved on this fine mesh
        phi0, u0 = _homogenized(config, sweep_cell, macro.mesh.n)
    fine = solve_scalar_finescale(macro, phys.f_source, phys.k_bc, tol=tol)
    cg = build_corrector_phi1(phi0, sweep_cell.scalar, macro.epsilon, macro.mesh)
    e_phi = corrector_error_scalar(fine, cg)
    e_phi0 = corrector_error_scalar(fine, uncorrected_gradient(phi0, macro.mesh))
    Phi = [dirichlet_corrector(macro, i, tol=tol) for i in range(2)]
    grad_row = {
        "epsilon": macro.epsilon,
        "sup_grad_phi": gradient_sup(fine),
        "sup_grad_Phi1": gradient_sup(Phi[0]),
        "sup_grad_Phi2": gradient_sup(Phi[1]),
        "energy_residual": max(fine.energy_residual, Phi[0].energy_residual, Phi[1].energy_residual),
    }
    diag = {"epsilon": macro.epsilon, "scalar_iterations": fine.iterations, "scalar_residual": fine.residual}
    e_u = e_u0 = float("nan")
    if sweep_cell.stokes is not None:
        cdat = config.data["cell"]
        fu = solve_suspension_finescale(macro, phys, fine, mu_pen=cdat["mu_pen"], tol=tol, stab_beta=cdat["stab_beta"])
        cs = build_corrector_u1(u0, phi0, sweep_cell.stokes, phys.S, macro.epsilon, macro.mesh, phys.Re)
        e_u = corrector_error_stokes(fu, cs)
        e_u0 = corrector_error_stokes(fu, uncorrected_strain(u0, macro.mesh))
        d = fu.diagnostics
        diag.update(
            stokes_residual=d["stokes_residual"],
            rigidity_ratio=d.get("rigidity_ratio", 0.0),
            rigidity_max=float(np.max(d["rigidity_per_particle"])) if "rigidity_per_particle" in d else 0.0,
            balance_force_max=float(np.abs(d["balance_force"]).max()) if "balance_force" in d else 0.0,
            balance_torque_max=float(np.abs(d["balance_torque"]).max()) if "balance_torque" in d else 0.0,
        )
    wall = time.perf_counter() - t0
    row = ConvergenceRow(macro.epsilon, e_phi, e_phi0, e_u, e_u0, grad_row["sup_grad_phi"], wall)
    return row, grad_row, diag


def run_sweep(config: ExperimentConfig, workers=1, cache_dir=None) -> ReportBundle:
    """Cell pipelines, homogenized solves (once, or per epsilon on the fine
    mesh when ``sweep.homogenized_resolution = 0``), then the fine-scale solves
    and corrector errors for every epsilon. A failing epsilon is recorded
    and the sweep continues; the bundle is then ``partial``."""
    stokes = config.stokes_enabled
    report_cell = run_cell_pipeline(config, cache_dir=cache_dir, stokes=stokes)
    rpc = int(config.data["sweep"]["resolution_per_cell"])
    # correctors evaluated on the fine mesh come from a cell meshed exactly
    # like one epsilon-cell of the fine mesh
    sweep_cell = report_cell if rpc == report_cell.cell.resolution else run_cell_pipeline(config, resolution=rpc, cache_dir=cache_dir, stokes=stokes)
    hres = int(config.data["sweep"]["homogenized_resolution"])
    phi0, u0 = _homogenized(config, sweep_cell, hres) if hres else (None, None)
    jobs = [(config, sweep_cell, phi0, u0, m) for m in config.sweep_m]
    rows, grads, diags, failures = [], [], [], []

    def _collect(m, fn):
        try:
            r, g, d = fn()
        except (SolverError, MemoryError, ValueError) as exc:
            log.warning("epsilon=1/%d failed: %s", m, exc)
            failures.append({"epsilon": 1.0 / m, "error": str(exc)})
            return
        rows.append(r)
        grads.append(g)
        diags.append(d)

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futs = [(j[-1], ex.submit(_epsilon_job, j)) for j in jobs]
            for m, fut in futs:
                _collect(m, fut.result)
    else:
        for j in jobs:
            _collect(j[-1], lambda j=j: _epsilon_job(j))
    record = bool(config.data["outputs"]["record_timings"])
    if not record:
        rows = [ConvergenceRow(**{**r.as_dict(), "wall_time_s": None}) for r in rows]
    diagnostics = {
        "cell_scalar_residuals": list(report_cell.scalar.residuals),
        "cell_scalar_iterations": list(report_cell.scalar.iterations),
        "per_epsilon": diags,
    }
    if report_cell.stokes is not None:
        st = report_cell.stokes
        diagnostics["cell_rigidity_chi"] = st.rigidity_chi.tolist()
        diagnostics["cell_rigidity_xi"] = st.rigidity_xi.tolist()
        f, t = st.max_balance()
        diagnostics["cell_balance_force_max"] = f
        diagnostics["cell_balance_torque_max"] = t
    prov = {"config_hash": config.hash, "maghomog": __version__, "numpy": np.__version__, "scipy": scipy.__version__}
    return ReportBundle(config.hash, report_cell.tensors, report_cell.invariants, ConvergenceReport(tuple(rows)), tuple(sorted(grads, key=lambda g: -g["epsilon"])), diagnostics, tuple(failures), prov)
