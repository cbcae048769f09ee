"""CSV / JSON report writers and plot-ready data files.

Tensor CSVs use 1-based indices. Floats are written with 12 significant
digits after the point in exponent form, so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..homogenized import REPORT_COLUMNS, ConvergenceReport, ConvergenceRow
from ..stokes_cell import EffectiveTensors
from .pipeline import ReportBundle

GRADIENT_COLUMNS = ("epsilon", "sup_grad_phi", "sup_grad_Phi1", "sup_grad_Phi2", "energy_residual")
PLOT_METRICS = ("err_grad_phi", "err_grad_phi_nocorr", "err_D_u", "err_D_u_nocorr", "sup_grad_phi")


class ReportError(OSError):
    pass


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if np.isnan(v):
        return "nan"
    return f"{v:.12e}"


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in r])


def tensor_tables(T: EffectiveTensors) -> dict:
    d = T.A.shape[0]
    r = range(d)
    out = {"effective_A.csv": (("i", "j", "value"), [(i + 1, j + 1, T.A[i, j]) for i in r for j in r])}
    if T.N is not None:
        out["effective_N.csv"] = (("i", "j", "m", "n", "value"), [(i + 1, j + 1, m + 1, n + 1, T.N[i, j, m, n]) for i in r for j in r for m in r for n in r])
    if T.B is not None:
        out["effective_B.csv"] = (("i", "j", "row", "col", "value"), [(i + 1, j + 1, a + 1, b + 1, T.B[i, j, a, b]) for i in r for j in r for a in r for b in r])
    return out


def write_tensors(T: EffectiveTensors, out_dir, config_hash=None) -> list:
    out_dir = _ensure_dir(out_dir)
    written = []
    for name, (header, rows) in tensor_tables(T).items():
        if config_hash is not None:
            header = header + ("config_hash",)
            rows = [r + (config_hash,) for r in rows]
        _write_csv(out_dir / name, header, rows)
        written.append(out_dir / name)
    return written


def _ensure_dir(out_dir) -> Path:
    p = Path(out_dir)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportError(f"cannot create output directory {p}: {exc}") from exc
    if not p.is_dir():
        raise ReportError(f"{p} is not a directory")
    probe = p / ".write-probe"
    try:
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ReportError(f"output directory {p} is not writable: {exc}") from exc
    return p


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating, float)):
        v = float(o)
        return v if np.isfinite(v) else None
    if isinstance(o, (np.integer,)):
        return int(o)
    return o


def bundle_to_dict(bundle: ReportBundle) -> dict:
    T = bundle.tensors
    return _jsonable(
        {
            "status": bundle.status,
            "config_hash": bundle.config_hash,
            "provenance": bundle.provenance,
            "tensors": {"A": T.A, "N": T.N, "B": T.B},
            "invariants": bundle.invariants,
            "convergence": [r.as_dict() for r in bundle.report.rows],
            "gradients": list(bundle.gradient_rows),
            "diagnostics": bundle.diagnostics,
            "failures": list(bundle.failures),
        }
    )


def bundle_from_dict(d: dict) -> ReportBundle:
    t = d["tensors"]
    arr = lambda v: None if v is None else np.asarray(v, dtype=float)  # noqa: E731
    T = EffectiveTensors(arr(t["A"]), arr(t["N"]), arr(t["B"]))
    nan = lambda v: float("nan") if v is None else v  # noqa: E731
    rows = tuple(ConvergenceRow(**{k: (nan(v) if k != "wall_time_s" else v) for k, v in r.items()}) for r in d["convergence"])
    return ReportBundle(d["config_hash"], T, d["invariants"], ConvergenceReport(rows), tuple(d["gradients"]), d["diagnostics"], tuple(d["failures"]), d["provenance"])


def emit_reports(bundle: ReportBundle, out_dir, formats=("csv",)) -> list:
    """CSV tables always; ``json`` adds ``report.json``. Plot-ready two-column
    files ``plot_<metric>.dat`` (epsilon, value) are written alongside."""
    out_dir = _ensure_dir(out_dir)
    h = bundle.config_hash
    written = write_tensors(bundle.tensors, out_dir, h)
    conv = out_dir / "convergence_report.csv"
    _write_csv(conv, REPORT_COLUMNS + ("config_hash",), [tuple(r.as_dict()[c] for c in REPORT_COLUMNS) + (h,) for r in bundle.report.rows])
    grad = out_dir / "sweep_gradients.csv"
    _write_csv(grad, GRADIENT_COLUMNS + ("config_hash",), [tuple(g[c] for c in GRADIENT_COLUMNS) + (h,) for g in bundle.gradient_rows])
    written += [conv, grad]
    for metric in PLOT_METRICS:
        p = out_dir / f"plot_{metric}.dat"
        with open(p, "w") as fh:
            fh.write(f"# epsilon {metric}\n")
            for r in bundle.report.rows:
                fh.write(f"{fmt(r.epsilon)} {fmt(getattr(r, metric))}\n")
        written.append(p)
    for name in ("sup_grad_Phi1", "sup_grad_Phi2"):
        p = out_dir / f"plot_{name}.dat"
        with open(p, "w") as fh:
            fh.write(f"# epsilon {name}\n")
            for g in bundle.gradient_rows:
                fh.write(f"{fmt(g['epsilon'])} {fmt(g[name])}\n")
        written.append(p)
    # the bundle itself, for the report verb
    bj = out_dir / "bundle.json"
    bj.write_text(json.dumps(bundle_to_dict(bundle), indent=1, sort_keys=True))
    written.append(bj)
    if "json" in formats:
        rj = out_dir / "report.json"
        rj.write_text(json.dumps(bundle_to_dict(bundle), indent=1, sort_keys=True))
        written.append(rj)
    return written
