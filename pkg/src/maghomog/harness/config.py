"""Experiment configuration: TOML file, defaults, validation and hashing."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..finescale import PhysicalParams
from ..geometry import CoefficientField, GeometryError, InclusionSpec, build_unit_cell

DEFAULTS = {
    "geometry": {
        "inclusion": "disk",
        "center": [0.5, 0.5],
        "radius": 0.25,
        "a_in": 5.0,
        "a_out": 1.0,
    },
    "cell": {"resolution": 64, "mu_pen": 1.0e6, "stab_beta": 0.05},
    "solver": {"tol_cell": 1.0e-10, "tol_macro": 1.0e-8},
    "physics": {"Re": 1.0, "Fr": 1.0, "S": 1.0, "f": "one", "k": "x1", "g": "down"},
    "sweep": {"epsilon": ["1/4", "1/8", "1/16", "1/32"], "resolution_per_cell": 16, "homogenized_resolution": 128, "stokes": True},
    "check": {"lh_samples": 10000, "seed": 0},
    "outputs": {"directory": "maghomog-out", "formats": ["csv"], "record_timings": False},
}

F_PRESETS = {"one": 1.0, "zero": 0.0}
K_PRESETS = {"x1": 0, "x2": 1, "zero": None}
G_PRESETS = {"down": (0.0, -1.0), "none": (0.0, 0.0)}

_SHAPE_KEYS = {"disk": ("radius",), "ellipse": ("semi_axes",), "smoothed-square": ("half_width", "corner_radius"), "laminate": ("fraction", "axis"), "none": ()}


class ConfigError(ValueError):
    pass


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{path + k!r} must be a section")
            out[k] = _merge(base[k], v, path + k + ".")
        else:
            out[k] = v
    return out


def _allowed_geometry(raw_geom):
    # shape parameters and optional ellipticity bounds are not in DEFAULTS
    extra = {"semi_axes", "half_width", "corner_radius", "fraction", "axis", "lambda", "Lambda"}
    return {k: raw_geom[k] for k in raw_geom if k in extra}


def _parse_epsilon(v) -> int:
    """Return m for epsilon = 1/m; accepts "1/m", floats and ints m >= 2."""
    try:
        fr = Fraction(v) if isinstance(v, str) else Fraction(float(v)).limit_denominator(4096)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad epsilon {v!r}") from exc
    if fr > 1:
        fr = 1 / fr
    if fr <= 0 or fr.numerator != 1:
        raise ConfigError(f"epsilon {v!r} is not of the form 1/m")
    return fr.denominator


def _coeff_matrix(v, name):
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        return float(a) * np.eye(2)
    if a.shape != (2, 2):
        raise ConfigError(f"geometry.{name} must be a scalar or a 2x2 array")
    return a


@dataclass(frozen=True)
class ExperimentConfig:
    data: dict
    source: str | None = None

    # ---- derived objects

    @property
    def inclusion(self) -> InclusionSpec:
        g = self.data["geometry"]
        kind = g["inclusion"]
        params = {}
        for key in _SHAPE_KEYS[kind]:
            if key in g:
                params[key] = g[key]
        if kind == "laminate":
            params.setdefault("fraction", 0.5)
            params.setdefault("axis", 0)
        return InclusionSpec(kind, tuple(g["center"]), params)

    @property
    def bounds(self):
        g = self.data["geometry"]
        if "lambda" in g or "Lambda" in g:
            return (float(g.get("lambda", 0.0)), float(g.get("Lambda", np.inf)))
        return None

    @property
    def coefficient(self) -> CoefficientField:
        g = self.data["geometry"]
        return CoefficientField(_coeff_matrix(g["a_in"], "a_in"), _coeff_matrix(g["a_out"], "a_out"), bounds=self.bounds)

    def cell(self, resolution=None):
        return build_unit_cell(self.inclusion, self.coefficient, int(resolution or self.data["cell"]["resolution"]))

    @property
    def sweep_m(self) -> list:
        return [_parse_epsilon(e) for e in self.data["sweep"]["epsilon"]]

    @property
    def physics(self) -> PhysicalParams:
        p = self.data["physics"]
        f = p["f"]
        f = F_PRESETS[f] if isinstance(f, str) else float(f)
        k = p["k"]
        if isinstance(k, str):
            axis = K_PRESETS[k]
            k = (lambda x: np.zeros(np.shape(x)[0])) if axis is None else (lambda x, a=axis: np.asarray(x)[:, a])
        else:
            kv = float(k)
            k = lambda x: np.full(np.shape(x)[0], kv)  # noqa: E731
        g = p["g"]
        g = G_PRESETS[g] if isinstance(g, str) else tuple(float(c) for c in g)
        return PhysicalParams(Re=float(p["Re"]), Fr=float(p["Fr"]), S=float(p["S"]), g_body=g, f_source=f, k_bc=k)

    @property
    def stokes_enabled(self) -> bool:
        return bool(self.data["sweep"]["stokes"]) and self.inclusion.kind != "laminate"

    # ---- hashing

    def canonical(self, sections=None) -> str:
        d = {k: v for k, v in self.data.items() if k != "outputs"} if sections is None else {k: self.data[k] for k in sections}
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def cell_key(self, resolution) -> str:
        payload = self.canonical(("geometry", "cell", "solver")) + f"|res={int(resolution)}"
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def validate(data: dict) -> None:
    """Collect every problem before raising, so no solve starts on a bad config."""
    errs = []
    g = data["geometry"]
    kind = g["inclusion"]
    if kind not in _SHAPE_KEYS:
        errs.append(f"geometry.inclusion {kind!r} is not one of {sorted(_SHAPE_KEYS)}")
    else:
        try:
            ExperimentConfig(data).inclusion
        except (GeometryError, KeyError, TypeError, ValueError) as exc:
            errs.append(f"geometry: {exc}")
    try:
        cf = ExperimentConfig(data).coefficient
        lo, hi = cf.ellipticity
        b = ExperimentConfig(data).bounds
        if b is not None and b[1] < b[0]:
            errs.append(f"geometry.Lambda={b[1]} is below geometry.lambda={b[0]}")
    except (GeometryError, ConfigError, ValueError) as exc:
        errs.append(f"geometry coefficients: {exc}")
    c = data["cell"]
    if int(c["resolution"]) < 8 or int(c["resolution"]) % 2:
        errs.append("cell.resolution must be an even integer >= 8")
    if not float(c["mu_pen"]) > 1.0:
        errs.append("cell.mu_pen must exceed 1")
    if not float(c["stab_beta"]) > 0.0:
        errs.append("cell.stab_beta must be positive")
    for k in ("tol_cell", "tol_macro"):
        if not 0.0 < float(data["solver"][k]) < 1.0:
            errs.append(f"solver.{k} must lie in (0, 1)")
    p = data["physics"]
    for k in ("Re", "Fr"):
        if not float(p[k]) > 0.0:
            errs.append(f"physics.{k} must be positive")
    if not float(p["S"]) >= 0.0:
        errs.append("physics.S must be non-negative")
    for key, presets in (("f", F_PRESETS), ("k", K_PRESETS), ("g", G_PRESETS)):
        v = p[key]
        if isinstance(v, str) and v not in presets:
            errs.append(f"physics.{key} preset {v!r} is not one of {sorted(presets)}")
    if not isinstance(p["g"], str) and np.shape(p["g"]) != (2,):
        errs.append("physics.g must be a preset or a 2-vector")
    s = data["sweep"]
    eps = s["epsilon"]
    if not isinstance(eps, list) or not eps:
        errs.append("sweep.epsilon must be a non-empty list")
    else:
        try:
            ms = [_parse_epsilon(e) for e in eps]
            if any(b <= a for a, b in zip(ms, ms[1:])):
                errs.append("sweep.epsilon must be strictly decreasing")
            if min(ms) < 2:
                errs.append("sweep.epsilon must be at most 1/2")
        except ConfigError as exc:
            errs.append(str(exc))
    rpc = int(s["resolution_per_cell"])
    if rpc < 8 or rpc % 2:
        errs.append("sweep.resolution_per_cell must be an even integer >= 8")
    hr = int(s["homogenized_resolution"])
    if hr != 0 and (hr < 4 or hr % 2):
        errs.append("sweep.homogenized_resolution must be 0 (match each fine mesh) or an even integer >= 4")
    fmts = data["outputs"]["formats"]
    if isinstance(fmts, str):
        fmts = [fmts]
    if not set(fmts) <= {"csv", "json"}:
        errs.append("outputs.formats entries must be 'csv' or 'json'")
    if int(data["check"]["lh_samples"]) < 1:
        errs.append("check.lh_samples must be positive")
    if errs:
        raise ConfigError("; ".join(errs))


def from_dict(raw: dict | None = None, source=None) -> ExperimentConfig:
    raw = copy.deepcopy(raw or {})
    geom_extra = _allowed_geometry(raw.get("geometry", {}))
    for k in geom_extra:
        raw["geometry"].pop(k)
    data = _merge(DEFAULTS, raw)
    data["geometry"].update(geom_extra)
    if isinstance(data["outputs"]["formats"], str):
        data["outputs"]["formats"] = [data["outputs"]["formats"]]
    validate(data)
    return ExperimentConfig(data, source)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path}: {exc}") from exc
    return from_dict(raw, str(path))


def default_config() -> ExperimentConfig:
    return from_dict({})
