"""Command line entry point: ``maghomog {cell,sweep,check,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..numerics import SolverError
from ..stokes_cell import InvariantError
from .config import ConfigError, default_config, from_dict, load_config
from .reports import ReportError, _ensure_dir, bundle_from_dict, emit_reports, write_tensors

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INVARIANT = 0, 2, 3, 4

log = logging.getLogger("maghomog")


def _parser():
    p = argparse.ArgumentParser(prog="maghomog", description="Periodic homogenization of a magnetic suspension: cell problems, effective tensors and epsilon sweeps.")
    sub = p.add_subparsers(dest="verb", required=True)
    for verb, help_ in (
        ("cell", "solve the cell problems and write the effective tensors"),
        ("sweep", "full pipeline: cell, homogenized and fine-scale solves, corrector errors"),
        ("check", "run the effective-tensor invariant checks only"),
        ("report", "re-emit reports from a previous sweep's bundle"),
    ):
        s = sub.add_parser(verb, help=help_)
        s.add_argument("--config", type=Path, help="TOML config file (defaults when omitted)")
        s.add_argument("--out", type=Path, help="output directory (overrides outputs.directory)")
        s.add_argument("--workers", type=int, default=1, help="parallel epsilon jobs")
        s.add_argument("--format", choices=("csv", "json", "both"), default=None, help="report formats; CSV is always written")
        s.add_argument("--seed", type=int, default=None, help="seed for the Legendre-Hadamard sampling")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _config(args):
    cfg = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        data = json.loads(json.dumps(cfg.data))
        data["check"]["seed"] = int(args.seed)
        cfg = from_dict(data, cfg.source)
    return cfg


def _formats(args, cfg):
    if args.format is None:
        return tuple(cfg.data["outputs"]["formats"])
    return {"csv": ("csv",), "json": ("csv", "json"), "both": ("csv", "json")}[args.format]


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    from .pipeline import run_cell_pipeline, run_sweep

    try:
        cfg = _config(args)
        out = args.out or Path(cfg.data["outputs"]["directory"])
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        # fail on an unusable output directory before any solve starts
        _ensure_dir(out)
        cache = out / "cache"
        if args.verb == "cell":
            res = run_cell_pipeline(cfg, cache_dir=cache, stokes=cfg.inclusion.kind != "laminate")
            for p in write_tensors(res.tensors, out, cfg.hash):
                print(p)
        elif args.verb == "check":
            res = run_cell_pipeline(cfg, cache_dir=cache, stokes=cfg.inclusion.kind != "laminate")
            for k, v in res.invariants.items():
                print(f"{k} {v:.6e}")
            print("all invariants hold")
        elif args.verb == "sweep":
            bundle = run_sweep(cfg, workers=args.workers, cache_dir=cache)
            for p in emit_reports(bundle, out, _formats(args, cfg)):
                print(p)
            if bundle.failures:
                for f in bundle.failures:
                    print(f"eps={f['epsilon']:g} failed: {f['error']}", file=sys.stderr)
                return EXIT_SOLVER
        elif args.verb == "report":
            src = out / "bundle.json"
            if not src.exists():
                raise ConfigError(f"no bundle at {src}; run the sweep first")
            bundle = bundle_from_dict(json.loads(src.read_text()))
            for p in emit_reports(bundle, out, _formats(args, cfg)):
                print(p)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ReportError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
