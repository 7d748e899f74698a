"""Command line entry point: ``mmc run|validate-gradients|dump-problem``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

log = logging.getLogger("mmctop")

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def run(cfg):
    """Optimize per ``cfg`` and write history.csv, final.vtk and components.json."""
    from .driver import Setup, optimize
    from .io import HistoryWriter, export_vtk, write_components
    from .mma import MmaParams

    out = Path(cfg.outdir)
    out.mkdir(parents=True, exist_ok=True)
    setup = Setup.build(cfg.problem, cfg.solver, cfg.void_mode)
    (out / "problem.json").write_text(json.dumps({"formatVersion": 1, **cfg.problem.to_dict()}) + "\n")
    last = {}

    def on_iter(rec, analysis, params):
        hist.append(rec)
        last.update(params=params, active=analysis.active)
        if cfg.vtk_every and rec.iteration % cfg.vtk_every == 0:
            export_vtk(analysis.den, setup.mesh, out / f"iter_{rec.iteration:04d}.vtk")

    with HistoryWriter(out / "history.csv") as hist:
        try:
            result = optimize(setup, cfg.max_iter, cfg.tol, MmaParams(**cfg.mma),
                              cfg.full_compare, callback=on_iter)
        except Exception:
            if last and cfg.export_components:
                write_components(out / "components.json", setup.kind, last["params"],
                                 last["active"], {"status": "aborted"})
            raise
    export_vtk(result.analysis.den, setup.mesh, out / "final.vtk")
    if cfg.export_components:
        write_components(out / "components.json", setup.kind, result.params, result.active,
                         {"status": "converged" if result.converged else "maxIter",
                          "objective": result.objective,
                          "volumeFraction": result.volume_fraction,
                          "iterations": len(result.records)})
    return result


def validate(cfg):
    """Write the finite-difference gradient report for the initial design."""
    from .driver import Setup
    from .sensitivity import fd_validate

    out = Path(cfg.outdir)
    out.mkdir(parents=True, exist_ok=True)
    setup = Setup.build(cfg.problem, cfg.solver, cfg.void_mode)
    if setup.free.size > 50_000:
        log.warning("finite differences on %d DOFs will be slow", setup.free.size)
    report = fd_validate(setup, setup.initial_params(), cfg.fd_delta, variables=cfg.fd_variables)
    report.write_csv(out / "gradient_check.csv")
    return report


def _load(path):
    from .io import parse_config

    path = Path(path)
    return parse_config(path.read_text(), base_dir=None)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="mmc", description="3D/2D MMC topology optimization")
    ap.add_argument("--threads", type=int, default=None, help="threads for BLAS/OpenMP kernels")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)
    p_run = sub.add_parser("run", help="run an optimization")
    p_run.add_argument("config")
    p_val = sub.add_parser("validate-gradients", help="compare analytic and FD gradients")
    p_val.add_argument("config")
    p_dump = sub.add_parser("dump-problem", help="print a builtin problem as config JSON")
    p_dump.add_argument("name")
    p_dump.add_argument("--mesh-scale", type=int, default=1)
    args = ap.parse_args(argv)

    if args.threads is not None:
        if args.threads < 1:
            ap.error("--threads must be >= 1")
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")

    try:
        if args.cmd == "dump-problem":
            from .problems import builtin

            prob = builtin(args.name, mesh_scale=args.mesh_scale)
            json.dump({"formatVersion": 1, "problem": prob.to_dict()}, sys.stdout)
            sys.stdout.write("\n")
            return 0
        cfg = _load(args.config)
        if args.cmd == "validate-gradients" or cfg.fd_validate:
            rep = validate(cfg)
            print(f"max relative error: objective {rep.max_rel_obj:.3e}, "
                  f"volume {rep.max_rel_vol:.3e}")
            print(f"report: {Path(cfg.outdir) / 'gradient_check.csv'}")
            return 0
        res = run(cfg)
        print(f"{'converged' if res.converged else 'stopped'} after {len(res.records)} iterations: "
              f"objective {res.objective:.6g}, volume fraction {res.volume_fraction:.4f}")
        return 0
    except (ValueError, FileNotFoundError) as exc:
        print(f"mmc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
