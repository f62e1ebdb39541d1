"""Command-line driver: run one benchmark and write its reports.

Exit status is 0 on success, 1 on bad arguments and 2 when a solver fails.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time

import numpy as np

from ..adapt import (AdaptiveSolverError, StopRule, cardinality_constant, fit_slope,
                     run_adaptive, scan_contraction)
from ..ocp import SolverOptions, kkt_check
from .problems import get_example
from .reports import RunConfig, write_reports, write_vtk

log = logging.getLogger(__name__)

SLOPE_WINDOW = 6


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgumentError(message)


def _parser():
    p = _Parser(prog="afem-ocp", description="Adaptive FEM for box-constrained "
                "elliptic optimal control; runs one benchmark and writes reports.")
    p.add_argument("--example", required=True, choices=["1", "2", "3", "smoke"])
    p.add_argument("--theta", type=float, help="bulk parameter in (0, 1)")
    p.add_argument("--mode", choices=["adaptive", "uniform"], default="adaptive")
    p.add_argument("--max-dofs", type=int, help="DOF budget (default depends on example)")
    p.add_argument("--max-iters", type=int, help="maximal number of refinements")
    p.add_argument("--out", default="afem_out", help="output directory")
    p.add_argument("--vtk", action="store_true", help="write mesh_NNN.vtk per iteration")
    p.add_argument("--gamma-scan", action="store_true",
                   help="empirical quasi-error contraction scan (needs an exact solution)")
    p.add_argument("--seed", type=int, default=0, help="seed of the sampled KKT check")
    p.add_argument("--damping", type=float, default=1.0, help="initial fixed-point step")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _parse(argv):
    args = _parser().parse_args(argv)
    ex = get_example(args.example)
    theta = ex.default_theta if args.theta is None else args.theta
    if not 0 < theta < 1:
        raise _ArgumentError("--theta must lie in (0, 1)")
    if args.max_dofs is not None and args.max_dofs < 1:
        raise _ArgumentError("--max-dofs must be positive")
    if args.max_iters is not None and args.max_iters < 0:
        raise _ArgumentError("--max-iters must be nonnegative")
    if not 0 < args.damping <= 1:
        raise _ArgumentError("--damping must lie in (0, 1]")
    cfg = RunConfig(args.example, theta, args.mode,
                    ex.default_max_dofs if args.max_dofs is None else args.max_dofs,
                    math.inf if args.max_iters is None else args.max_iters,
                    args.out, args.vtk, args.gamma_scan, args.seed, args.damping)
    return cfg, ex, args.verbose


def _thread_limit():
    raw = os.environ.get("AFEM_OCP_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise _ArgumentError(f"AFEM_OCP_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise _ArgumentError("AFEM_OCP_THREADS must be positive")
    return n


def _vtk_dump(cfg):
    def dump(state):
        ind = state.indicators
        space = state.space
        flag = np.zeros(state.mesh.n_elements)
        flag[state.marked] = 1.0
        write_vtk(cfg.out / f"mesh_{state.record.iter:03d}.vtk", state.mesh,
                  cell_data={"eta_sq": ind.eta_sq, "eta_y_sq": ind.eta_y_sq,
                             "eta_p_sq": ind.eta_p_sq, "osc_sq": ind.osc_sq, "marked": flag},
                  point_data={"y": space.extend(state.solution.y),
                              "p": space.extend(state.solution.p)},
                  title=f"example {cfg.example} iteration {state.record.iter}")
    return dump


def _summary(run, cfg, has_exact, out):
    recs = run.records
    print(f"example {cfg.example} ({cfg.mode}): {len(recs)} iterations, "
          f"{recs[-1].n_dofs} dofs, stop: {run.stop_reason}", file=out)
    fields = ["eta_total"] + (["err_yp", "err_u"] if has_exact else [])
    if len(recs) >= 2:
        window = min(SLOPE_WINDOW, len(recs))
        for f in fields:
            print(f"slope {f} vs n_dofs (last {window}): "
                  f"{fit_slope(recs, 'n_dofs', f, window):.4f}", file=out)
    else:
        print("slopes: need at least two iterations", file=out)
    print(f"cardinality constant C = {cardinality_constant(run):.3f}", file=out)


def _gamma_report(run, cfg, out):
    recs = run.records
    if recs[0].err_yp is None:
        print("gamma scan skipped: no exact solution", file=out)
        return
    if len(recs) < 4:
        print("gamma scan skipped: too few iterations", file=out)
        return
    scan = scan_contraction(recs)
    steps = scan.ratios.shape[1] - scan.skip
    print(f"gamma scan (empirical surrogate): best gamma = {scan.best_gamma:.4g}, "
          f"{scan.best_count}/{steps} tail ratios < 1, worst {scan.best_max_ratio:.4f}",
          file=out)
    with (cfg.out / "gamma_scan.csv").open("w") as fh:
        fh.write("gamma,tail_below_one,tail_max_ratio\n")
        tail = scan.ratios[:, scan.skip:]
        for g, c, row in zip(scan.gammas, scan.tail_counts, tail):
            fh.write(f"{g:.17g},{int(c)},{row.max() if row.size else float('nan'):.17g}\n")


def _execute(cfg, ex, out):
    opts = SolverOptions(damping=cfg.damping)
    stop = StopRule(max_iters=cfg.max_iters, max_dofs=cfg.max_dofs)
    cfg.out.mkdir(parents=True, exist_ok=True)
    callback = _vtk_dump(cfg) if cfg.vtk else None
    t0 = time.perf_counter()
    try:
        run = run_adaptive(ex.prob, ex.initial_mesh(), cfg.theta, stop, mode=cfg.mode,
                           opts=opts, on_iteration=callback)
    except AdaptiveSolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        if exc.records:
            write_reports(exc.records, cfg)
        return 2
    files = write_reports(run.records, cfg)
    _summary(run, cfg, ex.has_exact, out)
    check = kkt_check(run.solution, rng=cfg.seed, opts=opts)
    print(f"kkt check on final mesh: min VI residual {check.vi_min:.3e}, "
          f"gradient rel. error {check.grad_rel_err:.3e}", file=out)
    if cfg.gamma_scan:
        _gamma_report(run, cfg, out)
    print(f"wrote {files['csv']} and {files['svg']} in {time.perf_counter() - t0:.2f} s",
          file=out)
    return 0


def run_cli(argv=None, out=None):
    """Parse ``argv`` and run; returns the process exit code."""
    out = sys.stdout if out is None else out
    try:
        cfg, ex, verbose = _parse(sys.argv[1:] if argv is None else list(argv))
        threads = _thread_limit()
    except _ArgumentError as exc:
        print(f"afem-ocp: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if not exc.code else 1
    if verbose:
        logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    if threads is None:
        return _execute(cfg, ex, out)
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=threads):
        return _execute(cfg, ex, out)


def main():
    sys.exit(run_cli())
