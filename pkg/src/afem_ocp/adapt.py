"""SOLVE -> ESTIMATE -> MARK -> REFINE with per-iteration records."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .estimate import compute_indicators, dorfler_mark
from .fem import P1Space, energy_norm_error, l2_norm_error
from .mesh import Mesh, audit, interpolate_to_refined, make_initial_mesh, refine
from .ocp import OcpConvergenceError, SolverOptions, solve_ocp

log = logging.getLogger(__name__)

__all__ = ["AdaptRecord", "AdaptRun", "AdaptiveSolverError", "ContractionScan", "IterationState",
           "StopRule", "cardinality_constant", "fit_slope", "run_adaptive",
           "scan_contraction"]


@dataclass
class AdaptRecord:
    iter: int
    n_elements: int
    n_dofs: int
    eta_y: float
    eta_p: float
    eta_total: float
    osc_total: float
    marked: int = 0
    refined: int = 0
    err_y: float | None = None
    err_p: float | None = None
    err_yp: float | None = None
    err_u: float | None = None
    outer_iterations: int = 0

    def quasi_error(self, gamma):
        """``||(y - y_h, p - p_h)||_a^2 + gamma * eta^2``."""
        if self.err_yp is None:
            raise ValueError("quasi-error needs exact-solution errors")
        return self.err_yp**2 + gamma * self.eta_total**2

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class StopRule:
    """Loop limits: refinement steps, DOF budget, estimator tolerance."""

    max_iters: float = math.inf
    max_dofs: float = 30000
    eta_tol: float = 0.0

    def __post_init__(self):
        if math.isinf(self.max_iters) and math.isinf(self.max_dofs) and self.eta_tol <= 0:
            raise ValueError("at least one stopping bound must be finite")


@dataclass
class IterationState:
    """Everything produced in one pass, handed to ``on_iteration`` callbacks."""

    record: AdaptRecord
    mesh: Mesh
    space: P1Space
    solution: object
    indicators: object
    marked: np.ndarray


@dataclass
class AdaptRun:
    records: list
    mesh: Mesh
    space: P1Space
    solution: object
    stop_reason: str
    theta: float
    mode: str
    initial_elements: int = 0
    marked_total: int = 0

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, k):
        return self.records[k]


class AdaptiveSolverError(RuntimeError):
    def __init__(self, message, records):
        super().__init__(message)
        self.records = records


def _errors(space, prob, sol):
    ex = prob.exact
    ey = energy_norm_error(space, sol.y, ex.grad_y, coeff=prob.coeff, value=ex.y)
    ep = energy_norm_error(space, sol.p, ex.grad_p, coeff=prob.coeff, value=ex.p)
    eu = l2_norm_error(space, sol.control_at(), ex.u)
    return ey, ep, math.hypot(ey, ep), eu


def run_adaptive(prob, domain, theta=0.4, stop=None, mode="adaptive", opts=None,
                 on_iteration=None, check_conformity=False, uniform_b=2):
    """Run the adaptive (or uniform) refinement loop.

    Parameters
    ----------
    prob : OcpProblem
    domain : Mesh, DomainSpec or str
        Initial mesh, or a domain whose coarse mesh is used as is.
    theta : float
        Bulk parameter in (0, 1); ignored in uniform mode.
    stop : StopRule
        A refinement whose mesh would exceed ``max_dofs`` is discarded and
        the loop ends, so every record respects the budget.
    mode : {"adaptive", "uniform"}
        Uniform mode marks every element and bisects it ``uniform_b`` times.
    on_iteration : callable, optional
        Receives an :class:`IterationState` after each MARK step.
    check_conformity : bool
        Audit every refined mesh and fail loudly on a non-conforming one.

    Returns
    -------
    AdaptRun
        Iterable over its :class:`AdaptRecord` list.
    """
    if mode not in ("adaptive", "uniform"):
        raise ValueError("mode must be 'adaptive' or 'uniform'")
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    stop = StopRule() if stop is None else stop
    opts = SolverOptions() if opts is None else opts
    mesh = domain if isinstance(domain, Mesh) else make_initial_mesh(domain)
    n_initial = mesh.n_elements

    records = []
    p_start = None
    marked_total = 0
    k = 0
    while True:
        space = P1Space(mesh)
        try:
            sol = solve_ocp(space, prob, opts, p0=p_start)
        except OcpConvergenceError as exc:
            raise AdaptiveSolverError(f"iteration {k}: {exc}", records) from exc
        ind = compute_indicators(space, prob, sol)
        rec = AdaptRecord(k, mesh.n_elements, space.n_dofs, ind.eta_y, ind.eta_p,
                          ind.eta_total, ind.osc_total, outer_iterations=sol.outer_iterations)
        if prob.exact is not None:
            rec.err_y, rec.err_p, rec.err_yp, rec.err_u = _errors(space, prob, sol)

        reason = None
        if k >= stop.max_iters:
            reason = "max_iters"
        elif ind.eta_total <= stop.eta_tol:
            reason = "eta_tol"

        if reason is None:
            marked = (np.arange(mesh.n_elements) if mode == "uniform"
                      else dorfler_mark(ind.eta_sq, theta))
            if marked.size == 0:
                reason = "converged"
        else:
            marked = np.zeros(0, dtype=np.int64)

        new_mesh = None
        if reason is None:
            new_mesh, refined = refine(mesh, marked, b=uniform_b if mode == "uniform" else 1)
            if int(np.count_nonzero(new_mesh.boundary == 0)) > stop.max_dofs:
                reason = "max_dofs"
                marked = np.zeros(0, dtype=np.int64)
            else:
                rec.marked = int(marked.size)
                rec.refined = int(refined.size)
        records.append(rec)
        log.info("iter %d: %d elements, %d dofs, eta %.3e%s", k, rec.n_elements, rec.n_dofs,
                 rec.eta_total, "" if rec.err_yp is None else f", err {rec.err_yp:.3e}")
        if on_iteration is not None:
            on_iteration(IterationState(rec, mesh, space, sol, ind, marked))
        if reason is not None:
            return AdaptRun(records, mesh, space, sol, reason, theta, mode, n_initial,
                            marked_total)

        marked_total += rec.marked
        if check_conformity and not audit(new_mesh).conforming:
            raise AdaptiveSolverError(f"non-conforming mesh after iteration {k}", records)
        p_start = P1Space(new_mesh).restrict(
            interpolate_to_refined(space.extend(sol.p), new_mesh))
        mesh = new_mesh
        k += 1


def fit_slope(records, x="n_dofs", y="err_yp", window=None):
    """Least-squares slope of ``log y`` against ``log x`` over the last ``window`` records."""
    recs = list(records)
    if window is not None:
        recs = recs[-window:]
    xs = np.array([getattr(r, x) if not isinstance(r, dict) else r[x] for r in recs], float)
    ys = np.array([getattr(r, y) if not isinstance(r, dict) else r[y] for r in recs], float)
    if len(xs) < 2:
        raise ValueError("need at least two points")
    if np.any(~(xs > 0)) or np.any(~(ys > 0)):
        raise ValueError("slope fit needs positive values")
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


@dataclass(frozen=True)
class ContractionScan:
    """Per-step quasi-error ratios (square roots) for every scanned ``gamma``."""

    gammas: np.ndarray
    ratios: np.ndarray          # (n_gamma, n_steps)
    best_gamma: float
    best_count: int
    best_max_ratio: float
    skip: int = 0
    tail_counts: np.ndarray = field(default=None)


def scan_contraction(records, gammas=None, skip=2):
    """Empirical stand-in for the contraction constant of the quasi-error.

    For each ``gamma`` computes ``sqrt(q_{k+1} / q_k)`` with
    ``q = err^2 + gamma * eta^2``.  Steps starting before iteration ``skip``
    are excluded from the ranking.  The chosen ``gamma`` maximizes the number
    of tail ratios below one, ties resolved by the smaller worst ratio.
    """
    gammas = np.logspace(-3, 1, 41) if gammas is None else np.asarray(gammas, float)
    recs = list(records)
    err2 = np.array([r.err_yp**2 for r in recs])
    eta2 = np.array([r.eta_total**2 for r in recs])
    q = err2[None, :] + gammas[:, None] * eta2[None, :]
    ratios = np.sqrt(q[:, 1:] / q[:, :-1])
    tail = ratios[:, skip:]
    counts = (tail < 1).sum(axis=1)
    worst = tail.max(axis=1) if tail.shape[1] else np.zeros(len(gammas))
    best = int(np.lexsort((worst, -counts))[0])
    return ContractionScan(gammas, ratios, float(gammas[best]), int(counts[best]),
                           float(worst[best]), skip, counts)


def cardinality_constant(run):
    """``max_n (#T_n - #T_0) / sum_{i<n} #M_i`` over an adaptive run."""
    recs = run.records if isinstance(run, AdaptRun) else list(run)
    n0 = recs[0].n_elements
    best = 0.0
    marked = 0
    for prev, rec in zip(recs, recs[1:]):
        marked += prev.marked
        if marked:
            best = max(best, (rec.n_elements - n0) / marked)
    return best
