"""Box-constrained linear-quadratic control with variationally discretized control.

State and adjoint live in the P1 space; the control is never discretized and
is evaluated pointwise as ``clamp(-p_h / alpha, a, b)`` at the quadrature
points of the degree-5 rule.  All L2 pairings involving the control, the
desired state and the source use that same rule, so the discrete reduced
functional is an exact quadratic in the control values at those points and
``alpha * u + p_h`` is exactly its gradient.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fem import DEGREE5, Coefficients, assemble_stiffness
from .linalg import cg_solve

log = logging.getLogger(__name__)

__all__ = [
    "ExactSolution",
    "KktCheck",
    "OcpConvergenceError",
    "OcpProblem",
    "OcpSolution",
    "SolverOptions",
    "project_control",
    "reduced_functional",
    "reduced_gradient",
    "kkt_check",
    "solve_ocp",
]

PointFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ExactSolution:
    y: PointFunction
    grad_y: PointFunction
    p: PointFunction
    grad_p: PointFunction
    u: PointFunction


@dataclass(frozen=True)
class OcpProblem:
    """``min 1/2 ||y - y_d||^2 + alpha/2 ||u||^2`` s.t. ``L y = f_extra + u``, ``a <= u <= b``."""

    alpha: float
    a: float
    b: float
    y_d: PointFunction
    f_extra: PointFunction | None = None
    coeff: Coefficients = field(default_factory=Coefficients)
    exact: ExactSolution | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.a < self.b:
            raise ValueError("bounds must satisfy a < b")


@dataclass(frozen=True)
class SolverOptions:
    """Outer fixed-point and inner linear-solver settings.

    The outer loop stops once the L2 norm of ``clamp(-p/alpha) - u`` drops
    below ``tol * max(1, ||u||)``.  ``damping`` is the initial step; it is
    halved while the reduced functional would increase.
    """

    tol: float = 1e-10
    max_outer: int = 200
    damping: float = 1.0
    linear_tol: float = 1e-11
    linear_max_iter: int | None = None


class OcpConvergenceError(RuntimeError):
    def __init__(self, message, solution=None, history=()):
        super().__init__(message)
        self.solution = solution
        self.history = list(history)


def project_control(p_value, alpha, a, b):
    """Pointwise ``min(b, max(a, -p / alpha))``; works on scalars and arrays."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return np.minimum(b, np.maximum(a, -np.asarray(p_value, dtype=float) / alpha))


@dataclass
class OcpSolution:
    """Discrete state and adjoint (free-DOF vectors) with the implied control."""

    space: object
    problem: OcpProblem
    y: np.ndarray
    p: np.ndarray
    kkt_residual: float
    outer_iterations: int
    functional_history: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    linear_iterations: int = 0
    rule: object = DEGREE5

    def control_at(self, rule=None):
        """Control values at quadrature points, by composition with ``p``."""
        pq = self.space.values_at(self.p, rule or self.rule)
        prob = self.problem
        return project_control(pq, prob.alpha, prob.a, prob.b)

    def control(self, pts_p_values):
        prob = self.problem
        return project_control(pts_p_values, prob.alpha, prob.a, prob.b)


class _Discretization:
    """Operators shared by the state and adjoint solves on one mesh."""

    def __init__(self, space, prob, opts, rule=DEGREE5):
        self.space = space
        self.prob = prob
        self.opts = opts
        self.rule = rule
        self.K = assemble_stiffness(space, prob.coeff)
        self.qp = space.quadrature(rule)
        self.w = self.qp.weights
        self.E = space.free_evaluation(rule)
        self.ET = self.E.T.tocsr()
        pts = self.qp.points
        self.f_q = (np.zeros(len(self.w)) if prob.f_extra is None
                    else np.asarray(prob.f_extra(pts), dtype=float))
        self.yd_q = np.asarray(prob.y_d(pts), dtype=float)
        self.linear_iterations = 0

    def load(self, vals):
        return self.ET @ (self.w * vals)

    def solve(self, rhs, x0=None):
        x, rep = cg_solve(self.K, rhs, tol=self.opts.linear_tol, x0=x0,
                          max_iter=self.opts.linear_max_iter)
        self.linear_iterations += rep.iterations
        if not rep.converged:
            raise OcpConvergenceError(f"linear solve failed: {rep}")
        return x

    def state(self, u_q, x0=None, with_source=True):
        src = self.f_q + u_q if with_source else u_q
        return self.solve(self.load(src), x0)

    def adjoint(self, y, x0=None):
        return self.solve(self.load(self.E @ y - self.yd_q), x0)

    def functional(self, y, u_q):
        mis = self.E @ y - self.yd_q
        return 0.5 * float(self.w @ mis**2) + 0.5 * self.prob.alpha * float(self.w @ u_q**2)

    def norm(self, v_q):
        return float(np.sqrt(self.w @ v_q**2))

    def project(self, p):
        pr = self.prob
        return project_control(self.E @ p, pr.alpha, pr.a, pr.b)


def solve_ocp(space, prob, opts=None, p0=None, rule=DEGREE5):
    """Solve the discrete optimality system by a damped fixed-point iteration.

    Each step moves the control ``u`` towards ``T(u) = clamp(-p(u)/alpha)``,
    ``u <- u + w (T(u) - u)``.  That direction is a descent direction of the
    reduced functional, and since the functional is quadratic along it the
    halving test on ``w`` costs one extra state solve per step and no more.

    Parameters
    ----------
    space : P1Space
    prob : OcpProblem
    opts : SolverOptions, optional
    p0 : ndarray, optional
        Starting adjoint (free DOFs); the initial control is its projection.

    Raises
    ------
    OcpConvergenceError
        After ``opts.max_outer`` steps without meeting the tolerance.  The
        exception carries the last iterate and the residual history.
    """
    opts = SolverOptions() if opts is None else opts
    if opts.tol <= 0:
        raise ValueError("tol must be positive")
    d = _Discretization(space, prob, opts, rule)
    alpha = prob.alpha
    n = space.n_dofs
    if n == 0:
        raise ValueError("mesh has no free degrees of freedom")

    p = np.zeros(n) if p0 is None else np.asarray(p0, dtype=float).copy()
    u = d.project(p)
    y = d.state(u)
    J = d.functional(y, u)
    p = d.adjoint(y, x0=p if p0 is not None else None)
    history, residuals = [J], []

    for m in range(opts.max_outer + 1):
        step = d.project(p) - u
        res = d.norm(step)
        residuals.append(res)
        if res <= opts.tol * max(1.0, d.norm(u)):
            sol = OcpSolution(space, prob, y, p, res, m, history, residuals,
                              d.linear_iterations, rule)
            log.debug("ocp: converged in %d steps (%d CG iterations), residual %.2e",
                      m, d.linear_iterations, res)
            return sol
        if m == opts.max_outer:
            break
        dy = d.state(step, with_source=False)
        slope = float(d.w @ ((alpha * u + d.E @ p) * step))
        curvature = alpha * res**2 + float(d.w @ (d.E @ dy) ** 2)
        omega = opts.damping
        while omega > 1e-12 and omega * slope + 0.5 * omega**2 * curvature > 0:
            omega *= 0.5
        u = u + omega * step
        y = y + omega * dy
        J = d.functional(y, u)
        history.append(J)
        p = d.adjoint(y, x0=p)

    sol = OcpSolution(space, prob, y, p, residuals[-1], opts.max_outer, history,
                      residuals, d.linear_iterations, rule)
    raise OcpConvergenceError(
        f"fixed-point iteration did not converge in {opts.max_outer} steps "
        f"(residual {residuals[-1]:.3e})", sol, residuals)


def _control_values(space, u, rule):
    if isinstance(u, OcpSolution):
        return u.control_at(rule)
    if callable(u):
        return np.asarray(u(space.quadrature(rule).points), dtype=float)
    return np.asarray(u, dtype=float)


def reduced_functional(space, prob, u, opts=None, rule=DEGREE5):
    """``1/2 ||S_h u - y_d||^2 + alpha/2 ||u||^2`` with one state solve.

    ``u`` is a callable on points, an array of quadrature values or an
    :class:`OcpSolution` (whose control is the projection of its adjoint).
    """
    d = _Discretization(space, prob, opts or SolverOptions(), rule)
    uq = _control_values(space, u, rule)
    return d.functional(d.state(uq), uq)


def reduced_gradient(space, prob, u, opts=None, rule=DEGREE5):
    """``alpha u + p_h(u)`` at the quadrature points (the L2 Riesz representer)."""
    d = _Discretization(space, prob, opts or SolverOptions(), rule)
    uq = _control_values(space, u, rule)
    p = d.adjoint(d.state(uq))
    return prob.alpha * uq + d.E @ p


@dataclass(frozen=True)
class KktCheck:
    """Sampled optimality diagnostics of a discrete solution.

    ``vi_min`` is the smallest ``(alpha u + p, v - u)`` over the sampled
    admissible ``v``; ``grad_rel_err`` the worst relative mismatch between
    the reduced gradient and central differences of the reduced functional.
    """

    vi_min: float
    grad_rel_err: float
    n_samples: int


def kkt_check(sol, rng=None, n_dirs=3, eps=1e-4, opts=None):
    """Check the variational inequality and the reduced gradient of ``sol``.

    Admissible samples are the constants ``a`` and ``b`` and clipped random
    perturbations of ``u_h``.  Gradient directions vanish where a step of
    size ``eps`` would leave ``[a, b]``.
    """
    rng = np.random.default_rng(rng)
    space, prob, rule = sol.space, sol.problem, sol.rule
    opts = opts or SolverOptions()
    d = _Discretization(space, prob, opts, rule)
    u = sol.control_at(rule)
    g = prob.alpha * u + d.E @ sol.p
    w = d.w
    samples = [np.full_like(u, prob.a), np.full_like(u, prob.b)]
    span = prob.b - prob.a
    for _ in range(2 * n_dirs):
        samples.append(np.clip(u + span * rng.uniform(-1, 1, u.shape), prob.a, prob.b))
    vi = [float(w @ (g * (v - u))) for v in samples]

    room = (u - prob.a > eps) & (prob.b - u > eps)
    worst = 0.0
    for _ in range(n_dirs):
        delta = rng.uniform(-1, 1, u.shape) * room
        plus = d.functional(d.state(u + eps * delta), u + eps * delta)
        minus = d.functional(d.state(u - eps * delta), u - eps * delta)
        fd = (plus - minus) / (2 * eps)
        exact = float(w @ (g * delta))
        scale = max(abs(exact), d.norm(g) * d.norm(delta), np.finfo(float).tiny)
        worst = max(worst, abs(fd - exact) / scale)
    return KktCheck(min(vi), worst, len(samples))
