"""Benchmark problems: the three-quarter disk with a known solution, the
quadrant-target square, the L-shaped domain, and a small smooth smoke test.

Example 1 data are manufactured from closed-form state and adjoint
``y = (r^l - r^n1) sin(l t)``, ``p = alpha (r^l - r^n2) sin(l t)`` on the
sector ``0 < r < 1, 0 < t < 3 pi / 2`` with ``l = 2/3``.  Since ``r^l sin(l t)``
is harmonic and ``lap(r^n sin(l t)) = (n^2 - l^2) r^(n-2) sin(l t)``, the
source and target that make them optimal are ``f = -lap y - u`` and
``y_d = y + lap p``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..fem import Coefficients
from ..mesh import DomainSpec, make_initial_mesh, refine_uniform
from ..ocp import ExactSolution, OcpProblem, project_control

__all__ = ["ExampleSpec", "example1", "example2", "example3", "smoke", "get_example",
           "in_domain"]

# raw domain expression of the L-shaped example, kept for reference
EXAMPLE3_DOMAIN_TEXT = "(-1,1)x(-1,1) \\ [0,1)x(x1,0]"


@dataclass(frozen=True)
class ExampleSpec:
    id: str
    domain: DomainSpec
    prob: OcpProblem
    has_exact: bool
    initial_refinements: int = 2
    default_theta: float = 0.4
    params: dict = field(default_factory=dict)
    default_max_dofs: int = 30000

    def initial_mesh(self):
        """Coarse mesh, uniformly refined so that it has interior vertices."""
        return refine_uniform(make_initial_mesh(self.domain), self.initial_refinements)


def _polar(x):
    r = np.hypot(x[:, 0], x[:, 1])
    t = np.mod(np.arctan2(x[:, 1], x[:, 0]), 2.0 * np.pi)
    return r, t


def _sector_mode(lam, nu, scale=1.0):
    """``scale (r^lam - r^nu) sin(lam t)`` with gradient and Laplacian."""

    def value(x):
        r, t = _polar(x)
        return scale * (r**lam - r**nu) * np.sin(lam * t)

    def grad(x):
        r, t = _polar(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            dr = scale * (lam * r ** (lam - 1) - nu * r ** (nu - 1)) * np.sin(lam * t)
            dt = scale * (r ** (lam - 1) - r ** (nu - 1)) * lam * np.cos(lam * t)
        c, s = np.cos(t), np.sin(t)
        return np.column_stack([dr * c - dt * s, dr * s + dt * c])

    def laplacian(x):
        r, t = _polar(x)
        return -scale * (nu**2 - lam**2) * r ** (nu - 2) * np.sin(lam * t)

    return value, grad, laplacian


def example1(nu1=2.5, nu2=2.5, snap=True, n_arc=6, initial_refinements=1):
    """Three-quarter unit disk with a corner singularity and a known solution.

    ``alpha = 0.1``, ``a = -0.3``, ``b = 1``, exponent ``2/3``.
    """
    lam, alpha, a, b = 2.0 / 3.0, 0.1, -0.3, 1.0
    y, gy, lap_y = _sector_mode(lam, nu1)
    p, gp, lap_p = _sector_mode(lam, nu2, alpha)

    def u(x):
        return project_control(p(x), alpha, a, b)

    def f_extra(x):
        return -lap_y(x) - u(x)

    def y_d(x):
        return y(x) + lap_p(x)

    prob = OcpProblem(alpha, a, b, y_d, f_extra, Coefficients(),
                      ExactSolution(y, gy, p, gp, u))
    return ExampleSpec("1", DomainSpec("three-quarter-disk", n_arc=n_arc, snap=snap), prob,
                       True, initial_refinements, 0.4,
                       {"lambda": lam, "nu1": nu1, "nu2": nu2, "laplace_y": lap_y,
                        "laplace_p": lap_p})


def example2(initial_refinements=2):
    """Square (-1,1)^2 with quadrant-wise target 10, 1, -10, -1; no exact solution."""

    def y_d(x):
        right = x[:, 0] > 0
        upper = x[:, 1] > 0
        return np.select([right & upper, ~right & upper, ~right & ~upper],
                         [10.0, 1.0, -10.0], default=-1.0)

    prob = OcpProblem(1e-3, -10.0, 10.0, y_d)
    return ExampleSpec("2", DomainSpec("square2"), prob, False, initial_refinements, 0.5)


def example3(initial_refinements=2):
    """L-shaped domain (square minus its closed fourth quadrant), ``y_d = 2``."""
    prob = OcpProblem(1e-2, 0.0, 8.0, lambda x: np.full(len(x), 2.0))
    return ExampleSpec("3", DomainSpec("l-shape"), prob, False, initial_refinements, 0.4,
                       {"domain_text": EXAMPLE3_DOMAIN_TEXT})


def smoke(initial_refinements=2):
    """Unit square, smooth manufactured solution with active bounds on both sides.

    ``y = sin(pi x) sin(pi y)``, ``p = 0.08 sin(2 pi x) sin(pi y)``,
    ``alpha = 0.1``, bounds ``[-0.5, 0.5]``.
    """
    alpha, a, b = 0.1, -0.5, 0.5
    pi = np.pi

    def y(x):
        return np.sin(pi * x[:, 0]) * np.sin(pi * x[:, 1])

    def gy(x):
        return pi * np.column_stack([np.cos(pi * x[:, 0]) * np.sin(pi * x[:, 1]),
                                     np.sin(pi * x[:, 0]) * np.cos(pi * x[:, 1])])

    def p(x):
        return 0.08 * np.sin(2 * pi * x[:, 0]) * np.sin(pi * x[:, 1])

    def gp(x):
        return 0.08 * pi * np.column_stack(
            [2 * np.cos(2 * pi * x[:, 0]) * np.sin(pi * x[:, 1]),
             np.sin(2 * pi * x[:, 0]) * np.cos(pi * x[:, 1])])

    def u(x):
        return project_control(p(x), alpha, a, b)

    def f_extra(x):
        return 2 * pi**2 * y(x) - u(x)

    def y_d(x):
        return y(x) - 5 * pi**2 * p(x)

    prob = OcpProblem(alpha, a, b, y_d, f_extra, Coefficients(),
                      ExactSolution(y, gy, p, gp, u))
    return ExampleSpec("smoke", DomainSpec("unit-square"), prob, True, initial_refinements, 0.4,
                       default_max_dofs=3000)


_EXAMPLES = {"1": example1, "2": example2, "3": example3, "smoke": smoke}


def get_example(example_id, **overrides):
    try:
        factory = _EXAMPLES[str(example_id)]
    except KeyError:
        raise ValueError(f"unknown example {example_id!r}") from None
    return factory(**overrides)


def in_domain(name, x):
    """Point-membership test of the open domains (used by tests and samplers)."""
    x = np.atleast_2d(x)
    inside_square = (np.abs(x[:, 0]) < 1) & (np.abs(x[:, 1]) < 1)
    if name == "square2":
        return inside_square
    if name in ("l-shape", "slit-square"):
        removed = (x[:, 0] >= 0) & (x[:, 0] < 1) & (x[:, 1] > -1) & (x[:, 1] <= 0)
        return inside_square & ~removed
    if name == "unit-square":
        return (x[:, 0] > 0) & (x[:, 0] < 1) & (x[:, 1] > 0) & (x[:, 1] < 1)
    if name == "three-quarter-disk":
        r, t = _polar(x)
        return (r > 0) & (r < 1) & (t > 0) & (t < 1.5 * np.pi)
    raise ValueError(f"unknown domain {name!r}")
