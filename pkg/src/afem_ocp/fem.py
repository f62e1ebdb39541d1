"""Continuous piecewise linear elements with homogeneous Dirichlet conditions.

Callables describing data (sources, exact solutions) take an ``(n, 2)`` array
of physical points and return an ``(n,)`` array (``(n, 2)`` for gradients).
Quantities that are not finite element functions, such as the projected
control, are passed as arrays of values at the quadrature points of a rule,
ordered element by element.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .linalg import SparseMatrix

__all__ = [
    "DEGREE2",
    "DEGREE5",
    "EDGE_GAUSS2",
    "Coefficients",
    "P1Space",
    "QuadratureRule",
    "assemble_load",
    "assemble_mass",
    "assemble_stiffness",
    "energy_norm_error",
    "evaluate_p1",
    "l2_norm_error",
]


@dataclass(frozen=True)
class QuadratureRule:
    """Rule on the reference triangle in barycentric coordinates.

    Weights sum to the reference area 1/2.
    """

    bary: np.ndarray
    weights: np.ndarray
    degree: int
    name: str = ""

    @property
    def n_points(self):
        return len(self.weights)

    def __hash__(self):
        return hash(self.name)

    def __eq__(self, other):
        return isinstance(other, QuadratureRule) and self.name == other.name


def _orbit3(a, w):
    b = 1.0 - 2.0 * a
    return [(b, a, a), (a, b, a), (a, a, b)], [w, w, w]


def _degree2():
    pts, ws = _orbit3(1.0 / 6.0, 1.0 / 3.0)
    return QuadratureRule(np.array(pts), 0.5 * np.array(ws), 2, "degree2")


def _degree5():
    # Radon's 7-point rule
    s = np.sqrt(15.0)
    p1, w1 = _orbit3((6.0 - s) / 21.0, (155.0 - s) / 1200.0)
    p2, w2 = _orbit3((6.0 + s) / 21.0, (155.0 + s) / 1200.0)
    pts = [(1 / 3, 1 / 3, 1 / 3)] + p1 + p2
    ws = [9.0 / 40.0] + w1 + w2
    return QuadratureRule(np.array(pts), 0.5 * np.array(ws), 5, "degree5")


DEGREE2 = _degree2()
DEGREE5 = _degree5()
# two-point Gauss on [0, 1]: (parameter, weight)
EDGE_GAUSS2 = (np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)]),
               np.array([0.5, 0.5]))


@dataclass(frozen=True)
class Coefficients:
    """Constant diffusion matrix ``A`` (symmetric positive definite) and reaction ``c >= 0``."""

    A: np.ndarray = field(default_factory=lambda: np.eye(2))
    c: float = 0.0
    check: bool = True

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        object.__setattr__(self, "A", A)
        if A.shape != (2, 2):
            raise ValueError("A must be 2x2")
        if self.check:
            if not np.allclose(A, A.T):
                raise ValueError("A must be symmetric")
            if np.min(np.linalg.eigvalsh(A)) <= 0:
                raise ValueError("A must be positive definite")
            if self.c < 0:
                raise ValueError("c must be nonnegative")


@dataclass(frozen=True)
class QuadraturePoints:
    """Physical quadrature data of one rule on one mesh.

    ``basis`` maps nodal values (all vertices) to values at the points.
    """

    points: np.ndarray   # (M*q, 2)
    weights: np.ndarray  # (M*q,)
    basis: sp.csr_matrix
    n_per_element: int

    def per_element(self, values):
        return np.asarray(values).reshape(-1, self.n_per_element)

    def element_integrals(self, values):
        return (self.weights * values).reshape(-1, self.n_per_element).sum(axis=1)

    def integrate(self, values):
        return float(self.weights @ values)


class P1Space:
    """Vertex-based P1 space on ``mesh``; boundary vertices carry value zero.

    Free vertices are numbered ``0 .. n_dofs-1`` in increasing vertex order;
    ``dof_of_vertex`` is ``-1`` on constrained vertices.
    """

    def __init__(self, mesh):
        self.mesh = mesh
        self.free = ~mesh.boundary
        self.free_vertices = np.flatnonzero(self.free)
        self.dof_of_vertex = np.full(mesh.n_vertices, -1, dtype=np.int64)
        self.dof_of_vertex[self.free_vertices] = np.arange(len(self.free_vertices))
        self._quad = {}
        self._free_eval = {}

    @property
    def n_dofs(self):
        return len(self.free_vertices)

    def extend(self, dofs):
        """Nodal values on all vertices from a free-DOF vector (or pass nodal through)."""
        dofs = np.asarray(dofs, dtype=float)
        if dofs.shape[0] == self.mesh.n_vertices:
            return dofs
        if dofs.shape[0] != self.n_dofs:
            raise ValueError("vector length matches neither DOFs nor vertices")
        out = np.zeros(self.mesh.n_vertices)
        out[self.free_vertices] = dofs
        return out

    def restrict(self, nodal):
        return np.asarray(nodal)[self.free_vertices]

    def interpolate(self, func):
        """Free-DOF vector of the nodal interpolant of ``func``."""
        return func(self.mesh.points[self.free_vertices])

    @cached_property
    def basis_gradients(self):
        """(M, 3, 2) constant gradients of the barycentric basis functions."""
        m = self.mesh
        # grad lambda_k = rot(edge opposite k) / (2 area), rotated inward
        ev = m.edge_vectors
        g = np.stack([-ev[..., 1], ev[..., 0]], axis=-1)
        return g / (2.0 * m.areas)[:, None, None]

    def gradients(self, dofs):
        """(M, 2) elementwise gradient of a P1 function."""
        nodal = self.extend(dofs)
        return np.einsum("tk,tkd->td", nodal[self.mesh.elements], self.basis_gradients)

    def quadrature(self, rule=None):
        rule = DEGREE5 if rule is None else rule
        if rule not in self._quad:
            m = self.mesh
            q = rule.n_points
            verts = m.points[m.elements]                   # (M, 3, 2)
            pts = np.einsum("qk,tkd->tqd", rule.bary, verts).reshape(-1, 2)
            w = (2.0 * m.areas[:, None] * rule.weights[None, :]).ravel()
            rows = np.repeat(np.arange(m.n_elements * q), 3)
            cols = np.repeat(m.elements, q, axis=0).ravel()
            vals = np.tile(rule.bary, (m.n_elements, 1)).ravel()
            basis = sp.csr_matrix((vals, (rows, cols)), shape=(m.n_elements * q, m.n_vertices))
            self._quad[rule] = QuadraturePoints(pts, w, basis, q)
        return self._quad[rule]

    def values_at(self, dofs, rule=None):
        """Values of a P1 function at the quadrature points of ``rule``."""
        return self.quadrature(rule).basis @ self.extend(dofs)

    def free_evaluation(self, rule=None):
        """Quadrature-point evaluation matrix restricted to the free DOFs."""
        rule = DEGREE5 if rule is None else rule
        if rule not in self._free_eval:
            self._free_eval[rule] = self.quadrature(rule).basis[:, self.free_vertices].tocsr()
        return self._free_eval[rule]


def _eliminate(space, mat, eliminate):
    if not eliminate:
        return SparseMatrix(mat)
    fv = space.free_vertices
    return SparseMatrix(mat.tocsr()[fv][:, fv])


def _element_matrix_triplets(space, local):
    e = space.mesh.elements
    rows = np.repeat(e, 3, axis=1).ravel()
    cols = np.tile(e, (1, 3)).ravel()
    return rows, cols, local.ravel()


def assemble_stiffness(space, coeff=None, eliminate=True, rule=DEGREE2):
    """Matrix of ``a(phi_j, phi_i) = int grad phi_j . A grad phi_i + c phi_j phi_i``.

    With ``eliminate`` the constrained (boundary) rows and columns are dropped.
    """
    coeff = Coefficients() if coeff is None else coeff
    G = space.basis_gradients
    area = space.mesh.areas
    local = np.einsum("tid,de,tje->tij", G, coeff.A, G) * area[:, None, None]
    if coeff.c:
        local = local + coeff.c * _local_mass(space, rule)
    rows, cols, vals = _element_matrix_triplets(space, local)
    n = space.mesh.n_vertices
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return _eliminate(space, mat, eliminate)


def _local_mass(space, rule):
    # rule of degree >= 2 is exact for P1 x P1
    w = rule.weights * 2.0
    local_ref = np.einsum("q,qi,qj->ij", w, rule.bary, rule.bary)
    return space.mesh.areas[:, None, None] * local_ref[None]


def assemble_mass(space, eliminate=True, rule=DEGREE2):
    rows, cols, vals = _element_matrix_triplets(space, _local_mass(space, rule))
    n = space.mesh.n_vertices
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return _eliminate(space, mat, eliminate)


def assemble_load(space, f, rule=DEGREE5, eliminate=True):
    """Vector of ``int f phi_i`` by element-wise quadrature.

    ``f`` is a callable on points or an array of values at the points of ``rule``.
    """
    qp = space.quadrature(rule)
    vals = f(qp.points) if callable(f) else np.asarray(f, dtype=float)
    load = qp.basis.T @ (qp.weights * vals)
    return load[space.free_vertices] if eliminate else load


def evaluate_p1(space, dofs, element_id, bary):
    """Value and (constant) gradient of a P1 function inside one element."""
    nodal = space.extend(dofs)
    t = int(element_id)
    local = nodal[space.mesh.elements[t]]
    bary = np.asarray(bary, dtype=float)
    value = local @ bary if bary.ndim == 1 else bary @ local
    grad = local @ space.basis_gradients[t]
    return value, grad


def energy_norm_error(space, dofs, grad, rule=DEGREE5, coeff=None, value=None):
    """``sqrt(a(e, e))`` for ``e = exact - u_h`` by quadrature.

    ``grad`` returns the exact gradient at points; ``value`` (the exact
    function) is only needed when the reaction coefficient is nonzero.
    """
    coeff = Coefficients() if coeff is None else coeff
    qp = space.quadrature(rule)
    gh = np.repeat(space.gradients(dofs), rule.n_points, axis=0)
    d = grad(qp.points) - gh
    integrand = np.einsum("nd,de,ne->n", d, coeff.A, d)
    if coeff.c:
        if value is None:
            raise ValueError("exact value needed when c > 0")
        e = value(qp.points) - space.values_at(dofs, rule)
        integrand = integrand + coeff.c * e**2
    return float(np.sqrt(max(qp.integrate(integrand), 0.0)))


def l2_norm_error(space, approx, exact, rule=DEGREE5):
    """L2 distance of two functions, each a callable on points or quadrature values."""
    qp = space.quadrature(rule)
    a = approx(qp.points) if callable(approx) else np.asarray(approx, dtype=float)
    b = exact(qp.points) if callable(exact) else np.asarray(exact, dtype=float)
    return float(np.sqrt(qp.integrate((a - b) ** 2)))
