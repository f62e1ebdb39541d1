"""Residual error indicators, data oscillation and bulk marking."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .fem import DEGREE5, EDGE_GAUSS2

log = logging.getLogger(__name__)

__all__ = ["Indicators", "compute_indicators", "compute_oscillation", "dorfler_mark",
           "jump_terms", "element_residuals"]


@dataclass(frozen=True)
class Indicators:
    """Per-element squared indicators and oscillations for state and adjoint."""

    eta_y_sq: np.ndarray
    eta_p_sq: np.ndarray
    osc_y_sq: np.ndarray
    osc_p_sq: np.ndarray

    @property
    def eta_sq(self):
        return self.eta_y_sq + self.eta_p_sq

    @property
    def osc_sq(self):
        return self.osc_y_sq + self.osc_p_sq

    @property
    def eta_y(self):
        return math.sqrt(math.fsum(self.eta_y_sq))

    @property
    def eta_p(self):
        return math.sqrt(math.fsum(self.eta_p_sq))

    @property
    def eta_total(self):
        return math.sqrt(math.fsum(self.eta_y_sq) + math.fsum(self.eta_p_sq))

    @property
    def osc_total(self):
        return math.sqrt(math.fsum(self.osc_y_sq) + math.fsum(self.osc_p_sq))


def element_residuals(space, prob, sol, rule=DEGREE5):
    """Interior residuals ``f + u_h - c y_h`` and ``y_h - y_d - c p_h`` at quadrature points.

    Second derivatives of P1 functions vanish, so with constant ``A`` only
    the reaction term of the operator survives inside an element.
    """
    qp = space.quadrature(rule)
    pts = qp.points
    yq = space.values_at(sol.y, rule)
    uq = sol.control_at(rule)
    f = 0.0 if prob.f_extra is None else prob.f_extra(pts)
    c = prob.coeff.c
    r_y = f + uq
    r_p = yq - prob.y_d(pts)
    if c:
        r_y = r_y - c * yq
        r_p = r_p - c * space.values_at(sol.p, rule)
    return r_y, r_p


def jump_terms(space, dofs, A):
    """Per element ``sum_E h_E ||[A grad v] . n_E||^2_E`` over interior edges.

    The jump of a P1 flux is constant along an edge; the 2-point Gauss rule
    is kept so that the edge integral does not depend on that fact.
    """
    mesh = space.mesh
    et = mesh.edge_table
    interior = np.flatnonzero(et.edge_count == 2)
    t1, t2 = et.edge_elems[interior, 0], et.edge_elems[interior, 1]
    flux = space.gradients(dofs) @ A.T
    # normal of the shared edge, outward from t1
    local = np.argmax(et.elem_edges[t1] == interior[:, None], axis=1)
    normal = mesh.outward_normals[t1, local]
    length = mesh.edge_lengths[t1, local]
    jump = np.einsum("ed,ed->e", flux[t1] - flux[t2], normal)
    _, gw = EDGE_GAUSS2
    integral = length * (gw.sum() * jump**2)
    contrib = length * integral
    out = np.zeros(mesh.n_elements)
    np.add.at(out, t1, contrib)
    np.add.at(out, t2, contrib)
    return out


def _osc_and_residual(qp, h2, r):
    w = qp.per_element(qp.weights)
    rv = qp.per_element(r)
    area = w.sum(axis=1)
    res = (w * rv**2).sum(axis=1)
    mean = (w * rv).sum(axis=1) / area
    osc = (w * (rv - mean[:, None]) ** 2).sum(axis=1)
    # the mean is the L2-best constant, so osc <= res; enforce it under rounding
    osc = np.minimum(osc, res)
    return h2 * res, h2 * osc


def compute_indicators(space, prob, sol, rule=DEGREE5):
    """Local indicators ``h_T^2 ||r_T||^2 + sum_E h_E ||j_E||^2`` for state and adjoint.

    Boundary edges carry no jump term.  The oscillations
    ``h_T^2 ||r_T - mean_T(r_T)||^2`` of the same residuals are returned too.
    """
    qp = space.quadrature(rule)
    h2 = space.mesh.diameters**2
    r_y, r_p = element_residuals(space, prob, sol, rule)
    res_y, osc_y = _osc_and_residual(qp, h2, r_y)
    res_p, osc_p = _osc_and_residual(qp, h2, r_p)
    A = prob.coeff.A
    eta_y = res_y + jump_terms(space, sol.y, A)
    eta_p = res_p + jump_terms(space, sol.p, A.T)
    return Indicators(eta_y, eta_p, osc_y, osc_p)


def compute_oscillation(space, prob, sol, rule=DEGREE5):
    """Per-element squared oscillations ``(osc_y^2, osc_p^2)`` and their total."""
    qp = space.quadrature(rule)
    h2 = space.mesh.diameters**2
    r_y, r_p = element_residuals(space, prob, sol, rule)
    _, osc_y = _osc_and_residual(qp, h2, r_y)
    _, osc_p = _osc_and_residual(qp, h2, r_p)
    return osc_y, osc_p, math.sqrt(math.fsum(osc_y) + math.fsum(osc_p))


def dorfler_mark(eta_sq, theta):
    """Smallest set of elements carrying a ``theta`` fraction of ``sum(eta_sq)``.

    Elements are taken in order of decreasing indicator, ties by increasing
    index.  Returns the marked indices in that order; an empty array when all
    indicators vanish (nothing left to refine).
    """
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    eta_sq = np.asarray(eta_sq, dtype=float)
    if np.any(eta_sq < 0):
        raise ValueError("indicators must be nonnegative")
    total = math.fsum(eta_sq)
    if total == 0.0:
        log.info("all indicators vanish; nothing to mark")
        return np.zeros(0, dtype=np.int64)
    order = np.argsort(-eta_sq, kind="stable")
    target = theta * total
    csum = np.cumsum(eta_sq[order])
    k = int(np.searchsorted(csum, target, side="left")) + 1
    k = min(k, len(order))
    # settle the boundary case with exactly rounded sums
    while k < len(order) and math.fsum(eta_sq[order[:k]]) < target:
        k += 1
    while k > 1 and math.fsum(eta_sq[order[:k - 1]]) >= target:
        k -= 1
    return order[:k]
