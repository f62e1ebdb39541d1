"""Conforming triangulations refined by newest-vertex bisection.

Elements are stored as counterclockwise vertex triples together with the
local index of their refinement edge (the edge opposite the newest vertex).
Refinement uses edge marking: the refinement edges of the marked elements are
flagged, the flag set is closed so that every element touching a flagged edge
also flags its own refinement edge, and then elements are bisected in rounds
until no flagged edge remains.  The closure is a fixed-point iteration over a
finite edge set, so it always terminates and the result has no hanging nodes.

Examples
--------
>>> m = make_initial_mesh("unit-square")
>>> m2, refined = refine(m, [0])
>>> m2.n_elements, sorted(refined.tolist())
(4, [0, 1])
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "Arc",
    "DomainSpec",
    "Element",
    "EdgeTable",
    "Mesh",
    "MeshAudit",
    "Vertex",
    "audit",
    "bisect",
    "element_geometry",
    "make_initial_mesh",
    "refine",
    "refine_uniform",
]

NO_CURVE = -1


@dataclass(frozen=True)
class Vertex:
    x: float
    y: float
    on_boundary: bool
    boundary_curve_id: int | None = None


@dataclass(frozen=True)
class Element:
    v: tuple[int, int, int]
    refinement_edge: int
    generation: int


@dataclass(frozen=True)
class Arc:
    """Circular boundary segment; new midpoints are projected onto it."""

    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0

    def project(self, pts):
        c = np.asarray(self.center)
        d = pts - c
        r = np.hypot(d[:, 0], d[:, 1])
        return c + d * (self.radius / r)[:, None]


@dataclass(frozen=True)
class EdgeTable:
    """Edge connectivity.

    ``edges[e]`` is the sorted vertex pair of edge ``e``; ``elem_edges[t, k]``
    is the edge opposite local vertex ``k`` of element ``t``; ``edge_elems[e]``
    lists the (at most two) adjacent elements, ``-1`` padding a boundary edge.
    """

    edges: np.ndarray
    elem_edges: np.ndarray
    edge_elems: np.ndarray
    edge_count: np.ndarray

    def adjacent(self, a, b):
        """Elements sharing the edge between vertices ``a`` and ``b``."""
        lo, hi = min(a, b), max(a, b)
        hit = np.flatnonzero((self.edges[:, 0] == lo) & (self.edges[:, 1] == hi))
        if hit.size == 0:
            return []
        return [int(t) for t in self.edge_elems[hit[0]] if t >= 0]


@dataclass(frozen=True)
class MeshAudit:
    conforming: bool
    max_aspect: float
    min_angle: float
    element_count: int
    vertex_count: int


def _signed_areas(points, elements):
    p0 = points[elements[:, 0]]
    p1 = points[elements[:, 1]]
    p2 = points[elements[:, 2]]
    d1 = p1 - p0
    d2 = p2 - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


class Mesh:
    """Triangulation with refinement-edge tags.

    Parameters
    ----------
    points : (N, 2) array
    elements : (M, 3) int array, counterclockwise
    refinement_edge : (M,) int array, optional
        Local index of the edge opposite the newest vertex.  Defaults to the
        longest edge of each element.
    generation : (M,) int array, optional
    boundary : (N,) bool array, optional
        Inferred from edges with a single neighbour when omitted.
    curve_id : (N,) int array, optional
        Index into ``curves`` or ``-1``.
    curves : sequence of :class:`Arc`
    validate : bool
        Reject degenerate, clockwise or repeated-vertex elements.  Only tests
        building deliberately broken meshes switch this off.
    """

    def __init__(self, points, elements, refinement_edge=None, generation=None,
                 boundary=None, curve_id=None, curves=(), validate=True):
        self.points = np.ascontiguousarray(points, dtype=float)
        self.elements = np.ascontiguousarray(elements, dtype=np.int64)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError("points must have shape (N, 2)")
        if self.elements.ndim != 2 or self.elements.shape[1] != 3:
            raise ValueError("elements must have shape (M, 3)")
        m = len(self.elements)
        if validate:
            self._validate()
        if refinement_edge is None:
            refinement_edge = self._longest_edge_index()
        self.refinement_edge = np.asarray(refinement_edge, dtype=np.int64).copy()
        self.generation = (np.zeros(m, dtype=np.int64) if generation is None
                           else np.asarray(generation, dtype=np.int64).copy())
        self.curves = tuple(curves)
        if curve_id is None:
            curve_id = np.full(len(self.points), NO_CURVE, dtype=np.int64)
        self.curve_id = np.asarray(curve_id, dtype=np.int64).copy()
        if boundary is None:
            boundary = np.zeros(len(self.points), dtype=bool)
            et = self.edge_table
            boundary[et.edges[et.edge_count == 1].ravel()] = True
        self.boundary = np.asarray(boundary, dtype=bool).copy()
        if np.any((self.curve_id != NO_CURVE) & ~self.boundary):
            raise ValueError("curve-tagged vertices must lie on the boundary")
        # lineage w.r.t. the mesh this one was refined from
        self.element_parent: np.ndarray | None = None
        self.vertex_parents: np.ndarray | None = None

    def _validate(self):
        if not np.all(np.isfinite(self.points)):
            raise ValueError("non-finite vertex coordinates")
        e = self.elements
        if e.size and (e.min() < 0 or e.max() >= len(self.points)):
            raise ValueError("element refers to a missing vertex")
        if np.any((e[:, 0] == e[:, 1]) | (e[:, 1] == e[:, 2]) | (e[:, 0] == e[:, 2])):
            raise ValueError("element with repeated vertices")
        area = _signed_areas(self.points, e)
        scale = np.max(np.ptp(self.points, axis=0)) ** 2 if len(self.points) else 1.0
        bad = np.flatnonzero(area <= 1e-14 * scale)
        if bad.size:
            raise ValueError(f"degenerate or clockwise elements: {bad[:10].tolist()}")

    def _longest_edge_index(self):
        lengths = self.edge_lengths
        # ties are broken towards the lowest local index
        return np.argmax(lengths - 1e-12 * np.arange(3) * lengths.max(initial=1.0), axis=1)

    # ------------------------------------------------------------------ size
    @property
    def n_vertices(self):
        return len(self.points)

    @property
    def n_elements(self):
        return len(self.elements)

    def vertex(self, i):
        cid = int(self.curve_id[i])
        return Vertex(float(self.points[i, 0]), float(self.points[i, 1]),
                      bool(self.boundary[i]), None if cid == NO_CURVE else cid)

    def element(self, t):
        return Element(tuple(int(v) for v in self.elements[t]),
                       int(self.refinement_edge[t]), int(self.generation[t]))

    # -------------------------------------------------------------- geometry
    @cached_property
    def areas(self):
        return _signed_areas(self.points, self.elements)

    @cached_property
    def edge_vectors(self):
        """(M, 3, 2): vector along the edge opposite each local vertex."""
        p = self.points[self.elements]
        return np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)

    @cached_property
    def edge_lengths(self):
        return np.linalg.norm(self.edge_vectors, axis=2)

    @cached_property
    def diameters(self):
        return self.edge_lengths.max(axis=1)

    @cached_property
    def outward_normals(self):
        """(M, 3, 2) unit outward normals of the edge opposite each vertex."""
        ev = self.edge_vectors
        # rotating a counterclockwise edge by -90 degrees points outward
        n = np.stack([ev[..., 1], -ev[..., 0]], axis=-1)
        return n / self.edge_lengths[..., None]

    @cached_property
    def centroids(self):
        return self.points[self.elements].mean(axis=1)

    def total_area(self):
        return float(self.areas.sum())

    # ------------------------------------------------------------- topology
    @cached_property
    def edge_table(self):
        e = self.elements
        m = len(e)
        pairs = np.stack([e[:, [1, 2]], e[:, [2, 0]], e[:, [0, 1]]], axis=1).reshape(-1, 2)
        pairs = np.sort(pairs, axis=1)
        edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True,
                                           return_counts=True)
        inverse = inverse.ravel()
        elem_edges = inverse.reshape(m, 3)
        owner = np.repeat(np.arange(m), 3)
        order = np.argsort(inverse, kind="stable")
        edge_elems = np.full((len(edges), 2), -1, dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        first = owner[order[starts]]
        edge_elems[:, 0] = first
        two = counts >= 2
        edge_elems[two, 1] = owner[order[starts[two] + 1]]
        return EdgeTable(edges, elem_edges, edge_elems, counts)

    @property
    def boundary_edges(self):
        et = self.edge_table
        return et.edges[et.edge_count == 1]

    def copy(self):
        out = Mesh(self.points, self.elements, self.refinement_edge, self.generation,
                   self.boundary, self.curve_id, self.curves, validate=False)
        return out

    def __repr__(self):
        return f"Mesh(n_vertices={self.n_vertices}, n_elements={self.n_elements})"


# ---------------------------------------------------------------- queries

def element_geometry(mesh, element_id):
    """Area, diameter, edge lengths and outward unit normals of one element.

    Edge ``k`` is the edge opposite local vertex ``k``.
    """
    t = int(element_id)
    return {
        "area": float(mesh.areas[t]),
        "h_T": float(mesh.diameters[t]),
        "h_E": mesh.edge_lengths[t].copy(),
        "normals": mesh.outward_normals[t].copy(),
    }


def audit(mesh):
    """Conformity and shape-regularity report.

    Conformity requires every edge to have one or two neighbours and every
    vertex to touch either zero (interior) or two (boundary) single-neighbour
    edges, consistent with its boundary flag.  A hanging node makes the long
    edge and both short edges single-neighbour edges, which breaks the count
    at the long edge's endpoints.
    """
    et = mesh.edge_table
    conforming = bool(np.all(et.edge_count <= 2))
    single = et.edges[et.edge_count == 1]
    touches = np.bincount(single.ravel(), minlength=mesh.n_vertices)
    conforming &= bool(np.all((touches == 0) | (touches == 2)))
    conforming &= bool(np.array_equal(touches == 2, mesh.boundary))
    conforming &= bool(np.all(mesh.areas > 0))

    lengths = mesh.edge_lengths
    area = mesh.areas
    perimeter = lengths.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        inradius = 2.0 * area / perimeter
        aspect = mesh.diameters / (2.0 * inradius)
    a, b, c = lengths[:, 0], lengths[:, 1], lengths[:, 2]
    cosines = np.stack([(b**2 + c**2 - a**2) / (2 * b * c),
                        (a**2 + c**2 - b**2) / (2 * a * c),
                        (a**2 + b**2 - c**2) / (2 * a * b)], axis=1)
    angles = np.degrees(np.arccos(np.clip(cosines, -1.0, 1.0)))
    return MeshAudit(conforming, float(np.max(aspect)), float(np.min(angles)),
                     mesh.n_elements, mesh.n_vertices)


# ------------------------------------------------------------- refinement

def _rotate_to_ref_edge(mesh):
    """Vertex triples and edge ids with the refinement edge opposite vertex 0."""
    idx = (mesh.refinement_edge[:, None] + np.arange(3)) % 3
    verts = np.take_along_axis(mesh.elements, idx, axis=1)
    edges = np.take_along_axis(mesh.edge_table.elem_edges, idx, axis=1)
    return verts, edges


def _bisection_pass(mesh, targets):
    """Bisect ``targets`` once, plus whatever the closure requires."""
    et = mesh.edge_table
    verts, eids = _rotate_to_ref_edge(mesh)

    cut = np.zeros(len(et.edges), dtype=bool)
    cut[eids[targets, 0]] = True
    while True:
        touched = cut[eids].any(axis=1)
        need = touched & ~cut[eids[:, 0]]
        if not need.any():
            break
        cut[eids[need, 0]] = True

    cut_ids = np.flatnonzero(cut)
    n_old = mesh.n_vertices
    ends = et.edges[cut_ids]
    mid = 0.5 * (mesh.points[ends[:, 0]] + mesh.points[ends[:, 1]])
    on_bnd = et.edge_count[cut_ids] == 1
    cid = mesh.curve_id[ends[:, 0]]
    curved = on_bnd & (cid != NO_CURVE) & (cid == mesh.curve_id[ends[:, 1]])
    for k, arc in enumerate(mesh.curves):
        sel = curved & (cid == k)
        if sel.any():
            mid[sel] = arc.project(mid[sel])
    new_cid = np.where(curved, cid, NO_CURVE)
    midpoint = np.full(len(et.edges), -1, dtype=np.int64)
    midpoint[cut_ids] = n_old + np.arange(len(cut_ids))

    refined = np.flatnonzero(cut[eids[:, 0]])
    keep = np.flatnonzero(~cut[eids[:, 0]])

    out_v = [mesh.elements[keep]]
    out_r = [mesh.refinement_edge[keep]]
    out_g = [mesh.generation[keep]]
    out_p = [keep]

    # active: elements (rotated) whose refinement edge is cut
    v, e = verts[refined], eids[refined]
    g = mesh.generation[refined]
    origin = refined
    while len(v):
        m = midpoint[e[:, 0]]
        # children (m, v0, v1) and (m, v2, v0); their refinement edges are
        # the old edges opposite v2 and v1
        cv = np.concatenate([np.stack([m, v[:, 0], v[:, 1]], axis=1),
                             np.stack([m, v[:, 2], v[:, 0]], axis=1)])
        none = np.full(len(v), -1, dtype=np.int64)
        ce = np.concatenate([np.stack([e[:, 2], none, none], axis=1),
                             np.stack([e[:, 1], none, none], axis=1)])
        cg = np.concatenate([g + 1, g + 1])
        co = np.concatenate([origin, origin])
        split = (ce[:, 0] >= 0) & cut[np.maximum(ce[:, 0], 0)]
        done = ~split
        out_v.append(cv[done])
        out_r.append(np.zeros(done.sum(), dtype=np.int64))
        out_g.append(cg[done])
        out_p.append(co[done])
        v, e, g, origin = cv[split], ce[split], cg[split], co[split]

    points = np.vstack([mesh.points, mid])
    boundary = np.concatenate([mesh.boundary, on_bnd])
    curve_id = np.concatenate([mesh.curve_id, new_cid])
    new = Mesh(points, np.vstack(out_v), np.concatenate(out_r), np.concatenate(out_g),
               boundary, curve_id, mesh.curves, validate=False)
    new.element_parent = np.concatenate(out_p)
    new.vertex_parents = ends.copy()
    return new, refined


def refine(mesh, marked, b=1):
    """Bisect every marked element at least ``b`` times and close conformingly.

    Returns
    -------
    new_mesh : Mesh
        ``new_mesh.element_parent`` maps each element to its ancestor in
        ``mesh``; ``new_mesh.vertex_parents`` lists, for each vertex appended
        after the old ones, the two vertices of the edge it bisects (in
        creation order, so earlier new vertices may appear as endpoints).
    refined : ndarray
        Indices of elements of ``mesh`` that were bisected.
    """
    marked = np.unique(np.asarray(list(marked) if not isinstance(marked, np.ndarray)
                                  else marked, dtype=np.int64))
    if b < 1:
        raise ValueError("b must be >= 1")
    if marked.size and (marked[0] < 0 or marked[-1] >= mesh.n_elements):
        raise IndexError("marked element index out of range")
    if marked.size == 0:
        out = mesh.copy()
        out.element_parent = np.arange(mesh.n_elements)
        out.vertex_parents = np.zeros((0, 2), dtype=np.int64)
        return out, marked

    n0 = mesh.n_vertices
    current = mesh
    ancestor = np.arange(mesh.n_elements)
    targets = marked
    refined_any = np.zeros(mesh.n_elements, dtype=bool)
    parents = []
    for _ in range(b):
        current, refined = _bisection_pass(current, targets)
        refined_any[ancestor[refined]] = True
        hit = np.zeros(len(ancestor), dtype=bool)
        hit[targets] = True
        parent = current.element_parent
        ancestor = ancestor[parent]
        parents.append(current.vertex_parents)
        # every target was bisected, so elements descending from one are new
        targets = np.flatnonzero(hit[parent])

    current.element_parent = ancestor
    current.vertex_parents = (np.vstack(parents) if parents
                              else np.zeros((0, 2), dtype=np.int64))
    assert current.n_vertices - n0 == len(current.vertex_parents)
    log.debug("refine: %d marked, %d refined, %d -> %d elements", marked.size,
              refined_any.sum(), mesh.n_elements, current.n_elements)
    return current, np.flatnonzero(refined_any)


def bisect(mesh, element_id):
    """Bisect a single element (with closure)."""
    if not 0 <= element_id < mesh.n_elements:
        raise IndexError("element index out of range")
    return refine(mesh, [element_id])[0]


def refine_uniform(mesh, times=1, b=2):
    """Mark every element ``times`` times; ``b=2`` halves the mesh size per step."""
    for _ in range(times):
        mesh, _ = refine(mesh, np.arange(mesh.n_elements), b=b)
    return mesh


def interpolate_to_refined(values, new_mesh):
    """Inject nodal P1 values into a refinement via edge midpoints."""
    vp = new_mesh.vertex_parents
    out = np.empty(new_mesh.n_vertices, dtype=float)
    n_old = new_mesh.n_vertices - len(vp)
    out[:n_old] = values
    for k, (a, c) in enumerate(vp):
        out[n_old + k] = 0.5 * (out[a] + out[c])
    return out


# --------------------------------------------------------- initial meshes

@dataclass(frozen=True)
class DomainSpec:
    """Named domain with construction options.

    ``n_arc`` (even) sets the number of polygon segments on the arc of the
    three-quarter disk; ``snap`` projects new arc midpoints onto the circle.
    """

    name: str
    n_arc: int = 12
    snap: bool = True


DOMAINS = ("unit-square", "square2", "three-quarter-disk", "l-shape")
_ALIASES = {"slit-square": "l-shape", "disk": "three-quarter-disk"}


def _criss_cross(quadrants):
    """Quadrant squares of (-1,1)^2, each split by its diagonal through 0."""
    corner = {1: (1, 1), 2: (-1, 1), 3: (-1, -1), 4: (1, -1)}
    pts = [(0.0, 0.0)]
    index = {(0, 0): 0}

    def vid(p):
        if p not in index:
            index[p] = len(pts)
            pts.append((float(p[0]), float(p[1])))
        return index[p]

    tris = []
    for q in quadrants:
        cx, cy = corner[q]
        a, c, b = (cx, 0), (cx, cy), (0, cy)
        t1 = [0, vid(a), vid(c)]
        t2 = [0, vid(c), vid(b)]
        for t in (t1, t2):
            p = np.array([pts[i] for i in t])
            d1, d2 = p[1] - p[0], p[2] - p[0]
            if d1[0] * d2[1] - d1[1] * d2[0] < 0:
                t[1], t[2] = t[2], t[1]
            tris.append(t)
    return np.array(pts), np.array(tris)


def _quarter_disk_fan(n_arc):
    if n_arc < 2 or n_arc % 2:
        raise ValueError("n_arc must be a positive even number")
    theta = np.linspace(0.0, 1.5 * np.pi, n_arc + 1)
    pts = np.vstack([[0.0, 0.0], np.column_stack([np.cos(theta), np.sin(theta)])])
    tris = np.array([[0, k + 1, k + 2] for k in range(n_arc)])
    # pair neighbouring fan triangles on the radius to the odd arc vertex so
    # that refinement edges match across the shared edge
    ref = np.array([1 if k % 2 == 0 else 2 for k in range(n_arc)])
    curve_id = np.full(len(pts), NO_CURVE)
    curve_id[1:] = 0
    return pts, tris, ref, curve_id


def make_initial_mesh(domain):
    """Coarse conforming mesh of a named domain.

    ``domain`` is a :class:`DomainSpec` or one of ``"unit-square"``,
    ``"square2"`` (the square (-1,1)^2), ``"three-quarter-disk"`` and
    ``"l-shape"`` ((-1,1)^2 without the closed fourth quadrant).
    """
    if isinstance(domain, str):
        domain = DomainSpec(domain)
    name = _ALIASES.get(domain.name, domain.name)
    if name == "unit-square":
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        tris = np.array([[0, 1, 2], [0, 2, 3]])
        return Mesh(pts, tris)
    if name == "square2":
        return Mesh(*_criss_cross([1, 2, 3, 4]))
    if name == "l-shape":
        return Mesh(*_criss_cross([1, 2, 3]))
    if name == "three-quarter-disk":
        pts, tris, ref, cid = _quarter_disk_fan(domain.n_arc)
        if not domain.snap:
            return Mesh(pts, tris, ref)
        return Mesh(pts, tris, ref, curve_id=cid, curves=[Arc()])
    raise ValueError(f"unknown domain {domain.name!r}; expected one of {DOMAINS}")


def is_compatible(mesh):
    """True when every interior refinement edge is also the neighbour's."""
    et = mesh.edge_table
    ref = et.elem_edges[np.arange(mesh.n_elements), mesh.refinement_edge]
    for t, e in enumerate(ref):
        other = et.edge_elems[e]
        nb = other[1] if other[0] == t else other[0]
        if nb >= 0 and ref[nb] != e:
            return False
    return True


def domain_area(name):
    name = _ALIASES.get(name, name)
    return {"unit-square": 1.0, "square2": 4.0, "l-shape": 3.0,
            "three-quarter-disk": 0.75 * np.pi}[name]

