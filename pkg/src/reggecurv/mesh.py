"""Polytopal mesh complexes with gluing, adjacency and refinement.

A complex is built from chart vertices and codimension-0 cells (simplices
and tensor-product boxes), optionally glued along boundary faces through an
explicit vertex-identification list (e.g. a flat torus from one square
chart, or a cube surface from six disjoint squares).  Construction
enumerates the full face (codim-1) and hinge (codim-2) strata, adjacency,
boundary flags and cyclically ordered hinge fans.

Conventions fixed here and relied upon elsewhere:

* every cell is positively oriented: its reference-to-chart geometry map
  must have positive Jacobian determinant (checked at quadrature points);
* each face carries one canonical parametrisation; the vertex order is
  derived from canonical (identification-class) vertex ids on the lower
  numbered side and transported to the other side through the matched
  vertex bijection, so both sides induce the *same* face coordinates;
* interior faces have exactly two sides, boundary faces one;
* hinge fans are ordered so that, inside each cell, the rotation from the
  fan-entry conormal to the fan-exit conormal is counterclockwise with
  respect to the cell orientation.

Identification gluing matches boundary facets only through *explicitly
listed* vertex pairs (not merely equal union-find classes); this keeps
small periodic meshes unambiguous, where four boundary edges may share the
same pair of canonical endpoints.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (DanglingFace, InvertedCell, IoError, NonManifold,
                     NonManifoldHinge, NotIncident, UnsupportedCellType)
from .quadrature import quadrature_rule

log = logging.getLogger(__name__)

JACOBIAN_FLOOR = 1e-12


# ===========================================================================
# polynomial maps (reference -> chart geometry)
# ===========================================================================

def _poly_mul(p, q):
    out = {}
    for a, ca in p.items():
        for b, cb in q.items():
            key = tuple(x + y for x, y in zip(a, b))
            out[key] = out.get(key, 0.0) + ca * cb
    return {k: v for k, v in out.items() if v != 0.0}


def _poly_pow(p, k, dim):
    out = {(0,) * dim: 1.0}
    for _ in range(k):
        out = _poly_mul(out, p)
    return out


class PolynomialMap:
    """Vector-valued polynomial map, stored as multi-index -> coefficient."""

    def __init__(self, dim_in, dim_out, coeffs):
        self.dim_in = dim_in
        self.dim_out = dim_out
        self.coeffs = {tuple(k): np.asarray(v, float) for k, v in coeffs.items()
                       if np.any(np.asarray(v, float) != 0.0) or sum(k) == 0}
        self._jac_maps = None
        self._sec_maps = None

    @property
    def degree(self):
        return max((sum(k) for k in self.coeffs), default=0)

    # -- construction ------------------------------------------------------

    @staticmethod
    def affine(A, b):
        A = np.asarray(A, float)
        b = np.asarray(b, float)
        dim_out, dim_in = A.shape
        coeffs = {(0,) * dim_in: b}
        for j in range(dim_in):
            key = tuple(1 if i == j else 0 for i in range(dim_in))
            coeffs[key] = A[:, j]
        return PolynomialMap(dim_in, dim_out, coeffs)

    @staticmethod
    def simplex_from_vertices(verts):
        verts = np.asarray(verts, float)
        nv, dim_out = verts.shape
        dim_in = nv - 1
        A = (verts[1:] - verts[0]).T
        return PolynomialMap.affine(A, verts[0])

    @staticmethod
    def box_from_vertices(verts):
        """Multilinear interpolation; verts in binary order (bit a = axis a)."""
        verts = np.asarray(verts, float)
        nv, dim_out = verts.shape
        dim_in = int(round(math.log2(nv)))
        coeffs = {}
        for corner in range(nv):
            # product over axes of (xi_a) or (1 - xi_a)
            term = {(0,) * dim_in: 1.0}
            for a in range(dim_in):
                lin_key = tuple(1 if i == a else 0 for i in range(dim_in))
                if (corner >> a) & 1:
                    fac = {lin_key: 1.0}
                else:
                    fac = {(0,) * dim_in: 1.0, lin_key: -1.0}
                term = _poly_mul(term, fac)
            for key, c in term.items():
                cur = coeffs.setdefault(key, np.zeros(dim_out))
                cur += c * verts[corner]
        return PolynomialMap(dim_in, dim_out, coeffs)

    # -- evaluation --------------------------------------------------------

    def eval(self, pts):
        pts = np.asarray(pts, float)
        single = pts.ndim == 1
        p = pts[None, :] if single else pts
        out = np.zeros(p.shape[:-1] + (self.dim_out,))
        for key, c in self.coeffs.items():
            mono = np.ones(p.shape[:-1])
            for i, k in enumerate(key):
                if k:
                    mono = mono * p[..., i] ** k
            out += mono[..., None] * c
        return out[0] if single else out

    def _derived(self, order):
        """Component maps of first/second derivatives (lists of dicts)."""
        if order == 1:
            if self._jac_maps is None:
                self._jac_maps = [self._diff(i) for i in range(self.dim_in)]
            return self._jac_maps
        if self._sec_maps is None:
            firsts = self._derived(1)
            self._sec_maps = [[firsts[i]._diff(j) for j in range(self.dim_in)]
                              for i in range(self.dim_in)]
        return self._sec_maps

    def _diff(self, i):
        coeffs = {}
        for key, c in self.coeffs.items():
            if key[i] == 0:
                continue
            dkey = tuple(k - 1 if j == i else k for j, k in enumerate(key))
            coeffs[dkey] = coeffs.get(dkey, 0.0) + key[i] * c
        if not coeffs:
            coeffs = {(0,) * self.dim_in: np.zeros(self.dim_out)}
        return PolynomialMap(self.dim_in, self.dim_out, coeffs)

    def jacobian(self, pts):
        cols = [m.eval(pts) for m in self._derived(1)]
        return np.stack(cols, axis=-1)

    def second(self, pts):
        sec = self._derived(2)
        rows = [np.stack([sec[i][j].eval(pts) for j in range(self.dim_in)],
                         axis=-1) for i in range(self.dim_in)]
        return np.stack(rows, axis=-2)

    # -- composition -------------------------------------------------------

    def compose(self, inner):
        """self o inner (inner maps s-coords into this map's domain)."""
        comp_dim = inner.dim_in
        # scalar polynomial (dict) for each domain coordinate of self
        comps = []
        for i in range(self.dim_in):
            comps.append({k: float(v[i]) for k, v in inner.coeffs.items()
                          if v[i] != 0.0} or {(0,) * comp_dim: 0.0})
        out = {}
        for key, c in self.coeffs.items():
            term = {(0,) * comp_dim: 1.0}
            for i, k in enumerate(key):
                if k:
                    term = _poly_mul(term, _poly_pow(comps[i], k, comp_dim))
            for tkey, tc in term.items():
                cur = out.setdefault(tkey, np.zeros(self.dim_out))
                cur += tc * c
        return PolynomialMap(comp_dim, self.dim_out, out)


# ===========================================================================
# reference polytopes
# ===========================================================================

class RefPolytope:
    def __init__(self, kind, dim):
        self.kind = kind
        self.dim = dim
        if kind == "simplex":
            self.verts = np.vstack([np.zeros(dim), np.eye(dim)]) if dim else np.zeros((1, 0))
            nv = dim + 1
            self.facets = [tuple(j for j in range(nv) if j != i) for i in range(nv)]
            if dim >= 2:
                self.codim2 = [tuple(s) for s in
                               itertools.combinations(range(nv), dim - 1)]
            else:
                self.codim2 = []
        elif kind == "box":
            nv = 2 ** dim
            self.verts = np.array([[(k >> a) & 1 for a in range(dim)]
                                   for k in range(nv)], float)
            self.facets = []
            for a in range(dim):
                for s in (0, 1):
                    self.facets.append(tuple(k for k in range(nv)
                                             if ((k >> a) & 1) == s))
            if dim == 2:
                self.codim2 = [(k,) for k in range(nv)]
            elif dim == 3:
                self.codim2 = []
                for a, b in itertools.combinations(range(3), 2):
                    c = 3 - a - b
                    for sa in (0, 1):
                        for sb in (0, 1):
                            edge = tuple(sorted(
                                (sa << a) | (sb << b) | (sc << c) for sc in (0, 1)))
                            self.codim2.append(edge)
            else:
                self.codim2 = []
        else:
            raise UnsupportedCellType("unknown cell type %r" % kind)
        # boundary vertex cycle for 2D polytopes (counterclockwise)
        if dim == 2:
            self.cycle = [0, 1, 2] if kind == "simplex" else [0, 1, 3, 2]
        else:
            self.cycle = None

    def facets_containing(self, local_verts):
        s = set(local_verts)
        return [i for i, f in enumerate(self.facets) if s.issubset(f)]

    def centroid(self):
        return self.verts.mean(axis=0)


_REF_CACHE = {}


def ref_polytope(kind, dim):
    key = (kind, dim)
    if key not in _REF_CACHE:
        _REF_CACHE[key] = RefPolytope(kind, dim)
    return _REF_CACHE[key]


def _facet_kind(cell_kind, facet_dim):
    if facet_dim <= 1:
        return "box" if cell_kind == "box" else "simplex"
    return cell_kind


# ===========================================================================
# mesh entities
# ===========================================================================

@dataclass
class Cell:
    index: int
    kind: str                      # 'simplex' | 'box'
    verts: tuple                   # chart vertex ids
    geom: PolynomialMap            # reference -> chart
    face_ids: list = field(default_factory=list)    # by facet index
    hinge_ids: list = field(default_factory=list)   # by codim2 index

    @property
    def ref(self):
        return ref_polytope(self.kind, self.geom.dim_in)


@dataclass
class FaceSide:
    cell: int
    facet: int
    chart_verts: tuple             # in canonical face order
    ref_verts: np.ndarray          # reference coords, canonical order
    sigma: PolynomialMap           # face-ref -> cell-ref (affine/multilinear)
    chart_map: PolynomialMap       # face-ref -> chart


@dataclass
class Face:
    index: int
    dim: int
    kind: str                      # reference polytope type of the face
    key: tuple                     # canonical vertex classes, sorted
    sides: list                    # 1 (boundary) or 2 (interior) FaceSide

    @property
    def is_boundary(self):
        return len(self.sides) == 1


@dataclass
class HingeSide:
    cell: int
    local_verts: tuple             # cell-local chart vertex ids, canonical order
    ref_verts: np.ndarray
    sigma: PolynomialMap           # hinge-ref -> cell-ref
    chart_map: PolynomialMap
    facets: tuple                  # the two facet indices of the cell containing it


@dataclass
class Hinge:
    index: int
    dim: int
    kind: str
    key: tuple
    sides: list                    # HingeSide per incident cell instance
    fan: list = field(default_factory=list)   # (side_idx, enter_face, leave_face)
    is_boundary: bool = False

    def side_for_cell(self, cell_index):
        for s in self.sides:
            if s.cell == cell_index:
                return s
        raise NotIncident("cell %d not incident to hinge %d" % (cell_index, self.index))


# ===========================================================================
# union-find
# ===========================================================================

class _UnionFind:
    def __init__(self):
        self.parent = {}

    def find(self, a):
        p = self.parent.setdefault(a, a)
        while p != self.parent[p]:
            self.parent[p] = self.parent[self.parent[p]]
            p = self.parent[p]
        self.parent[a] = p
        return p

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


# ===========================================================================
# complex
# ===========================================================================

class MeshComplex:
    """Immutable polytopal complex; built via :func:`build_complex`."""

    def __init__(self, dim, vertices, cells, faces, hinges, canon, identify):
        self.dim = dim
        self.vertices = vertices
        self.cells = cells
        self.faces = faces
        self.hinges = hinges
        self.canon = canon              # chart vertex id -> canonical class id
        self.identify = identify        # explicit pair list as given
        self.interior_faces = [f for f in faces if not f.is_boundary]
        self.boundary_faces = [f for f in faces if f.is_boundary]
        self.interior_hinges = [h for h in hinges if not h.is_boundary]
        self.boundary_hinges = [h for h in hinges if h.is_boundary]

    @property
    def has_boundary(self):
        return bool(self.boundary_faces)

    # -- queries -----------------------------------------------------------

    def face(self, index):
        return self.faces[index]

    def hinge(self, index):
        return self.hinges[index]

    def face_side(self, face, cell_index):
        for s in face.sides:
            if s.cell == cell_index:
                return s
        raise NotIncident("cell %d not incident to face %d" % (cell_index, face.index))

    def vertex_class_count(self):
        used = set()
        for c in self.cells:
            for v in c.verts:
                used.add(self.canon[v])
        return len(used)

    def strata_counts(self):
        """Polytope counts per dimension 0..n (identification-aware)."""
        n = self.dim
        counts = {n: len(self.cells), n - 1: len(self.faces),
                  n - 2: len(self.hinges)}
        if n - 2 > 0:
            counts[0] = self.vertex_class_count()
        return counts

    def to_dict(self):
        cells = []
        for c in self.cells:
            entry = {"type": c.kind, "verts": list(c.verts)}
            # emit explicit coefficients only when the map is not the
            # default vertex interpolation
            default = (PolynomialMap.simplex_from_vertices(self.vertices[list(c.verts)])
                       if c.kind == "simplex"
                       else PolynomialMap.box_from_vertices(self.vertices[list(c.verts)]))
            same = default.coeffs.keys() == c.geom.coeffs.keys() and all(
                np.allclose(default.coeffs[k], c.geom.coeffs[k]) for k in c.geom.coeffs)
            if not same:
                entry["geom_degree"] = c.geom.degree
                entry["geom_coeffs"] = [[list(k), [float(x) for x in v]]
                                        for k, v in sorted(c.geom.coeffs.items())]
            cells.append(entry)
        return {"dim": self.dim,
                "vertices": [[float(x) for x in v] for v in self.vertices],
                "cells": cells,
                "identify": [[int(a), int(b)] for a, b in self.identify]}


# ===========================================================================
# construction
# ===========================================================================

def _canonical_face_order(ref, facet_idx, chart_verts, canon, kind, fdim):
    """Positions of a facet's vertices in canonical face order.

    Returns a tuple of positions into the facet's local vertex tuple.
    Simplex/interval faces sort by (canonical class, chart id); quad faces
    pick the smallest corner and order its two neighbours likewise, keeping
    the tensor (binary) structure intact.
    """
    m = len(chart_verts)
    keyed = sorted(range(m), key=lambda p: (canon[chart_verts[p]], chart_verts[p]))
    if kind == "simplex" or fdim <= 1 or m != 4:
        return tuple(keyed)
    # quad facet: binary order positions 0,1,2,3 with neighbours differing in one bit
    p0 = keyed[0]
    nbrs = [p0 ^ 1, p0 ^ 2]
    nbrs.sort(key=lambda p: (canon[chart_verts[p]], chart_verts[p]))
    p1, p2 = nbrs
    p3 = p0 ^ 3
    return (p0, p1, p2, p3)


def _face_sigma(kind, fdim, ref_verts):
    if fdim == 0:
        return PolynomialMap(0, ref_verts.shape[1], {(): ref_verts[0]})
    if kind == "simplex" or fdim == 1 or ref_verts.shape[0] == fdim + 1:
        return PolynomialMap.simplex_from_vertices(ref_verts)
    return PolynomialMap.box_from_vertices(ref_verts)


def _admissible_bijections(kind, fdim, m):
    """Vertex-order bijections of a facet that extend to affine self-maps."""
    if kind == "simplex" or fdim <= 1 or m != 4:
        return list(itertools.permutations(range(m)))
    # symmetries of the binary-ordered square
    perms = []
    base = [(0, 1, 2, 3), (1, 3, 0, 2), (3, 2, 1, 0), (2, 0, 3, 1)]
    for p in base:
        perms.append(p)
        perms.append((p[0], p[2], p[1], p[3]))  # diagonal flip
    return perms


def build_complex(vertices, cell_specs, identify=None, check_inverted=True):
    """Assemble a :class:`MeshComplex`.

    ``vertices``: (V, n) chart coordinates.
    ``cell_specs``: list of dicts with keys ``type`` ('simplex'|'box'),
    ``verts`` (chart vertex ids) and optionally ``geom`` (a
    :class:`PolynomialMap`; default is the straight/multilinear map through
    the listed vertices).
    ``identify``: list of explicit vertex-id pairs to glue.
    """
    vertices = np.asarray(vertices, float)
    if vertices.ndim != 2:
        raise ValueError("vertices must be a (V, n) array")
    dim = vertices.shape[1]
    identify = [tuple(p) for p in (identify or [])]

    uf = _UnionFind()
    for v in range(len(vertices)):
        uf.find(v)
    pair_ok = set()
    for a, b in identify:
        if not (0 <= a < len(vertices) and 0 <= b < len(vertices)):
            raise ValueError("identify pair (%d, %d) out of range" % (a, b))
        uf.union(a, b)
        pair_ok.add((a, b))
        pair_ok.add((b, a))
    canon = {v: uf.find(v) for v in range(len(vertices))}

    cells = []
    for ci, spec in enumerate(cell_specs):
        kind = spec.get("type", "simplex")
        verts = tuple(int(v) for v in spec["verts"])
        ref = ref_polytope(kind, dim)
        if len(verts) != len(ref.verts):
            raise ValueError("cell %d: expected %d vertices, got %d"
                             % (ci, len(ref.verts), len(verts)))
        geom = spec.get("geom")
        if geom is None:
            pts = vertices[list(verts)]
            geom = (PolynomialMap.simplex_from_vertices(pts) if kind == "simplex"
                    else PolynomialMap.box_from_vertices(pts))
        cells.append(Cell(ci, kind, verts, geom))

    if check_inverted:
        for c in cells:
            rule = quadrature_rule(dim, max(4, 2 * c.geom.degree), c.kind)
            dets = np.linalg.det(c.geom.jacobian(rule.points))
            if np.any(dets <= JACOBIAN_FLOOR):
                raise InvertedCell(
                    "cell %d has Jacobian determinant <= %g (min %.3e)"
                    % (c.index, JACOBIAN_FLOOR, float(dets.min())))

    faces = _build_faces(dim, vertices, cells, canon, pair_ok)
    hinges = _build_hinges(dim, cells, faces, canon)
    _build_fans(dim, cells, faces, hinges)

    complex_ = MeshComplex(dim, vertices, cells, faces, hinges, canon, identify)
    log.debug("built complex: %d cells, %d faces (%d interior), %d hinges",
              len(cells), len(faces), len(complex_.interior_faces), len(hinges))
    return complex_


def _build_faces(dim, vertices, cells, canon, pair_ok):
    fdim = dim - 1
    instances = []   # (cell, facet_idx, chart_verts_in_local_order)
    for c in cells:
        for fi, facet in enumerate(c.ref.facets):
            instances.append((c.index, fi, tuple(c.verts[j] for j in facet)))

    # step 1: pair facets with identical chart vertex sets
    by_set = {}
    for idx, inst in enumerate(instances):
        by_set.setdefault(frozenset(inst[2]), []).append(idx)
    matched = {}
    for vset, idxs in by_set.items():
        if len(idxs) > 2:
            cells_str = ", ".join(str(instances[i][0]) for i in idxs)
            raise NonManifold("face with vertices %s incident to cells %s"
                              % (sorted(vset), cells_str))
        if len(idxs) == 2:
            a, b = idxs
            # bijection: identical chart ids
            bij = tuple(instances[b][2].index(v) for v in instances[a][2])
            matched[a] = (b, bij)
            matched[b] = (a, tuple(np.argsort(bij)))

    # step 2: glue remaining facets through explicit identification pairs
    kind0 = _facet_kind(cells[0].kind, fdim)
    unmatched = [i for i in range(len(instances)) if i not in matched]
    by_class = {}
    for idx in unmatched:
        key = tuple(sorted(canon[v] for v in instances[idx][2]))
        by_class.setdefault(key, []).append(idx)
    for key, idxs in sorted(by_class.items()):
        if len(idxs) == 1:
            continue
        cand = {}
        for a in idxs:
            averts = instances[a][2]
            akind = _facet_kind(cells[instances[a][0]].kind, fdim)
            lst = []
            for b in idxs:
                if b == a:
                    continue
                bverts = instances[b][2]
                if len(bverts) != len(averts):
                    continue
                for perm in _admissible_bijections(akind, fdim, len(averts)):
                    ok = True
                    fallback = 0   # matches through chart-vertex equality only
                    for p in range(len(averts)):
                        if (averts[p], bverts[perm[p]]) in pair_ok:
                            continue
                        if averts[p] == bverts[perm[p]]:
                            fallback += 1
                        else:
                            ok = False
                            break
                    if ok:
                        lst.append((b, perm, fallback))
            if lst:
                # bijections realised purely by listed pairs outrank ones
                # that lean on shared chart vertices
                best = min(s for _, _, s in lst)
                lst = [(b, perm) for b, perm, s in lst if s == best]
            cand[a] = lst
        for a in idxs:
            if a in matched or not cand[a]:
                continue
            averts = instances[a][2]
            partners = {b for b, _ in cand[a]}
            if len(partners) > 1:
                raise NonManifold(
                    "facet %s of cell %d glues to multiple partners"
                    % (averts, instances[a][0]))
            if len(cand[a]) > 1:
                raise DanglingFace(
                    "ambiguous identification of facet %s of cell %d"
                    % (averts, instances[a][0]))
            b, perm = cand[a][0]
            if b in matched or {x for x, _ in cand[b]} != {a}:
                raise NonManifold(
                    "facet identifications around %s are not pairwise" % (averts,))
            matched[a] = (b, perm)
            matched[b] = (a, tuple(int(i) for i in np.argsort(perm)))

    # assemble face objects
    faces = []
    seen = set()
    entries = []
    for idx, (ci, fi, chart_verts) in enumerate(instances):
        if idx in seen:
            continue
        cell = cells[ci]
        kind = _facet_kind(cell.kind, fdim)
        order = _canonical_face_order(cell.ref, fi, chart_verts, canon, kind, fdim)
        side0 = _make_face_side(cells, ci, fi, order)
        sides = [side0]
        seen.add(idx)
        if idx in matched:
            jdx, bij = matched[idx]
            cj, fj, _ = instances[jdx]
            # canonical position p corresponds to local position order[p] on
            # side0 and bij[order[p]] on the partner side
            order_j = tuple(bij[p] for p in order)
            sides.append(_make_face_side(cells, cj, fj, order_j))
            seen.add(jdx)
        sides.sort(key=lambda s: (s.cell, s.facet))
        key = tuple(sorted(canon[v] for v in chart_verts))
        entries.append((key, sides[0].cell, sides[0].facet, kind, sides))
    entries.sort(key=lambda e: (e[0], e[1], e[2]))
    for i, (key, _c, _f, kind, sides) in enumerate(entries):
        faces.append(Face(i, fdim, kind, key, sides))
    # back-references
    for f in faces:
        for s in f.sides:
            cell = cells[s.cell]
            while len(cell.face_ids) < len(cell.ref.facets):
                cell.face_ids.append(None)
            cell.face_ids[s.facet] = f.index
    for c in cells:
        if None in c.face_ids or len(c.face_ids) != len(c.ref.facets):
            raise DanglingFace("cell %d has unenumerated facets" % c.index)
    return faces


def _make_face_side(cells, ci, fi, order):
    cell = cells[ci]
    facet = cell.ref.facets[fi]
    fdim = cell.geom.dim_in - 1
    kind = _facet_kind(cell.kind, fdim)
    local = [facet[p] for p in order]
    chart_verts = tuple(cell.verts[j] for j in local)
    ref_verts = cell.ref.verts[local]
    sigma = _face_sigma(kind, fdim, ref_verts)
    return FaceSide(ci, fi, chart_verts, ref_verts, sigma,
                    cell.geom.compose(sigma))


def _build_hinges(dim, cells, faces, canon):
    hdim = dim - 2
    if hdim < 0:
        return []
    instances = {}   # (cell, sorted local vertex ids) -> data
    for c in cells:
        for sub in c.ref.codim2:
            key = (c.index, tuple(sorted(sub)))
            fs = c.ref.facets_containing(sub)
            instances[key] = tuple(fs)

    uf = _UnionFind()
    for key in instances:
        uf.find(key)

    # union across interior faces: canonical face sub-polytopes map to the
    # same positions on both sides
    for f in faces:
        if f.is_boundary:
            continue
        s0, s1 = f.sides
        fref = ref_polytope(f.kind, f.dim)
        subs = fref.facets if f.dim >= 1 else []
        for sub in subs:
            keys = []
            for s in (s0, s1):
                cell = cells[s.cell]
                facet = cell.ref.facets[s.facet]
                # canonical position p of the face corresponds to cell-local
                # vertex index stored via s.chart_verts ordering
                local = []
                for p in sub:
                    cv = s.chart_verts[p]
                    # position of that chart vertex among the cell's copy
                    candidates = [j for j in facet if cell.verts[j] == cv]
                    local.append(candidates[0])
                keys.append((s.cell, tuple(sorted(local))))
            uf.union(keys[0], keys[1])

    groups = {}
    for key in instances:
        groups.setdefault(uf.find(key), []).append(key)

    hinges = []
    entries = []
    for root, keys in groups.items():
        keys.sort()
        ci0, lv0 = keys[0]
        chart0 = tuple(cells[ci0].verts[j] for j in lv0)
        ckey = tuple(sorted(canon[v] for v in chart0))
        entries.append((ckey, keys[0], keys))
    entries.sort(key=lambda e: (e[0], e[1]))
    hkind = "box" if hdim >= 1 and cells[0].kind == "box" else "simplex"
    for i, (ckey, _rep, keys) in enumerate(entries):
        sides = []
        for (ci, lv) in keys:
            cell = cells[ci]
            # canonical order of the (at most 2) hinge vertices
            ordered = sorted(lv, key=lambda j: (canon[cell.verts[j]], cell.verts[j]))
            ref_verts = cell.ref.verts[ordered]
            sigma = _face_sigma("simplex", hdim, ref_verts)
            sides.append(HingeSide(ci, tuple(ordered), ref_verts, sigma,
                                   cell.geom.compose(sigma),
                                   instances[(ci, lv)]))
        hinges.append(Hinge(i, hdim, hkind, ckey, sides))
    return hinges


def _boundary_inout(cell_ref, vertex_local):
    """(leave_facet, arrive_facet) of a 2D cell corner under ccw traversal."""
    cyc = cell_ref.cycle
    k = cyc.index(vertex_local)
    prev_v = cyc[k - 1]
    next_v = cyc[(k + 1) % len(cyc)]
    arrive = cell_ref.facets.index(tuple(sorted((prev_v, vertex_local))))
    leave = cell_ref.facets.index(tuple(sorted((vertex_local, next_v))))
    return leave, arrive


def _build_fans(dim, cells, faces, hinges):
    face_of = {}
    for f in faces:
        for s in f.sides:
            face_of[(s.cell, s.facet)] = f

    for h in hinges:
        side_lookup = {}
        for si, s in enumerate(h.sides):
            if len(s.facets) != 2:
                raise NonManifoldHinge(
                    "hinge %s in cell %d lies in %d facets"
                    % (h.key, s.cell, len(s.facets)))
            side_lookup[s.cell] = si

        def neighbor(side_idx, facet):
            f = face_of[(h.sides[side_idx].cell, facet)]
            if f.is_boundary:
                return None, f
            other = f.sides[0] if f.sides[1].cell == h.sides[side_idx].cell and \
                f.sides[1].facet == facet else f.sides[1]
            if other.cell == h.sides[side_idx].cell and other.facet == facet:
                other = f.sides[0]
            return side_lookup.get(other.cell), f

        # orientation: pick (leave, arrive) per side
        start = 0
        s0 = h.sides[start]
        if dim == 2:
            leave, arrive = _boundary_inout(cells[s0.cell].ref, s0.local_verts[0])
            if set((leave, arrive)) != set(s0.facets):  # pragma: no cover
                raise NonManifoldHinge("fan facets inconsistent at hinge %d" % h.index)
        else:
            leave, arrive = _fan_orientation_3d(cells[s0.cell], s0)

        fan = []
        visited = set()
        si, lv, ar = start, leave, arrive
        open_start = None
        while True:
            s = h.sides[si]
            fan.append((si, face_of[(s.cell, lv)].index, face_of[(s.cell, ar)].index))
            visited.add(si)
            nxt, f = neighbor(si, ar)
            if nxt is None:
                open_start = True
                break
            if nxt == start and len(visited) >= 1 and f.index == fan[0][1]:
                open_start = False
                break
            if nxt in visited:
                raise NonManifoldHinge("fan revisits cell at hinge %d" % h.index)
            ns = h.sides[nxt]
            # entering through the shared face: its facet in the next cell
            enter_facet = None
            for fc in ns.facets:
                if face_of[(ns.cell, fc)].index == f.index:
                    enter_facet = fc
            other_facet = ns.facets[0] if ns.facets[1] == enter_facet else ns.facets[1]
            si, lv, ar = nxt, enter_facet, other_facet
        h.is_boundary = bool(open_start)
        if h.is_boundary:
            # walk the other way from the start to catch the full open fan
            si, ar2 = start, leave
            rest = []
            while True:
                nxt, f = neighbor(si, ar2)
                if nxt is None:
                    break
                if nxt in visited:
                    raise NonManifoldHinge("fan revisits cell at hinge %d" % h.index)
                ns = h.sides[nxt]
                enter_facet = None
                for fc in ns.facets:
                    if face_of[(ns.cell, fc)].index == f.index:
                        enter_facet = fc
                other_facet = ns.facets[0] if ns.facets[1] == enter_facet else ns.facets[1]
                rest.append((nxt, face_of[(ns.cell, other_facet)].index,
                             face_of[(ns.cell, enter_facet)].index))
                visited.add(nxt)
                si, ar2 = nxt, other_facet
            fan = list(reversed(rest)) + fan
        if len(visited) != len(h.sides):
            raise NonManifoldHinge(
                "hinge %s fan visits %d of %d incident cells (pinched?)"
                % (h.key, len(visited), len(h.sides)))
        h.fan = fan


def _fan_orientation_3d(cell, hside):
    """Order the two facets at a 3D hinge so conormal rotation is ccw."""
    geom = cell.geom
    ref = cell.ref
    mid_ref = hside.ref_verts.mean(axis=0)
    J = geom.jacobian(mid_ref)
    d = J @ (ref.verts[hside.local_verts[1]] - ref.verts[hside.local_verts[0]]) \
        if len(hside.local_verts) == 2 else None
    d = d / np.linalg.norm(d)
    nus = []
    for fc in hside.facets:
        facet_mid = ref.verts[list(ref.facets[fc])].mean(axis=0)
        v = J @ (facet_mid - mid_ref)
        v = v - (v @ d) * d
        nus.append(v / np.linalg.norm(v))
    n_hat = np.cross(d, nus[0])
    if nus[1] @ n_hat > 0:
        return hside.facets[0], hside.facets[1]
    return hside.facets[1], hside.facets[0]


# ===========================================================================
# queries
# ===========================================================================

def euler_characteristic(complex_):
    """Alternating sum of polytope counts over all dimensions."""
    n = complex_.dim
    counts = complex_.strata_counts()
    return sum((-1) ** d * counts[d] for d in sorted(counts))


def induced_orientation(complex_, face, cell_index):
    """Sign of the cell-induced orientation vs the canonical face frame.

    +1 when (outward normal, canonical face tangents) is positively
    oriented in the chart; the two sides of an interior face get opposite
    signs.
    """
    side = complex_.face_side(face, cell_index)
    cell = complex_.cells[side.cell]
    s_mid = ref_polytope(face.kind, face.dim).centroid() if face.dim else np.zeros(0)
    xi = side.sigma.eval(s_mid)
    J = cell.geom.jacobian(xi)
    w = _reference_outward_normal(cell.ref, side.facet)
    w_chart = np.linalg.solve(J.T, w)
    if face.dim == 0:
        return 1 if w_chart[0] > 0 else -1
    T = side.chart_map.jacobian(s_mid)
    M = np.column_stack([w_chart, T])
    s = np.linalg.det(M)
    return 1 if s > 0 else -1


def _reference_outward_normal(ref, facet_idx):
    """Outward normal of a reference facet (reference coordinates)."""
    facet = ref.facets[facet_idx]
    pts = ref.verts[list(facet)]
    mid = pts.mean(axis=0)
    centroid = ref.centroid()
    if ref.dim == 1:
        w = mid - centroid
        return w / np.linalg.norm(w)
    # normal to the facet hyperplane
    A = (pts[1:] - pts[0]).T
    # null space of A^T
    q, _ = np.linalg.qr(np.column_stack([A, mid - centroid]))
    w = q[:, -1]
    if w @ (mid - centroid) < 0:
        w = -w
    return w


def hinge_fan(complex_, hinge):
    """Ordered fan: list of (cell_index, enter_face_id, leave_face_id).

    For interior hinges the list is cyclic (the leave face of the last
    entry is the enter face of the first); boundary hinges give an open
    path whose first/last faces are boundary faces.
    """
    out = []
    for (si, enter_fid, leave_fid) in hinge.fan:
        out.append((hinge.sides[si].cell, enter_fid, leave_fid))
    return out


# ===========================================================================
# refinement
# ===========================================================================

_TRI_CHILDREN = [
    ((0,), (0, 1), (0, 2)),
    ((0, 1), (1,), (1, 2)),
    ((0, 2), (1, 2), (2,)),
    ((0, 1), (1, 2), (0, 2)),
]

_TET_CHILDREN = [
    ((0,), (0, 1), (0, 2), (0, 3)),
    ((0, 1), (1,), (1, 2), (1, 3)),
    ((0, 2), (1, 2), (2,), (2, 3)),
    ((0, 3), (1, 3), (2, 3), (3,)),
    ((0, 1), (0, 2), (0, 3), (1, 3)),
    ((0, 1), (0, 2), (1, 2), (1, 3)),
    ((0, 2), (0, 3), (1, 3), (2, 3)),
    ((0, 2), (1, 2), (1, 3), (2, 3)),
]


def refine(complex_):
    """Uniform red refinement of a simplicial complex (2^n children/cell).

    Curved geometry is preserved by composing each parent map with the
    affine embedding of the child into the parent reference simplex.  New
    vertices on glued faces are identified across the gluing.
    """
    for c in complex_.cells:
        if c.kind != "simplex":
            raise UnsupportedCellType(
                "red refinement only implemented for simplices (cell %d is %r)"
                % (c.index, c.kind))
    dim = complex_.dim
    children = _TRI_CHILDREN if dim == 2 else _TET_CHILDREN
    if dim not in (2, 3):
        raise UnsupportedCellType("refinement implemented for dimensions 2 and 3")

    new_vertices = [v.copy() for v in complex_.vertices]
    midpoint_id = {}

    def node_id(cell, combo):
        """Chart vertex id for a parent vertex or an edge midpoint."""
        if len(combo) == 1:
            return cell.verts[combo[0]]
        key = tuple(sorted(cell.verts[j] for j in combo))
        if key not in midpoint_id:
            ref_mid = cell.ref.verts[list(combo)].mean(axis=0)
            new_vertices.append(cell.geom.eval(ref_mid))
            midpoint_id[key] = len(new_vertices) - 1
        return midpoint_id[key]

    cell_specs = []
    for cell in complex_.cells:
        for combos in children:
            verts = [node_id(cell, cb) for cb in combos]
            ref_verts = np.array([cell.ref.verts[list(cb)].mean(axis=0)
                                  for cb in combos])
            A = (ref_verts[1:] - ref_verts[0]).T
            if np.linalg.det(A) < 0:
                verts[-2], verts[-1] = verts[-1], verts[-2]
                ref_verts[[-2, -1]] = ref_verts[[-1, -2]]
                A = (ref_verts[1:] - ref_verts[0]).T
            sub = PolynomialMap.affine(A, ref_verts[0])
            cell_specs.append({"type": "simplex", "verts": verts,
                               "geom": cell.geom.compose(sub)})

    # carry over explicit pairs, and add midpoint pairs along glued faces
    identify = list(complex_.identify)
    for f in complex_.interior_faces:
        s0, s1 = f.sides
        if s0.chart_verts == s1.chart_verts:
            continue  # plain shared face, nothing glued
        # identify midpoints of corresponding face sub-edges (2D: the face
        # itself; 3D: each edge of the triangular face)
        edge_combos = _sub_edges(f.dim)
        for combo in edge_combos:
            ids = []
            for s in (s0, s1):
                pair = tuple(sorted(s.chart_verts[p] for p in combo))
                if pair not in midpoint_id:
                    ids = None
                    break
                ids.append(midpoint_id[pair])
            if ids and ids[0] != ids[1]:
                identify.append((ids[0], ids[1]))

    return build_complex(np.asarray(new_vertices), cell_specs, identify)


def _sub_edges(fdim):
    if fdim == 1:
        return [(0, 1)]
    if fdim == 2:
        return [(0, 1), (0, 2), (1, 2)]
    return []


# ===========================================================================
# JSON I/O
# ===========================================================================

def load_mesh(source):
    """Build a complex from the mesh JSON schema (dict, path or JSON text)."""
    data = _load_json(source)
    try:
        dim = int(data["dim"])
        vertices = np.asarray(data["vertices"], float)
        cell_specs = []
        for spec in data["cells"]:
            entry = {"type": spec.get("type", "simplex"),
                     "verts": [int(v) for v in spec["verts"]]}
            if "geom_coeffs" in spec:
                coeffs = {}
                for key, val in spec["geom_coeffs"]:
                    k = tuple(int(x) for x in key)
                    if len(k) != dim or any(x < 0 for x in k):
                        raise ValueError("bad geometry multi-index %r" % (key,))
                    coeffs[k] = np.asarray(val, float)
                entry["geom"] = PolynomialMap(dim, dim, coeffs)
                want = spec.get("geom_degree")
                if want is not None and entry["geom"].degree > int(want):
                    raise ValueError("geom_coeffs exceed declared geom_degree")
            cell_specs.append(entry)
        identify = [tuple(int(v) for v in p) for p in data.get("identify", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise IoError("malformed mesh input: %s" % exc) from exc
    if vertices.ndim != 2 or vertices.shape[1] != dim:
        raise IoError("mesh vertices must be a (V, %d) array" % dim)
    return build_complex(vertices, cell_specs, identify)


def _load_json(source):
    if isinstance(source, dict):
        return source
    text = None
    s = str(source)
    if s.lstrip().startswith("{"):
        text = s
    else:
        try:
            with open(s, "r") as fh:
                text = fh.read()
        except OSError as exc:
            raise IoError("cannot read %r: %s" % (s, exc)) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise IoError("invalid JSON: %s" % exc) from exc
