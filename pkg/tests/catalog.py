"""Shared mesh and metric builders for the test suite.

Everything here returns plain JSON-style dicts in the mesh/metric input
schema, so tests exercise the same loading path as the CLI.  The zoo
covers the closed flat surfaces (cube, torus, octahedron), curved-edge
and curved-metric examples (disk, spherical band, gnomonic octahedron),
and small generic meshes for randomized identities.
"""

import itertools
import math

import numpy as np

from reggecurv.mesh import build_complex, induced_orientation, load_mesh, refine

SQ3 = math.sqrt(3.0)
CHART_GAP = 2.2          # x-offset between disjoint 2D charts


def _all_pairs(groups):
    out = []
    for grp in groups:
        out += [[a, b] for a, b in itertools.combinations(grp, 2)]
    return out


def flat_metric(dim):
    ent = [["1" if i == j else "0" for j in range(dim)] for i in range(dim)]
    return {"kind": "expression", "entries": ent}


# ===========================================================================
# closed flat surfaces
# ===========================================================================

def cube_surface():
    """Six unit-square charts glued into the surface of a cube.

    Chart axes are chosen per face so that the glued surface is
    consistently oriented (every interior edge is traversed in opposite
    directions by its two squares).
    """
    verts, cells = [], []
    copies = {v: [] for v in range(8)}
    f = 0
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        for s in (0, 1):
            base = len(verts)
            for vv in (0, 1):
                for uu in (0, 1):
                    verts.append([CHART_GAP * f + uu, float(vv)])
            cells.append({"type": "box",
                          "verts": [base, base + 1, base + 2, base + 3]})
            for vv in (0, 1):
                for uu in (0, 1):
                    if s == 1:
                        cv = (s << a) | (uu << b) | (vv << c)
                    else:
                        cv = (s << a) | (vv << b) | (uu << c)
                    copies[cv].append(base + 2 * vv + uu)
            f += 1
    return {"dim": 2, "vertices": verts, "cells": cells,
            "identify": _all_pairs(copies.values())}


def flat_torus(m=3):
    """m x m grid of unit squares with opposite boundary edges glued.

    m >= 3: below that the quotient has doubled edges between the same
    vertex classes, which vertex-pair gluing cannot disambiguate.
    """
    if m < 3:
        raise ValueError("flat_torus needs m >= 3")
    verts, cells = [], []
    vid = {}
    for j in range(m + 1):
        for i in range(m + 1):
            vid[(i, j)] = len(verts)
            verts.append([float(i), float(j)])
    for j in range(m):
        for i in range(m):
            cells.append({"type": "box",
                          "verts": [vid[(i, j)], vid[(i + 1, j)],
                                    vid[(i, j + 1)], vid[(i + 1, j + 1)]]})
    classes = {}
    for (i, j), v in vid.items():
        classes.setdefault((i % m, j % m), []).append(v)
    groups = [grp for grp in classes.values() if len(grp) > 1]
    return {"dim": 2, "vertices": verts, "cells": cells,
            "identify": _all_pairs(groups)}


OCTA_CORNERS = [(0.0, 0.0), (1.0, 0.0), (0.5, SQ3 / 2)]


def _octa_faces():
    """(signs, corner order) per face, matching the cell order of
    :func:`octa_surface`; the corner swap keeps the gluing oriented."""
    out = []
    for s1, s2, s3 in itertools.product((1, -1), repeat=3):
        order = [(0, s1), (1, s2), (2, s3)]
        if s1 * s2 * s3 < 0:
            order = [order[1], order[0], order[2]]
        out.append(((s1, s2, s3), order))
    return out


def octa_surface():
    """Eight unit equilateral triangles glued into an octahedron surface.

    All edges have chart length 1, so the flat per-chart metric is a
    genuine edge-length assignment: tangentially continuous, with angle
    defect 2 pi / 3 at each of the six vertices.
    """
    verts, cells = [], []
    copies = {v: [] for v in range(6)}
    for f, (_, order) in enumerate(_octa_faces()):
        base = len(verts)
        for (x, y) in OCTA_CORNERS:
            verts.append([CHART_GAP * f + x, y])
        cells.append({"type": "simplex", "verts": [base, base + 1, base + 2]})
        for k, (axis, sign) in enumerate(order):
            copies[2 * axis + (0 if sign > 0 else 1)].append(base + k)
    return {"dim": 2, "vertices": verts, "cells": cells,
            "identify": _all_pairs(copies.values())}


# ===========================================================================
# spheres
# ===========================================================================

def gnomonic_octa_metric(complex_):
    """Per-cell exact round-sphere metric over an octahedron complex.

    Each chart triangle is mapped affinely onto the corresponding face
    of the regular octahedron inscribed in the unit sphere, and the
    sphere metric is pulled back through the central projection of that
    face plane.  Works on any refinement of :func:`octa_surface` because
    children stay inside the parent chart (looked up by x-offset).
    """
    faces = _octa_faces()
    axes = np.eye(3)
    entries_by_face = []
    for f, (_, order) in enumerate(faces):
        W = np.array([sign * axes[axis] for axis, sign in order])
        entries_by_face.append(_gnomonic_entries(CHART_GAP * f, W))
    cells = []
    for cell in complex_.cells:
        cx = float(cell.geom.eval(cell.ref.centroid()[None, :])[0, 0])
        f = int(round((cx - 0.5) / CHART_GAP))
        f = min(max(f, 0), len(faces) - 1)
        cells.append({"entries": entries_by_face[f]})
    return {"kind": "expression_per_cell", "cells": cells}


def _gnomonic_entries(offx, W):
    """Metric entry strings for the central projection of one face plane."""
    Binv = np.array([[1.0, -1.0 / SQ3], [0.0, 2.0 / SQ3]])
    A3 = np.stack([W[1] - W[0], W[2] - W[0]], axis=1)
    Mm = A3 @ Binv                       # plane point P = w0 + Mm (x - C0)
    T = [Mm[:, 0], Mm[:, 1]]
    w0 = W[0]
    u = "(x1 - (%r))" % float(offx)
    v = "x2"

    def aff(c0, c1, c2):
        return "((%r) + (%r)*%s + (%r)*%s)" % (
            float(c0), float(c1), u, float(c2), v)

    rho = ("((%r) + (%r)*%s + (%r)*%s + (%r)*%s^2 + (%r)*%s*%s + (%r)*%s^2)"
           % (float(w0 @ w0), float(2 * w0 @ T[0]), u, float(2 * w0 @ T[1]), v,
              float(T[0] @ T[0]), u, float(2 * T[0] @ T[1]), u, v,
              float(T[1] @ T[1]), v))
    a = [aff(w0 @ T[i], T[0] @ T[i], T[1] @ T[i]) for i in range(2)]
    ent = []
    for i in range(2):
        row = []
        for j in range(2):
            row.append("(%r)/%s - (%s)*(%s)/(%s^2)"
                       % (float(T[i] @ T[j]), rho, a[i], a[j], rho))
        ent.append(row)
    return ent


def sphere_boxes():
    """2 x 4 grid of boxes on the (theta, phi) rectangle of the sphere.

    The phi = 0 and phi = 2 pi columns are glued; the pole rows remain
    boundary.  Pair with :func:`sphere_metric`.
    """
    th = [0.0, math.pi / 2, math.pi]
    ph = [k * math.pi / 2 for k in range(5)]
    verts, cells = [], []
    vid = {}
    for j in range(5):
        for i in range(3):
            vid[(i, j)] = len(verts)
            verts.append([th[i], ph[j]])
    for j in range(4):
        for i in range(2):
            cells.append({"type": "box",
                          "verts": [vid[(i, j)], vid[(i + 1, j)],
                                    vid[(i, j + 1)], vid[(i + 1, j + 1)]]})
    identify = [[vid[(i, 0)], vid[(i, 4)]] for i in range(3)]
    return {"dim": 2, "vertices": verts, "cells": cells, "identify": identify}


def sphere_metric():
    return {"kind": "expression",
            "entries": [["1", "0"], ["0", "sin(x1)^2"]]}


def sphere_band(eps=0.3):
    """Single box chart covering the sphere between two polar caps."""
    verts = [[eps, 0.0], [math.pi - eps, 0.0],
             [eps, 2 * math.pi], [math.pi - eps, 2 * math.pi]]
    return {"dim": 2, "vertices": verts,
            "cells": [{"type": "box", "verts": [0, 1, 2, 3]}],
            "identify": [[0, 2], [1, 3]]}


# ===========================================================================
# planar meshes
# ===========================================================================

def unit_square():
    return {"dim": 2, "vertices": [[0, 0], [1, 0], [0, 1], [1, 1]],
            "cells": [{"type": "box", "verts": [0, 1, 2, 3]}]}


def triangle_pair():
    return {"dim": 2, "vertices": [[0, 0], [1, 0], [0, 1], [1, 1]],
            "cells": [{"type": "simplex", "verts": [0, 1, 2]},
                      {"type": "simplex", "verts": [1, 3, 2]}]}


def square_four_triangles():
    """Unit square split into four triangles around its center."""
    verts = [[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]]
    cells = [{"type": "simplex", "verts": [k, (k + 1) % 4, 4]}
             for k in range(4)]
    return {"dim": 2, "vertices": verts, "cells": cells}


def cone_fan(wedges=3, apex_angle=math.pi / 3):
    """Flat triangles sharing one interior vertex with total angle
    wedges * apex_angle; angle defect 2 pi minus that."""
    verts, cells, apexes = [], [], []
    rims = []
    for k in range(wedges):
        b = len(verts)
        verts += [[CHART_GAP * k, 0.0], [CHART_GAP * k + 1.0, 0.0],
                  [CHART_GAP * k + math.cos(apex_angle), math.sin(apex_angle)]]
        cells.append({"type": "simplex", "verts": [b, b + 1, b + 2]})
        apexes.append(b)
        rims.append((b + 1, b + 2))
    identify = _all_pairs([apexes])
    for k in range(wedges):
        identify.append([rims[k][1], rims[(k + 1) % wedges][0]])
    return {"dim": 2, "vertices": verts, "cells": cells, "identify": identify}


def disk_mesh(n=64, fit_degree=5):
    """Unit disk as a fan of triangles with polynomial curved rim edges.

    Each rim edge carries a degree ``fit_degree`` geometry map whose
    restriction to the outer edge interpolates the circular arc; the two
    radial edges stay straight, so neighbouring cells still match.
    """
    verts = [[0.0, 0.0]]
    for k in range(n):
        a = 2 * math.pi * k / n
        verts.append([math.cos(a), math.sin(a)])
    cells = []
    K = fit_degree - 2
    # interpolation nodes for the scaled sagitta q(t) = c(t) / (t(1-t))
    nodes = 0.5 - 0.5 * np.cos(np.pi * (2 * np.arange(K + 1) + 1) / (2 * K + 2))
    for k in range(n):
        i1, i2 = 1 + k, 1 + (k + 1) % n
        v1, v2 = np.array(verts[i1]), np.array(verts[i2])
        th0, dth = 2 * math.pi * k / n, 2 * math.pi / n
        arc = np.stack([np.cos(th0 + nodes * dth), np.sin(th0 + nodes * dth)],
                       axis=1)
        chord = v1[None, :] + nodes[:, None] * (v2 - v1)[None, :]
        qv = (arc - chord) / (nodes * (1 - nodes))[:, None]
        qc = np.polynomial.polynomial.polyfit(nodes, qv, K)   # (K+1, 2)
        coeffs = {(0, 0): np.zeros(2), (1, 0): v1 - 0.0, (0, 1): v2 - 0.0}
        coeffs[(1, 0)] = v1.copy()
        coeffs[(0, 1)] = v2.copy()
        # bubble x1 x2 x2^m (x1 + x2)^(K - m) keeps radial edges straight
        for m in range(K + 1):
            for r in range(K - m + 1):
                mi = (1 + r, 1 + m + (K - m) - r)
                coeffs[mi] = coeffs.get(mi, np.zeros(2)) + (
                    math.comb(K - m, r) * qc[m])
        cells.append({"type": "simplex", "verts": [0, i1, i2],
                      "geom_degree": fit_degree,
                      "geom_coeffs": [[list(mi), [float(x) for x in vec]]
                                      for mi, vec in sorted(coeffs.items())]})
    return {"dim": 2, "vertices": verts, "cells": cells}


# ===========================================================================
# 3D meshes
# ===========================================================================

def tet_fan(m=3, skew=0.1):
    """Fan of tetrahedra around the interior edge (0,0,0)-(0,0,1)."""
    verts = [[0.0, 0.0, 0.0], [0.0, 0.0, 1.0]]
    for k in range(m):
        a = 2 * math.pi * k / m
        verts.append([math.cos(a), math.sin(a), skew * math.sin(2 * a)])
    cells = []
    for k in range(m):
        vs = [0, 1, 2 + k, 2 + (k + 1) % m]
        E = np.array([np.array(verts[v]) - np.array(verts[vs[0]])
                      for v in vs[1:]]).T
        if np.linalg.det(E) < 0:
            vs = [vs[0], vs[1], vs[3], vs[2]]
        cells.append({"type": "simplex", "verts": vs})
    return {"dim": 3, "vertices": verts, "cells": cells}


def two_tets():
    return {"dim": 3,
            "vertices": [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1],
                         [1, 1, 1]],
            "cells": [{"type": "simplex", "verts": [0, 1, 2, 3]},
                      {"type": "simplex", "verts": [1, 2, 4, 3]}]}


def right_angle_tet_fan(wedges=3):
    """Right-angle tetrahedra in disjoint charts glued cyclically around
    one interior edge; flat metric dihedral sum is wedges * pi / 2, so the
    edge carries a genuine concentrated-curvature defect."""
    verts, cells = [], []
    tips, tops, rims = [], [], []
    for k in range(wedges):
        b = len(verts)
        verts += [[CHART_GAP * k, 0.0, 0.0], [CHART_GAP * k, 0.0, 1.0],
                  [CHART_GAP * k + 1.0, 0.0, 0.0], [CHART_GAP * k, 1.0, 0.0]]
        cells.append({"type": "simplex", "verts": [b, b + 1, b + 2, b + 3]})
        tips.append(b)
        tops.append(b + 1)
        rims.append((b + 2, b + 3))
    identify = _all_pairs([tips, tops])
    for k in range(wedges):
        identify.append([rims[k][1], rims[(k + 1) % wedges][0]])
    return {"dim": 3, "vertices": verts, "cells": cells,
            "identify": identify}


# ===========================================================================
# random metrics
# ===========================================================================

def random_poly_metric(complex_, degree, rng, scale=0.25):
    """Random polynomial metric dict, uniformly positive definite.

    Entries are global polynomials of the given total degree; a metric
    that is smooth across the whole chart plane is tangentially
    continuous on any single-chart complex.  Coefficients are scaled by
    the coordinate bounds so diagonal dominance keeps it SPD.
    """
    n = complex_.dim
    bound = 1.0
    for cell in complex_.cells:
        bound = max(bound, float(np.abs(cell.geom.eval(cell.ref.verts)).max()))
    monos = [mi for mi in itertools.product(range(degree + 1), repeat=n)
             if 0 < sum(mi) <= degree]
    amp = scale / (len(monos) * max(1.0, bound) ** degree)

    def poly(diag):
        parts = ["2" if diag else "0"]
        for mi in monos:
            c = float(rng.uniform(-amp, amp) * max(1.0, bound) ** (degree - sum(mi)))
            term = "*".join(["(%r)" % c] + ["x%d^%d" % (d + 1, e)
                                            for d, e in enumerate(mi) if e])
            parts.append(term)
        return " + ".join(parts)

    ent = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            ent[i][j] = ent[j][i] = poly(i == j)
    return {"kind": "expression", "entries": ent}


# ===========================================================================
# helpers
# ===========================================================================

def build(mesh_dict):
    return load_mesh(mesh_dict)


def is_oriented(complex_):
    """True when every interior face is induced with opposite signs."""
    for face in complex_.interior_faces:
        s = sum(induced_orientation(complex_, face, side.cell)
                for side in face.sides)
        if s != 0:
            return False
    return True


def refine_times(complex_, levels):
    for _ in range(levels):
        complex_ = refine(complex_)
    return complex_
