"""Piecewise-smooth metric fields over a mesh complex.

Metric components are symmetric matrices attached cellwise.  Two storage
modes exist:

* **expression** — closed-form entries in chart coordinates ``x1..xn``
  (optionally one set per cell), evaluated exactly with symbolic chart
  derivatives;
* **coefficients** — per-cell polynomials in the *reference* coordinates
  of each cell, as produced by :func:`interpolate`; chart derivatives are
  obtained through the inverse-geometry chain rule.

``evaluate`` always reports components and derivatives in the cell's
chart coordinate frame, which is the frame all downstream curvature
algebra uses.  Tangential-tangential continuity across interior faces is
a property of the *field* (checked numerically by
:func:`check_tt_continuity`), not of the storage mode.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError, IoError, OutOfCell, SingularMetric
from .expressions import parse_expression
from .mesh import _load_json, ref_polytope
from .quadrature import quadrature_rule

log = logging.getLogger(__name__)

DOMAIN_TOL = 1e-10


def parse_metric_expression(text, dim=None):
    """Parse one scalar metric-entry expression into an evaluable AST.

    Symbols x1..xn (aliases x, y, z) refer to chart coordinates; the AST
    supports ``eval`` on coordinate arrays and symbolic ``diff``.
    """
    return parse_expression(text, dim=dim)


# ===========================================================================
# evaluated values
# ===========================================================================

@dataclass
class MetricValues:
    """Metric data at a batch of points, chart-frame indices.

    ``g[p, a, b]``; ``dg[p, a, b, c]`` = d g_ab / d x^c;
    ``d2g[p, a, b, c, d]`` = d^2 g_ab / d x^c d x^d.
    """
    g: np.ndarray
    dg: np.ndarray = None
    d2g: np.ndarray = None


def _check_domain(ref, pts):
    pts = np.atleast_2d(pts)
    if ref.kind == "simplex":
        bad = np.any(pts < -DOMAIN_TOL, axis=1) | (pts.sum(axis=1) > 1 + DOMAIN_TOL)
    else:
        bad = np.any(pts < -DOMAIN_TOL, axis=1) | np.any(pts > 1 + DOMAIN_TOL, axis=1)
    if np.any(bad):
        raise OutOfCell("reference point outside cell domain: %s"
                        % pts[bad][0].tolist())


# ===========================================================================
# expression-backed metrics
# ===========================================================================

class _EntryTable:
    """Parsed symmetric matrix of expressions with cached derivatives."""

    def __init__(self, entries, dim):
        n = len(entries)
        if any(len(row) != n for row in entries):
            raise ValueError("metric entries must form a square matrix")
        self.n = n
        self.dim = dim
        self.ast = [[parse_expression(str(entries[i][j]), dim=dim)
                     for j in range(n)] for i in range(n)]
        self.text = [[str(entries[i][j]) for j in range(n)] for i in range(n)]
        self._d1 = {}
        self._d2 = {}

    def first(self, i, j, c):
        key = (i, j, c)
        if key not in self._d1:
            self._d1[key] = self.ast[i][j].diff(c)
        return self._d1[key]

    def second(self, i, j, c, d):
        key = (i, j) + tuple(sorted((c, d)))
        if key not in self._d2:
            self._d2[key] = self.first(i, j, key[2]).diff(key[3])
        return self._d2[key]

    def eval_all(self, x, order):
        k, n = x.shape[0], self.n
        g = np.empty((k, n, n))
        for i in range(n):
            for j in range(i, n):
                g[:, i, j] = g[:, j, i] = self.ast[i][j].eval(x.T)
        dg = d2g = None
        if order >= 1:
            dg = np.empty((k, n, n, n))
            for i in range(n):
                for j in range(i, n):
                    for c in range(n):
                        dg[:, i, j, c] = dg[:, j, i, c] = self.first(i, j, c).eval(x.T)
        if order >= 2:
            d2g = np.empty((k, n, n, n, n))
            for i in range(n):
                for j in range(i, n):
                    for c in range(n):
                        for d in range(c, n):
                            val = self.second(i, j, c, d).eval(x.T)
                            d2g[:, i, j, c, d] = d2g[:, i, j, d, c] = val
                            d2g[:, j, i, c, d] = d2g[:, j, i, d, c] = val
        return g, dg, d2g


class ExpressionMetric:
    """Metric given by closed-form chart-coordinate entries.

    ``tables`` holds either one shared entry table or one per cell.
    """

    kind = "expression"

    def __init__(self, dim, tables, per_cell=False, source_degree=None):
        self.dim = dim
        self.tables = tables
        self.per_cell = per_cell
        self.source_degree = source_degree

    @staticmethod
    def from_entries(entries, dim):
        return ExpressionMetric(dim, [_EntryTable(entries, dim)])

    @staticmethod
    def from_cell_entries(entries_list, dim):
        tables = [_EntryTable(e, dim) for e in entries_list]
        return ExpressionMetric(dim, tables, per_cell=True)

    def _table(self, cell_index):
        return self.tables[cell_index if self.per_cell else 0]

    def evaluate(self, complex_, cell_index, ref_points, order=0,
                 check_domain=False):
        cell = complex_.cells[cell_index]
        pts = np.atleast_2d(np.asarray(ref_points, float))
        if check_domain:
            _check_domain(cell.ref, pts)
        x = cell.geom.eval(pts)
        table = self._table(cell_index)
        if table.n != self.dim:
            raise ValueError("metric dimension mismatch")
        try:
            with np.errstate(all="raise"):
                g, dg, d2g = table.eval_all(x, order)
        except FloatingPointError as exc:
            raise EvaluationError("metric evaluation failed: %s" % exc) from exc
        if not np.all(np.isfinite(g)):
            raise EvaluationError("metric evaluation produced non-finite values")
        return MetricValues(g, dg, d2g)

    def to_dict(self):
        if self.per_cell:
            return {"kind": "expression_per_cell",
                    "cells": [{"entries": t.text} for t in self.tables]}
        return {"kind": "expression", "entries": self.tables[0].text}


# ===========================================================================
# per-cell polynomial (coefficient) metrics
# ===========================================================================

class PolynomialMetric:
    """Cellwise polynomial components in reference coordinates.

    ``cells[c]`` is a dict multi-index -> (n, n) symmetric array.  Chart
    derivatives come from the inverse of the cell geometry Jacobian; the
    second order additionally needs the geometry Hessian (curvilinear
    cells).
    """

    kind = "coefficients"

    def __init__(self, dim, cell_coeffs):
        self.dim = dim
        self.cells = [{tuple(k): np.asarray(v, float) for k, v in cc.items()}
                      for cc in cell_coeffs]

    # -- reference-coordinate evaluation ----------------------------------

    def _eval_ref(self, cc, pts, order):
        k, n = pts.shape[0], self.dim
        g = np.zeros((k, n, n))
        dg = np.zeros((k, n, n, n)) if order >= 1 else None
        d2g = np.zeros((k, n, n, n, n)) if order >= 2 else None
        for key, mat in cc.items():
            mono = np.ones(k)
            for i, e in enumerate(key):
                if e:
                    mono = mono * pts[:, i] ** e
            g += mono[:, None, None] * mat
            if order >= 1:
                for c in range(n):
                    if key[c] == 0:
                        continue
                    dm = np.ones(k) * key[c]
                    for i, e in enumerate(key):
                        ee = e - 1 if i == c else e
                        if ee:
                            dm = dm * pts[:, i] ** ee
                    dg[:, :, :, c] += dm[:, None, None] * mat
                    if order >= 2:
                        for d in range(n):
                            ee_c = key[c] - 1
                            e_d = ee_c if d == c else key[d]
                            if e_d == 0:
                                continue
                            d2 = np.ones(k) * key[c] * e_d
                            for i, e in enumerate(key):
                                ee = e - (i == c) - (i == d)
                                if ee:
                                    d2 = d2 * pts[:, i] ** ee
                            d2g[:, :, :, c, d] += d2[:, None, None] * mat
        return g, dg, d2g

    def evaluate(self, complex_, cell_index, ref_points, order=0,
                 check_domain=False):
        cell = complex_.cells[cell_index]
        pts = np.atleast_2d(np.asarray(ref_points, float))
        if check_domain:
            _check_domain(cell.ref, pts)
        g, dgr, d2gr = self._eval_ref(self.cells[cell_index], pts, order)
        dg = d2g = None
        if order >= 1:
            J = cell.geom.jacobian(pts)            # (k, n, n): dx/dxi
            Jinv = np.linalg.inv(J)                 # dxi/dx
            dg = np.einsum("pabi,pic->pabc", dgr, Jinv)
            if order >= 2:
                H = cell.geom.second(pts)           # (k, n, i, j): d2x/dxi_i dxi_j
                # second derivative of the inverse map:
                # d2xi^m/dx^c dx^d = -Jinv^m_t H^t_ij Jinv^i_c Jinv^j_d
                Xi2 = -np.einsum("pmt,ptij,pic,pjd->pmcd", Jinv, H, Jinv, Jinv)
                d2g = (np.einsum("pabij,pic,pjd->pabcd", d2gr, Jinv, Jinv)
                       + np.einsum("pabm,pmcd->pabcd", dgr, Xi2))
        return MetricValues(g, dg, d2g)

    def to_dict(self):
        per_cell = []
        for cc in self.cells:
            per_cell.append([[list(k), [[float(x) for x in row] for row in mat]]
                             for k, mat in sorted(cc.items())])
        return {"kind": "coefficients", "per_cell": per_cell}


# ===========================================================================
# interpolation
# ===========================================================================

def _lattice(kind, dim, degree):
    """Nodal lattice and matching monomial multi-indices (unisolvent)."""
    if kind == "simplex":
        combos = [c for c in itertools.product(range(degree + 1), repeat=dim)
                  if sum(c) <= degree]
    else:
        combos = list(itertools.product(range(degree + 1), repeat=dim))
    combos.sort()
    if degree == 0:
        ref = ref_polytope(kind, dim)
        return np.atleast_2d(ref.centroid()), [tuple([0] * dim)]
    pts = np.array(combos, float) / degree
    return pts, [tuple(c) for c in combos]


def interpolate(metric, complex_, degree):
    """Nodal interpolation onto cellwise reference polynomials."""
    if degree < 0:
        raise ValueError("interpolation degree must be >= 0")
    n = complex_.dim
    cell_coeffs = []
    for cell in complex_.cells:
        pts, monos = _lattice(cell.kind, n, degree)
        V = np.empty((len(pts), len(monos)))
        for m, mono in enumerate(monos):
            col = np.ones(len(pts))
            for i, e in enumerate(mono):
                if e:
                    col = col * pts[:, i] ** e
            V[:, m] = col
        vals = metric.evaluate(complex_, cell.index, pts, order=0).g
        flat = vals.reshape(len(pts), n * n)
        coef = np.linalg.solve(V, flat)
        cc = {}
        for m, mono in enumerate(monos):
            mat = coef[m].reshape(n, n)
            mat = 0.5 * (mat + mat.T)
            if np.any(mat != 0.0):
                cc[mono] = mat
        cell_coeffs.append(cc)
    return PolynomialMetric(n, cell_coeffs)


# ===========================================================================
# verification helpers
# ===========================================================================

def check_positive_definite(complex_, metric, degree=6, raise_on_fail=True):
    """Smallest metric eigenvalue over quadrature samples of every cell."""
    worst = np.inf
    for cell in complex_.cells:
        rule = quadrature_rule(complex_.dim, degree, cell.kind)
        g = metric.evaluate(complex_, cell.index, rule.points).g
        ev = np.linalg.eigvalsh(g).min()
        worst = min(worst, float(ev))
    if raise_on_fail and worst <= 0.0:
        raise SingularMetric("metric not positive definite (min eigenvalue %.3e)"
                             % worst)
    return worst


def check_tt_continuity(complex_, metric, degree=8):
    """Max mismatch of tangential-tangential components per interior face.

    Both sides of each interior face are sampled at the same canonical
    face points; the tangential Gram matrices (pullback of the metric by
    the face parametrisation) are compared entrywise.  Returns
    ``(worst, per_face)`` with ``per_face[face_index]`` the max abs
    mismatch on that face.
    """
    per_face = {}
    worst = 0.0
    for face in complex_.interior_faces:
        rule = quadrature_rule(face.dim, degree, face.kind)
        spts = rule.points
        grams = []
        for side in face.sides:
            T = side.chart_map.jacobian(spts)       # (k, n, n-1)
            g = metric.evaluate(complex_, side.cell, side.sigma.eval(spts)).g
            grams.append(np.einsum("pai,pab,pbj->pij", T, g, T))
        diff = float(np.max(np.abs(grams[0] - grams[1]))) if len(grams) == 2 else 0.0
        per_face[face.index] = diff
        worst = max(worst, diff)
    return worst, per_face


# ===========================================================================
# JSON I/O
# ===========================================================================

def load_metric(source, complex_):
    """Build a metric field from the metric JSON schema.

    ``degree`` in an expression block requests nodal interpolation onto
    cellwise polynomials of that degree; without it the expressions are
    used exactly.
    """
    data = _load_json(source)
    n = complex_.dim
    try:
        kind = data["kind"]
        if kind == "expression":
            metric = ExpressionMetric.from_entries(data["entries"], n)
        elif kind == "expression_per_cell":
            cells = data["cells"]
            if len(cells) != len(complex_.cells):
                raise ValueError("expected %d per-cell entry tables, got %d"
                                 % (len(complex_.cells), len(cells)))
            metric = ExpressionMetric.from_cell_entries(
                [c["entries"] for c in cells], n)
        elif kind == "coefficients":
            per_cell = data["per_cell"]
            if len(per_cell) != len(complex_.cells):
                raise ValueError("expected %d per-cell coefficient sets, got %d"
                                 % (len(complex_.cells), len(per_cell)))
            cell_coeffs = []
            for terms in per_cell:
                cc = {}
                for key, mat in terms:
                    k = tuple(int(x) for x in key)
                    if len(k) != n or any(x < 0 for x in k):
                        raise ValueError("bad coefficient multi-index %r" % (key,))
                    m = np.asarray(mat, float)
                    if m.shape != (n, n):
                        raise ValueError("coefficient matrix must be %dx%d" % (n, n))
                    if np.max(np.abs(m - m.T)) > 1e-9 * max(1.0, np.max(np.abs(m))):
                        raise ValueError("coefficient matrix for %r is not "
                                         "symmetric" % (key,))
                    cc[k] = 0.5 * (m + m.T)
                cell_coeffs.append(cc)
            metric = PolynomialMetric(n, cell_coeffs)
        else:
            raise ValueError("unknown metric kind %r" % kind)
        degree = data.get("degree")
    except (KeyError, TypeError, ValueError) as exc:
        raise IoError("malformed metric input: %s" % exc) from exc
    _spot_check_symmetry(metric, complex_)
    if degree is not None and kind in ("expression", "expression_per_cell"):
        src = metric
        metric = interpolate(src, complex_, int(degree))
        metric.source_degree = int(degree)
    return metric


def _spot_check_symmetry(metric, complex_, tol=1e-9):
    """Numerically compare (i, j) against (j, i) entries at sample points.

    Textually different but equal expressions (``x1*x2`` vs ``x2*x1``)
    must pass, so the check is pointwise, not syntactic.
    """
    if not isinstance(metric, ExpressionMetric):
        return
    n = metric.dim
    for cell in complex_.cells:
        rule = quadrature_rule(complex_.dim, 3, cell.kind)
        x = cell.geom.eval(rule.points)
        table = metric._table(cell.index)
        for i in range(n):
            for j in range(i + 1, n):
                a = np.asarray(table.ast[i][j].eval(x.T), float) + 0.0 * x[:, 0]
                b = np.asarray(table.ast[j][i].eval(x.T), float) + 0.0 * x[:, 0]
                asym = float(np.max(np.abs(a - b)))
                scale = max(1.0, float(np.max(np.abs(a))))
                if asym > tol * scale:
                    raise IoError(
                        "metric entries (%d,%d) and (%d,%d) disagree by %.3e "
                        "in cell %d" % (i + 1, j + 1, j + 1, i + 1, asym,
                                        cell.index))


def save_metric(metric, path):
    with open(path, "w") as fh:
        json.dump(metric.to_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")


