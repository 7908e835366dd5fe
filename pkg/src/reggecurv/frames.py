"""Orthonormal frame fields: evolution, extension, compatibility.

The pieces here build and check per-cell orthonormal frames for
piecewise metrics:

* :func:`ldl_orthonormalize` produces the lower-triangular square root
  X of an inverse Gram matrix, so seed * X is orthonormal;
* :func:`evolve_frame` integrates the orthonormality-preserving frame
  ODE u' = u eta (K - 1/2 u^T sigma u) along a metric path;
* :func:`face_extension_weights` blends facet data into a cell interior
  with products of distances to the other facet hyperplanes;
* :func:`build_compatible_frame` (2D) rotates the per-cell LDL frames so
  they agree across interior edges, :func:`verify_compatibility` checks
  the matching conditions, and :func:`frame_based_functional` assembles
  the curvature pairing from frame data as a cross-check against the
  frame-free route.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .elemgeom import (angle_defect, christoffels, dihedral_angle, face_frame,
                       hinge_frame, second_fundamental_form)
from .errors import (DriftExceeded, FaceDataMismatch, IncompatibleFrame,
                     NonSkewK, NotIncident, SignatureChange, SingularMetric,
                     WrongDimension)
from .expressions import parse_expression
from .mesh import induced_orientation
from .quadrature import quadrature_rule

log = logging.getLogger(__name__)

PIVOT_FLOOR = 1e-13


# ===========================================================================
# LDL orthonormalization
# ===========================================================================

def ldl_orthonormalize(gram, dgram=None):
    """Lower-triangular X with X^T gram X = eta from the LDL of gram^-1.

    ``gram`` is the Gram matrix of a seed basis, shaped (..., n, n);
    ``eta`` is the diagonal of signs (the identity for positive definite
    input) and must be constant over the batch.  With ``dgram`` of shape
    (..., n, n, m) the chain-rule derivative dX (..., n, n, m) is
    returned as well.
    """
    G = np.asarray(gram, float)
    single = G.ndim == 2
    if single:
        G = G[None]
        if dgram is not None:
            dgram = np.asarray(dgram, float)[None]
    n = G.shape[-1]
    if abs(np.linalg.det(G)).min() < PIVOT_FLOOR:
        raise SingularMetric("gram matrix is singular")
    H = np.linalg.inv(G)
    dH = None
    if dgram is not None:
        dH = -np.einsum("pim,pmnc,pnj->pijc", H, dgram, H)

    L = np.zeros_like(H)
    d = np.zeros(H.shape[:-1])
    dL = np.zeros(dH.shape) if dH is not None else None
    dd = np.zeros(d.shape + dH.shape[-1:]) if dH is not None else None
    for k in range(n):
        acc = H[..., k, k].copy()
        dacc = dH[..., k, k, :].copy() if dH is not None else None
        for j in range(k):
            acc -= L[..., k, j] ** 2 * d[..., j]
            if dH is not None:
                dacc -= (2 * L[..., k, j, None] * dL[..., k, j, :] * d[..., j, None]
                         + L[..., k, j, None] ** 2 * dd[..., j, :])
        d[..., k] = acc
        if dH is not None:
            dd[..., k, :] = dacc
        if np.abs(acc).min() < PIVOT_FLOOR:
            raise SingularMetric("LDL pivot %d vanished" % k)
        L[..., k, k] = 1.0
        for i in range(k + 1, n):
            num = H[..., i, k].copy()
            dnum = dH[..., i, k, :].copy() if dH is not None else None
            for j in range(k):
                num -= L[..., i, j] * L[..., k, j] * d[..., j]
                if dH is not None:
                    dnum -= (dL[..., i, j, :] * (L[..., k, j] * d[..., j])[..., None]
                             + L[..., i, j, None] * dL[..., k, j, :] * d[..., j, None]
                             + (L[..., i, j] * L[..., k, j])[..., None] * dd[..., j, :])
            L[..., i, k] = num / d[..., k]
            if dH is not None:
                dL[..., i, k, :] = (dnum - L[..., i, k, None] * dd[..., k, :]) \
                    / d[..., k, None]

    signs = np.sign(d)
    eta = signs.reshape(-1, n)
    if np.any(eta != eta[0]):
        raise SignatureChange("pivot signs vary across the batch")
    eta = eta[0]
    root = np.sqrt(np.abs(d))
    X = L * root[..., None, :]
    if dH is not None:
        droot = 0.5 * signs[..., None] * dd / root[..., None]
        dX = dL * root[..., None, :, None] + L[..., None] * droot[..., None, :, :]
    if single:
        X = X[0]
        if dH is not None:
            dX = dX[0]
    if dgram is not None:
        return X, eta, dX
    return X, eta


def orthonormal_frame(complex_, metric, cell_index, ref_points, with_grad=False):
    """Per-cell LDL frame in chart components (columns are vectors).

    Returns (F, eta) or (F, eta, dF) with dF[p, :, i, m] the chart
    derivative of column i.
    """
    mv = metric.evaluate(complex_, cell_index, ref_points,
                         order=1 if with_grad else 0)
    if with_grad:
        X, eta, dX = ldl_orthonormalize(mv.g, mv.dg)
        return X, eta, dX
    X, eta = ldl_orthonormalize(mv.g)
    return X, eta


# ===========================================================================
# frame evolution ODE
# ===========================================================================

@dataclass
class FrameHomotopy:
    """Sampled solution of the frame-evolution ODE.

    ``u[k]`` is the frame correction at time ``times[k]`` (the evolved
    frame is seed @ u); ``drift[k]`` the orthonormality residual
    max |u^T gram u - eta| at that time.
    """
    eta: np.ndarray
    times: np.ndarray
    u: np.ndarray
    drift: np.ndarray
    steps: int

    @property
    def final(self):
        return self.u[-1]

    @property
    def max_drift(self):
        return float(self.drift.max())

    def to_dict(self):
        return {
            "steps": self.steps,
            "eta": [float(x) for x in self.eta],
            "times": [float(t) for t in self.times],
            "max_drift": self.max_drift,
            "drift": [float(x) for x in self.drift],
            "u": [np.asarray(uk).tolist() for uk in self.u],
        }


def linear_metric_path(g0, g1):
    """Affine interpolation t -> ((1-t) g0 + t g1, g1 - g0)."""
    g0 = np.asarray(g0, float)
    g1 = np.asarray(g1, float)

    def path(t):
        return (1 - t) * g0 + t * g1, g1 - g0
    return path


def _as_k_field(K_field, n):
    if K_field is None:
        return lambda t: None
    if callable(K_field):
        return K_field
    K = np.asarray(K_field, float)
    return lambda t: K


def evolve_frame(metric_path, K_field=None, steps=100, drift_tol=1e-6,
                 u0=None):
    """Integrate u' = u eta (K(t) - 1/2 u^T sigma(t) u), classical RK4.

    ``metric_path(t)`` returns (gram, gram_rate) for the seed-basis Gram
    matrix along the path, shaped (..., n, n); ``K_field`` is a constant
    skew matrix or a callable t -> skew matrix (the gauge freedom of the
    evolution).  The solution preserves u^T gram u = eta up to
    integrator error, monitored as ``drift`` and bounded by
    ``drift_tol``.
    """
    G0, _ = metric_path(0.0)
    G0 = np.asarray(G0, float)
    n = G0.shape[-1]
    X0, eta = ldl_orthonormalize(G0)
    kf = _as_k_field(K_field, n)

    def rhs(t, u):
        _, sig = metric_path(t)
        K = kf(t)
        S = -0.5 * np.einsum("...ji,...jk,...kl->...il", u,
                             np.asarray(sig, float), u)
        if K is not None:
            K = np.asarray(K, float)
            if np.abs(K + np.swapaxes(K, -1, -2)).max() > 1e-12:
                raise NonSkewK("gauge generator K(t=%g) is not skew" % t)
            S = S + K
        return np.einsum("...ij,j,...jk->...ik", u, eta, S)

    if u0 is None:
        # start from the LDL frame of the initial Gram, so the evolved
        # frame seed @ u is orthonormal at t = 0 for any seed basis
        u = X0.copy() if X0.ndim == G0.ndim else np.broadcast_to(X0, G0.shape).copy()
    else:
        u = np.asarray(u0, float).copy()
    h = 1.0 / steps
    times = np.linspace(0.0, 1.0, steps + 1)
    us = [u.copy()]
    drifts = [_drift(u, G0, eta)]
    for k in range(steps):
        t = times[k]
        k1 = rhs(t, u)
        k2 = rhs(t + h / 2, u + h / 2 * k1)
        k3 = rhs(t + h / 2, u + h / 2 * k2)
        k4 = rhs(t + h, u + h * k3)
        u = u + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        G, _ = metric_path(times[k + 1])
        G = np.asarray(G, float)
        if np.linalg.det(G).min() * np.linalg.det(G0).min() <= 0:
            raise SingularMetric("metric path degenerates at t=%g"
                                 % times[k + 1])
        us.append(u.copy())
        drifts.append(_drift(u, G, eta))
        if drifts[-1] > drift_tol:
            raise DriftExceeded(
                "orthonormality drift %.3e exceeds %.1e at t=%g"
                % (drifts[-1], drift_tol, times[k + 1]))
    return FrameHomotopy(eta=eta, times=times, u=np.array(us),
                         drift=np.array(drifts), steps=steps)


def _drift(u, G, eta):
    gram = np.einsum("...ji,...jk,...kl->...il", u, G, u)
    return float(np.abs(gram - np.diag(eta)).max())


# ===========================================================================
# facet-data extension
# ===========================================================================

def _facet_distance(ref, facet_idx, points):
    """Euclidean distance to the facet hyperplane, positive inside."""
    from .mesh import _reference_outward_normal
    w = _reference_outward_normal(ref, facet_idx)
    v0 = ref.verts[ref.facets[facet_idx][0]]
    w = w / np.linalg.norm(w)
    return (v0 - points) @ w


def _facet_distance_grad(ref, facet_idx):
    from .mesh import _reference_outward_normal
    w = _reference_outward_normal(ref, facet_idx)
    return -w / np.linalg.norm(w)


class _Blend:
    """Distance-product blend of facet fields over a reference cell.

    Fields are callables points -> (p, ...); with grads, callables
    points -> ((p, ...), (p, ..., dim)).  Weight of facet i is the
    product of distances to every other listed facet hyperplane, so the
    restriction to facet i reproduces field i exactly.
    """

    def __init__(self, ref, fields):
        if not fields:
            raise ValueError("no facet fields to blend")
        self.ref = ref
        self.idx = sorted(fields)
        self.fields = fields

    def _lams(self, points):
        return np.stack([_facet_distance(self.ref, i, points)
                         for i in self.idx], axis=0)

    def weights(self, points):
        lam = self._lams(points)
        m = len(self.idx)
        W = np.empty_like(lam)
        for a in range(m):
            W[a] = np.prod(np.delete(lam, a, axis=0), axis=0) if m > 1 \
                else np.ones_like(lam[a])
        return W

    def value(self, points):
        W = self.weights(points)
        tot = W.sum(axis=0)
        vals = [np.asarray(self.fields[i](points), float) for i in self.idx]
        num = sum(W[a].reshape(W[a].shape + (1,) * (vals[a].ndim - 1)) * vals[a]
                  for a in range(len(self.idx)))
        return num / tot.reshape(tot.shape + (1,) * (num.ndim - 1))

    def value_grad(self, points):
        lam = self._lams(points)
        grads = np.stack([_facet_distance_grad(self.ref, i)
                          for i in self.idx], axis=0)     # (m, dim)
        m = len(self.idx)
        W = np.empty_like(lam)
        dW = np.empty(lam.shape + grads.shape[-1:])
        for a in range(m):
            others = [b for b in range(m) if b != a]
            W[a] = np.prod(lam[others], axis=0) if others else np.ones_like(lam[a])
            dW[a] = 0.0
            for b in others:
                rest = [c for c in others if c != b]
                pr = np.prod(lam[rest], axis=0) if rest else np.ones_like(lam[b])
                dW[a] += pr[:, None] * grads[b][None, :]
        tot = W.sum(axis=0)
        dtot = dW.sum(axis=0)
        num = np.zeros(points.shape[:1])
        dnum = np.zeros(points.shape)
        vals, dvals = [], []
        for i in self.idx:
            v, dv = self.fields[i](points)
            vals.append(np.asarray(v, float))
            dvals.append(np.asarray(dv, float))
        num = sum(W[a] * vals[a] for a in range(m))
        dnum = sum(W[a][:, None] * dvals[a] + dW[a] * vals[a][:, None]
                   for a in range(m))
        val = num / tot
        grad = (dnum - val[:, None] * dtot) / tot[:, None]
        return val, grad


def face_extension_weights(ref, face_data, points, mismatch_tol=1e-12):
    """Blend per-facet data into the cell with distance-product weights.

    ``face_data`` maps facet indices to callables on reference points;
    the blend restricts to each listed facet exactly.  Data of facets
    sharing a sub-face must agree there (checked at shared reference
    vertices) or FaceDataMismatch is raised.
    """
    for i, j in itertools.combinations(sorted(face_data), 2):
        shared = sorted(set(ref.facets[i]) & set(ref.facets[j]))
        if not shared:
            continue
        pts = ref.verts[shared]
        vi = np.asarray(face_data[i](pts), float)
        vj = np.asarray(face_data[j](pts), float)
        gap = np.abs(vi - vj).max()
        if gap > mismatch_tol:
            raise FaceDataMismatch(
                "facet data %d and %d differ by %.3e on their shared sub-face"
                % (i, j, gap))
    return _Blend(ref, face_data).value(np.atleast_2d(points))


# ===========================================================================
# frame fields
# ===========================================================================

class Frame:
    """Per-cell orthonormal frame field.

    ``matrices(cell, points)`` returns (k, n, n) matrices whose columns
    are the frame vectors in chart components; with ``with_grad`` also
    the chart derivative (k, n, n, m).  Compatible frames built by
    :func:`build_compatible_frame` additionally carry per-vertex
    rotation ledgers used by the closure check.
    """

    def __init__(self, complex_, evaluators, label="frame",
                 corner_rotations=None):
        self.complex_ = complex_
        self.evaluators = evaluators
        self.label = label
        self.corner_rotations = corner_rotations

    def matrices(self, cell_index, ref_points, with_grad=False):
        pts = np.atleast_2d(np.asarray(ref_points, float))
        F, dF = self.evaluators[cell_index](pts)
        if with_grad:
            if dF is None:
                raise ValueError("frame %r provides no analytic derivatives"
                                 % self.label)
            return F, dF
        return F

    def rotated(self, cell_index, angle):
        """Copy of the frame with one cell's frame rotated rigidly."""
        c, s = np.cos(angle), np.sin(angle)
        R = np.array([[c, -s], [s, c]])

        def rot(pts, base=self.evaluators[cell_index]):
            F, dF = base(pts)
            return F @ R, np.einsum("pijm,jk->pikm", dF, R)

        evs = list(self.evaluators)
        evs[cell_index] = rot
        return Frame(self.complex_, evs, label=self.label + "+rotated",
                     corner_rotations=None)

    def to_dict(self):
        """Sampled per-cell matrices (reference vertices and centroid)."""
        cells = []
        for ci, cell in enumerate(self.complex_.cells):
            pts = np.vstack([cell.ref.verts, cell.ref.centroid()[None, :]])
            F = self.matrices(ci, pts)
            cells.append({
                "cell": ci,
                "points": pts.tolist(),
                "matrices": F.tolist(),
            })
        out = {"label": self.label, "cells": cells}
        if self.corner_rotations is not None:
            out["corner_rotations"] = {
                str(h): {"rotations": [float(x) for x in d["rotations"]],
                         "background_defect": d["background_defect"]}
                for h, d in sorted(self.corner_rotations.items())}
        return out


def coordinate_frame(complex_, metric):
    """Per-cell LDL frames of the metric (no cross-cell alignment)."""
    def make(ci):
        def ev(pts):
            mv = metric.evaluate(complex_, ci, pts, order=1)
            X, eta, dX = ldl_orthonormalize(mv.g, mv.dg)
            return X, dX
        return ev
    return Frame(complex_, [make(ci) for ci in range(len(complex_.cells))],
                 label="ldl")


def evolved_frame(complex_, metric, steps=100, metric0=None):
    """Frames obtained by the canonical (K = 0) evolution from a start
    metric (the flat chart background by default) to ``metric``.

    Chart gluings that are not translations rotate the start frames, so
    the result is compatible exactly when the start frames are; no
    analytic frame derivative is available (value queries only).
    """
    base = metric0 if metric0 is not None else _flat_background(complex_)

    def make(ci):
        def ev(pts):
            g0 = base.evaluate(complex_, ci, pts).g
            g1 = metric.evaluate(complex_, ci, pts).g
            hom = evolve_frame(linear_metric_path(g0, g1), steps=steps)
            return hom.final, None
        return ev
    return Frame(complex_, [make(ci) for ci in range(len(complex_.cells))],
                 label="evolved")


# ===========================================================================
# compatible-frame construction (2D)
# ===========================================================================

def _flat_background(complex_):
    from .metric import ExpressionMetric
    n = complex_.dim
    entries = [["1" if i == j else "0" for j in range(n)] for i in range(n)]
    return ExpressionMetric.from_entries(entries, n)


class _MetricBlend:
    """Pointwise convex combination (1-t) m0 + t m1 of two metrics."""

    def __init__(self, m0, m1, t):
        self.m0, self.m1, self.t = m0, m1, t

    def evaluate(self, complex_, cell_index, ref_points, order=0, **kw):
        from .metric import MetricValues
        a = self.m0.evaluate(complex_, cell_index, ref_points, order=order)
        b = self.m1.evaluate(complex_, cell_index, ref_points, order=order)
        s = self.t

        def mix(x, y):
            if x is None or y is None:
                return None
            return (1 - s) * x + s * y
        return MetricValues(g=mix(a.g, b.g), dg=mix(a.dg, b.dg),
                            d2g=mix(a.d2g, b.d2g))


def _edge_nodes(m):
    k = np.arange(m + 1)
    return 0.5 - 0.5 * np.cos(np.pi * k / m)


def _side_of(face, cell_index, facet):
    for s in face.sides:
        if s.cell == cell_index and s.facet == facet:
            return s
    raise NotIncident("cell %d facet %d is not a side of face %d"
                      % (cell_index, facet, face.index))


def _side_angles(complex_, metric, face, side, nodes):
    """Unwrapped angle of the cell's LDL frame leg against the face basis.

    Also returns the handedness h of the face basis (tangent, outward
    normal) in chart coordinates; measured angles of a chart-rotated
    frame shift by h times the rotation angle.  h is constant along the
    edge and independent of the metric.
    """
    s = nodes[:, None]
    fr = face_frame(complex_, metric, face, side.cell, s)
    X, _ = ldl_orthonormalize(fr.g)
    b1 = X[:, :, 0]
    ct = np.einsum("pa,pab,pb->p", b1, fr.g, fr.onb[:, :, 0])
    cn = np.einsum("pa,pab,pb->p", b1, fr.g, fr.normal)
    h = float(np.sign(np.linalg.det(
        np.stack([fr.onb[0, :, 0], fr.normal[0]], axis=-1))))
    return np.unwrap(np.arctan2(cn, ct)), h


def _interior_edge_data(complex_, metric, nodes, align=None):
    """Per interior edge: unwrapped frame angles of both sides.

    ``align`` (a previous result) pins the 2 pi branch of each angle to
    the earlier sample, keeping the data continuous along a homotopy.
    """
    data = {}
    for face in complex_.interior_faces:
        sides = face.sides
        uh = [_side_angles(complex_, metric, face, sd, nodes) for sd in sides]
        u = [p[0] for p in uh]
        h = [p[1] for p in uh]
        if align is not None:
            prev = align[face.index]["u"]
            for k in range(2):
                u[k] += 2 * np.pi * np.round((prev[k][0] - u[k][0])
                                             / (2 * np.pi))
        data[face.index] = {"sides": sides, "u": u, "h": h,
                            "D": -(u[0] + u[1])}
    return data


def _corner_slots(complex_):
    """Corners (cell, local vertex) with both adjacent edges interior.

    Yields (cell_index, local_vertex, [(facet, face), (facet, face)]).
    """
    for cell in complex_.cells:
        for v in range(len(cell.ref.verts)):
            facets = cell.ref.facets_containing([v])
            pairs = []
            ok = True
            for f in facets:
                face = complex_.faces[cell.face_ids[f]]
                if face.is_boundary:
                    ok = False
                    break
                pairs.append((f, face))
            if ok and len(pairs) == 2:
                yield cell.index, v, pairs


def _solve_edge_split(complex_, edata, nodes):
    """Split each edge-sum target between the two sides.

    Frames match across an edge when h0 a0 + h1 a1 = D, with a the
    boundary traces of the two cells' rotation fields and h the face
    basis handedness of each side.  The split a = h (D/2 + chi tau)
    with tau affine along the edge, shared by both sides with opposite
    signs chi, satisfies this identically.  Corner agreement of the two
    traces
    within each cell fixes tau in the least-squares sense; at a vertex
    carrying a conical defect the corner system is inconsistent, the
    remaining trace gaps being the rotation mismatch the closure ledger
    accounts for.  Returns traces keyed (cell, facet) and corner trace
    values keyed (cell, local_vertex) -> {face_id: value}.
    """
    faces = sorted(edata)
    pos = {f: 2 * i for i, f in enumerate(faces)}
    rows, rhs = [], []

    def endpoint(side, cell, v_local):
        cv = complex_.cells[cell].verts[v_local]
        return 0 if side.chart_verts[0] == cv else 1

    def chi(face, side):
        return 1.0 if side is face.sides[0] else -1.0

    corners = list(_corner_slots(complex_))
    for ci, v, pairs in corners:
        row = np.zeros(2 * len(faces))
        val = 0.0
        for sgn, (facet, face) in zip((1.0, -1.0), pairs):
            side = _side_of(face, ci, facet)
            e = endpoint(side, ci, v)
            d = edata[face.index]
            hs = d["h"][d["sides"].index(side)]
            row[pos[face.index] + e] += sgn * hs * chi(face, side)
            val -= sgn * hs * 0.5 * d["D"][0 if e == 0 else -1]
        rows.append(row)
        rhs.append(val)

    if rows:
        A = np.array(rows)
        b = np.array(rhs)
        tau, *_ = np.linalg.lstsq(A, b, rcond=None)
        fit = np.abs(A @ tau - b).max() if len(b) else 0.0
        if fit > 1e-9:
            # expected whenever a vertex carries a conical defect: the
            # corner system is then inconsistent and the residual is the
            # rotation mismatch the closure ledger accounts for
            log.debug("edge-split corner equations left residual %.3e", fit)
    else:
        tau = np.zeros(2 * len(faces))

    traces = {}
    for f in faces:
        d = edata[f]
        for side in d["sides"]:
            t0, t1 = tau[pos[f]], tau[pos[f] + 1]
            hs = d["h"][d["sides"].index(side)]
            a = hs * (0.5 * d["D"] + chi(complex_.faces[f], side) *
                      (t0 * (1 - nodes) + t1 * nodes))
            traces[(side.cell, side.facet)] = a

    corner_traces = {}
    for ci, v, pairs in corners:
        vals = {}
        for facet, face in pairs:
            side = _side_of(face, ci, facet)
            e = endpoint(side, ci, v)
            k = 0 if e == 0 else -1
            vals[face.index] = traces[(ci, facet)][k]
        corner_traces[(ci, v)] = vals
    return traces, corner_traces


def _hinge_vertex_local(complex_, hinge, cell_index):
    return hinge.side_for_cell(cell_index).local_verts[0]


def _closure_ledger(complex_, metric, nodes, samples):
    """Per-vertex rotation sums along the homotopy from the flat charts.

    Tracks, for every interior-vertex corner, the gap between the two
    boundary-trace values of the cell's rotation field at the vertex
    (entering minus leaving edge), along the metric path
    (1-t) flat + t metric; the per-corner change is the rotation ledger
    entry.  Around an interior vertex the gaps sum to the conical
    defect discrepancy against the flat chart background, up to sign
    and multiples of 2 pi fixed by continuity in t.
    """
    flat = _flat_background(complex_)
    ts = np.linspace(0.0, 1.0, samples)
    per_corner = {}        # (hinge, j) -> list over t of spread
    fans = {}
    for hinge in complex_.interior_hinges:
        from .mesh import hinge_fan
        fans[hinge.index] = hinge_fan(complex_, hinge)

    prev = None
    for t in ts:
        mt = _MetricBlend(flat, metric, t) if t < 1.0 else metric
        edata = _interior_edge_data(complex_, mt, nodes, align=prev)
        prev = edata
        _, corner_traces = _solve_edge_split(complex_, edata, nodes)
        for hid, fan in fans.items():
            hinge = complex_.hinges[hid]
            for j, (ci, enter_fid, leave_fid) in enumerate(fan):
                v = _hinge_vertex_local(complex_, hinge, ci)
                vals = corner_traces.get((ci, v))
                if vals is None or enter_fid not in vals or leave_fid not in vals:
                    per_corner.setdefault((hid, j), []).append(None)
                    continue
                per_corner.setdefault((hid, j), []).append(
                    vals[leave_fid] - vals[enter_fid])

    ledger = {}
    for hid, fan in fans.items():
        rs = []
        complete = True
        for j in range(len(fan)):
            seq = per_corner[(hid, j)]
            if any(x is None for x in seq):
                complete = False
                break
            seq = np.unwrap(np.asarray(seq), period=2 * np.pi)
            rs.append(float(seq[-1] - seq[0]))
        if not complete:
            continue
        hinge = complex_.hinges[hid]
        bg = float(angle_defect(complex_, flat, hinge)[0])
        ledger[hid] = {"rotations": rs, "background_defect": bg}
    return ledger


def build_compatible_frame(complex_, metric, edge_samples=12,
                           closure_samples=9):
    """Rotate per-cell LDL frames into agreement across interior edges.

    2D only.  Per interior edge the two traces of the rotation fields
    must sum to the matching target; corner agreement inside each cell
    fixes the split, and the distance-product blend extends the traces
    into the cells.  The construction is also run along the homotopy
    from the flat chart background to fill the per-vertex rotation
    ledgers consumed by :func:`verify_compatibility`.
    """
    if complex_.dim != 2:
        raise WrongDimension("compatible frame construction is 2D only")
    nodes = _edge_nodes(edge_samples)
    edata = _interior_edge_data(complex_, metric, nodes)
    traces, _ = _solve_edge_split(complex_, edata, nodes)

    evaluators = []
    for cell in complex_.cells:
        fields = {}
        for facet in range(len(cell.ref.facets)):
            key = (cell.index, facet)
            if key not in traces:
                continue
            face = complex_.faces[cell.face_ids[facet]]
            side = _side_of(face, cell.index, facet)
            poly = np.polynomial.Polynomial.fit(nodes, traces[key],
                                                deg=len(nodes) - 1,
                                                domain=[0.0, 1.0])
            dpoly = poly.deriv()
            r0, r1 = side.ref_verts[0], side.ref_verts[1]
            d = r1 - r0
            dn = d / (d @ d)

            def fld(pts, poly=poly, dpoly=dpoly, r0=r0, dn=dn):
                s = (pts - r0) @ dn
                return poly(s), dpoly(s)[:, None] * dn[None, :]
            fields[facet] = fld
        blend = _Blend(cell.ref, fields) if fields else None

        def ev(pts, ci=cell.index, blend=blend):
            mv = metric.evaluate(complex_, ci, pts, order=1)
            X, eta, dX = ldl_orthonormalize(mv.g, mv.dg)
            if blend is None:
                return X, dX
            al, dal = blend.value_grad(pts)
            c, s = np.cos(al), np.sin(al)
            R = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
            dR = np.stack([np.stack([-s, -c], -1), np.stack([c, -s], -1)], -2)
            F = np.einsum("pij,pjk->pik", X, R)
            dF = np.einsum("pijm,pjk->pikm", dX, R) \
                + np.einsum("pij,pjk,pm->pikm", X, dR, dal)
            return F, dF
        evaluators.append(ev)

    ledger = _closure_ledger(complex_, metric, nodes, closure_samples)
    return Frame(complex_, evaluators, label="compatible",
                 corner_rotations=ledger)


# ===========================================================================
# compatibility verification
# ===========================================================================

@dataclass
class CompatibilityReport:
    """Residuals of the cross-edge matching and vertex closure checks."""
    tol: float
    face_residuals: dict = field(default_factory=dict)
    closure_residuals: dict = field(default_factory=dict)

    @property
    def max_face_residual(self):
        return max(self.face_residuals.values(), default=0.0)

    @property
    def max_closure_residual(self):
        return max(self.closure_residuals.values(), default=0.0)

    @property
    def passed(self):
        return (self.max_face_residual <= self.tol
                and self.max_closure_residual <= self.tol)

    def to_dict(self):
        return {
            "tol": self.tol,
            "passed": bool(self.passed),
            "max_face_residual": float(self.max_face_residual),
            "max_closure_residual": float(self.max_closure_residual),
            "faces": [{"id": i, "residual": float(v)}
                      for i, v in sorted(self.face_residuals.items())],
            "closures": [{"id": i, "residual": float(v)}
                         for i, v in sorted(self.closure_residuals.items())],
        }


def _mu_matrices(complex_, metric, frame, face, side, s_points):
    """Coordinates of the cell frame in the face-adapted basis.

    The adapted basis columns are the orthonormal face tangents followed
    by the outward normal, so interface agreement means the normal slot
    flips sign between the two sides.
    """
    fr = face_frame(complex_, metric, face, side.cell, s_points)
    E = np.concatenate([fr.onb, fr.normal[:, :, None]], axis=2)
    F = frame.matrices(side.cell, fr.ref)
    return np.linalg.solve(E, F)


def verify_compatibility(complex_, metric, frame, tol=1e-8, degree=8):
    """Check cross-edge frame agreement and per-vertex rotation closure.

    Reports, per interior face, the max-norm residual between one side's
    frame coordinates and the normal-flipped coordinates of the other
    side (both in their face-adapted bases); and, for frames carrying a
    rotation ledger, the residual of the per-vertex closure relation
    sum(rotations) = background defect - defect.  Report only: nothing
    is raised on failure.
    """
    refl = np.diag([1.0] * (complex_.dim - 1) + [-1.0])
    report = CompatibilityReport(tol=tol)
    for face in complex_.interior_faces:
        rule = quadrature_rule(face.dim, degree, face.kind)
        mu0 = _mu_matrices(complex_, metric, frame, face, face.sides[0],
                           rule.points)
        mu1 = _mu_matrices(complex_, metric, frame, face, face.sides[1],
                           rule.points)
        res = np.abs(mu1 - np.einsum("ij,pjk->pik", refl, mu0)).max()
        report.face_residuals[face.index] = float(res)

    if complex_.dim == 2 and frame.corner_rotations is not None:
        for hinge in complex_.interior_hinges:
            led = frame.corner_rotations.get(hinge.index)
            if led is None:
                continue
            defect = float(angle_defect(complex_, metric, hinge)[0])
            res = abs(sum(led["rotations"]) + defect
                      - led["background_defect"])
            report.closure_residuals[hinge.index] = float(res)
    return report


# ===========================================================================
# frame-route curvature pairing (2D)
# ===========================================================================

def _scalar_at(ast, pts):
    pts = np.asarray(pts, float)
    return np.broadcast_to(np.asarray(ast.eval(pts.T), float), (len(pts),))


def _connection_form(mv, F, dF):
    """Chart components of <nabla f2, f1> for an orthonormal pair."""
    gamma = christoffels(mv)
    f1, f2 = F[:, :, 0], F[:, :, 1]
    cov = dF[:, :, 1, :] + np.einsum("pbmc,pc->pbm", gamma, f2)
    return np.einsum("pab,pa,pbm->pm", mv.g, f1, cov)


def frame_based_functional(complex_, metric, frame, phi="1", degree=12,
                           compat_tol=1e-6):
    """Curvature pairing assembled from frame data (2D).

    Cell terms integrate the test field against the curvature two-form
    of the frame connection, evaluated weakly (boundary circulation of
    psi omega minus the interior d psi wedge omega); interior edges
    contribute the mean-curvature jump (the so(2) adjoint factors are
    trivial) and interior vertices the angle defect.  The frame must
    pass the interface check at ``compat_tol`` or IncompatibleFrame is
    raised.
    """
    if complex_.dim != 2:
        raise WrongDimension("frame-based pairing is 2D only")
    rep = verify_compatibility(complex_, metric, frame,
                               tol=compat_tol, degree=min(degree, 10))
    if rep.max_face_residual > compat_tol:
        raise IncompatibleFrame(
            "frame interface residual %.3e exceeds %.1e"
            % (rep.max_face_residual, compat_tol))

    ast = phi.ast if hasattr(phi, "ast") else parse_expression(phi, dim=2)
    dasts = [ast.diff(i) for i in range(2)]
    rules = {}

    def rule_for(dim, kind):
        if (dim, kind) not in rules:
            rules[(dim, kind)] = quadrature_rule(dim, degree, kind)
        return rules[(dim, kind)]

    total = 0.0
    for cell in complex_.cells:
        ci = cell.index
        rule = rule_for(2, cell.kind)
        mv = metric.evaluate(complex_, ci, rule.points, order=1)
        F, dF = frame.matrices(ci, rule.points, with_grad=True)
        om = _connection_form(mv, F, dF)
        chart = cell.geom.eval(rule.points)
        detJ = np.linalg.det(cell.geom.jacobian(rule.points))
        dpsi = np.stack([_scalar_at(d, chart) for d in dasts], axis=1)
        wedge = dpsi[:, 0] * om[:, 1] - dpsi[:, 1] * om[:, 0]
        total -= float(rule.integrate(wedge * detJ))

        for facet in range(len(cell.ref.facets)):
            face = complex_.faces[cell.face_ids[facet]]
            side = _side_of(face, ci, facet)
            rule1 = rule_for(1, face.kind)
            s = rule1.points
            refp = side.sigma.eval(s)
            mvb = metric.evaluate(complex_, ci, refp, order=1)
            Fb, dFb = frame.matrices(ci, refp, with_grad=True)
            omb = _connection_form(mvb, Fb, dFb)
            dP = side.chart_map.jacobian(s)[:, :, 0]
            psi = _scalar_at(ast, side.chart_map.eval(s))
            sign = induced_orientation(complex_, face, ci)
            total += sign * float(rule1.integrate(
                psi * np.einsum("pm,pm->p", omb, dP)))

    for face in complex_.interior_faces:
        rule1 = rule_for(1, face.kind)
        s = rule1.points
        fr = face_frame(complex_, metric, face, face.sides[0].cell, s)
        jump = sum(
            second_fundamental_form(complex_, metric, face, sd.cell, s)[:, 0, 0]
            for sd in face.sides)
        psi = _scalar_at(ast, fr.chart)
        total += float(rule1.integrate(psi * jump * fr.density))

    for hinge in complex_.interior_hinges:
        side = hinge.sides[0]
        ref, _, _, _, _ = hinge_frame(complex_, metric, hinge, side.cell,
                                      np.zeros((1, 0)))
        chart = complex_.cells[side.cell].geom.eval(ref)
        defect = float(angle_defect(complex_, metric, hinge)[0])
        total += defect * float(_scalar_at(ast, chart)[0])
    return total
