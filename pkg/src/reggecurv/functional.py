"""Distributional curvature functional on piecewise-smooth metrics.

The curvature of a tangential-tangential continuous metric concentrates
on three strata, each paired against a 4-linear test field A that is
antisymmetric in its first and in its last two slots:

* cells:  1/2 integral of the full Riemann/test-field contraction;
* interior faces: twice the integral of the second-fundamental-form jump
  contracted with A(E_k, n, E_j, n) per side (each side uses its own
  outward normal, which makes the pairing manifestly side-symmetric);
* interior hinges: twice the angle defect times A evaluated on an
  orthonormal basis of the hinge normal plane.

With the canonical test field A = phi/2 (<X,Z><Y,W> - <X,W><Y,Z>) these
reduce in two dimensions to the Gauss curvature density, the geodesic
curvature jump and the vertex angle defect weighted by phi.

:func:`bruteforce_equivalence_check` re-derives every stratum density
from scratch as a wedge-trace of matrix-valued forms in pointwise
orthonormal frames and compares against the production contractions.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from .elemgeom import (angle_defect, face_frame, hinge_frame,
                       hinge_normal_basis, riemann, second_fundamental_form)
from .errors import BoundaryFace, BoundaryHinge, IoError
from .expressions import parse_expression
from .mesh import _load_json
from .quadrature import quadrature_rule

log = logging.getLogger(__name__)

DEFAULT_DEGREE = 12


# ===========================================================================
# test fields
# ===========================================================================

class GaussTestField:
    """Canonical field A = phi/2 (<X,Z><Y,W> - <X,W><Y,Z>).

    ``phi`` is a scalar chart-coordinate expression (or a constant).  On
    complexes glued from several charts a non-constant phi is evaluated
    chart-wise, so only use spatially varying weights on single-chart
    meshes.
    """

    kind = "gauss"

    def __init__(self, phi="1", dim=None):
        self.phi_text = str(phi)
        self.ast = parse_expression(self.phi_text, dim=dim)

    def phi_at(self, complex_, cell_index, ref_points):
        x = complex_.cells[cell_index].geom.eval(np.atleast_2d(ref_points))
        val = self.ast.eval(x.T)
        return np.broadcast_to(np.asarray(val, float), (len(x),)).copy()

    def components(self, complex_, cell_index, ref_points, g):
        phi = self.phi_at(complex_, cell_index, ref_points)
        gg = np.einsum("pac,pbd->pabcd", g, g)
        return 0.5 * phi[:, None, None, None, None] * (
            gg - gg.transpose(0, 1, 2, 4, 3))

    def to_dict(self):
        return {"kind": "gauss", "phi": self.phi_text}


class ComponentTestField:
    """Explicit chart-frame components, antisymmetrised in (1,2) and (3,4).

    ``terms`` maps index tuples (0-based) to expression ASTs; unlisted
    components follow from the double antisymmetry, everything else is
    zero.  Conflicting assignments are detected numerically at load time.
    """

    kind = "components"

    def __init__(self, dim, terms):
        self.dim = dim
        self.terms = dict(terms)

    def components(self, complex_, cell_index, ref_points, g=None):
        pts = np.atleast_2d(ref_points)
        x = complex_.cells[cell_index].geom.eval(pts)
        n = self.dim
        A = np.zeros((len(x), n, n, n, n))
        for (i, j, k, l), ast in self.terms.items():
            val = np.broadcast_to(np.asarray(ast.eval(x.T), float), (len(x),))
            for a, b, s1 in ((i, j, 1.0), (j, i, -1.0)):
                for c, d, s2 in ((k, l, 1.0), (l, k, -1.0)):
                    A[:, a, b, c, d] = s1 * s2 * val
        return A

    def to_dict(self):
        return {"kind": "components",
                "terms": [[[i + 1, j + 1, k + 1, l + 1], str(ast)]
                          for (i, j, k, l), ast in sorted(self.terms.items())]}


def load_test_field(source, complex_):
    """Test-field JSON: {"kind": "gauss", "phi": ...} or explicit
    {"kind": "components", "terms": [[[i,j,k,l], "expr"], ...]} (1-based)."""
    if source is None:
        return GaussTestField("1", dim=complex_.dim)
    data = _load_json(source)
    try:
        kind = data.get("kind", "gauss")
        if kind == "gauss":
            return GaussTestField(str(data.get("phi", "1")), dim=complex_.dim)
        if kind == "components":
            n = complex_.dim
            terms, orbits = {}, set()
            for key, text in data["terms"]:
                i, j, k, l = (int(v) for v in key)
                if not all(1 <= v <= n for v in (i, j, k, l)):
                    raise ValueError("component index out of range: %r" % (key,))
                if i == j or k == l:
                    raise ValueError("component %r vanishes by antisymmetry"
                                     % (key,))
                orbit = (min(i, j), max(i, j), min(k, l), max(k, l))
                if orbit in orbits:
                    raise ValueError("component %r duplicates an earlier entry "
                                     "up to antisymmetry" % (key,))
                orbits.add(orbit)
                terms[(i - 1, j - 1, k - 1, l - 1)] = parse_expression(
                    str(text), dim=n)
            return ComponentTestField(n, terms)
        raise ValueError("unknown test field kind %r" % kind)
    except (KeyError, TypeError, ValueError) as exc:
        raise IoError("malformed test field input: %s" % exc) from exc


# ===========================================================================
# pointwise kernels (shared with the equivalence checker)
# ===========================================================================

def _cell_density(cov, A, ginv):
    """1/2 R : A with all four slots raised; per-point scalars."""
    Araise = np.einsum("pabcd,pae,pbf,pcg,pdh->pefgh", A, ginv, ginv, ginv, ginv)
    return 0.5 * np.einsum("pabcd,pabcd->p", cov, Araise)


def _face_density(II, A_on):
    """2 sum_kj II_kj A(E_k, n, E_j, n); ``A_on[p,k,j]`` precontracted."""
    return 2.0 * np.einsum("pkj,pkj->p", II, A_on)


def _hinge_density(theta_defect, A_pair):
    """2 Theta A(b1, b2, b1, b2)."""
    return 2.0 * theta_defect * A_pair


# ===========================================================================
# stratum terms
# ===========================================================================

def cell_term(complex_, metric, field, cell_index, degree=DEFAULT_DEGREE):
    cell = complex_.cells[cell_index]
    rule = quadrature_rule(complex_.dim, degree, cell.kind)
    mv = metric.evaluate(complex_, cell_index, rule.points, order=2)
    cov = riemann(mv).cov
    ginv = np.linalg.inv(mv.g)
    A = field.components(complex_, cell_index, rule.points, mv.g)
    dens = _cell_density(cov, A, ginv)
    detJ = np.linalg.det(cell.geom.jacobian(rule.points))
    return float(rule.integrate(dens * np.sqrt(np.linalg.det(mv.g)) * detJ))


def face_term(complex_, metric, field, face, degree=DEFAULT_DEGREE):
    """Jump term of one interior face (both sides summed)."""
    if face.is_boundary:
        raise BoundaryFace("face %d is a boundary face" % face.index)
    rule = quadrature_rule(face.dim, degree, face.kind)
    total = 0.0
    for side in face.sides:
        fr = face_frame(complex_, metric, face, side.cell, rule.points)
        II = second_fundamental_form(complex_, metric, face, side.cell,
                                     rule.points, frame=fr)
        A = field.components(complex_, side.cell, fr.ref, fr.g)
        A_on = np.einsum("pabcd,pak,pb,pcj,pd->pkj", A, fr.onb, fr.normal,
                         fr.onb, fr.normal)
        dens = _face_density(II, A_on)
        total += rule.integrate(dens * fr.density)
    return float(total)


def hinge_term(complex_, metric, field, hinge, degree=DEFAULT_DEGREE):
    """Angle-defect term of one interior hinge."""
    if hinge.is_boundary:
        raise BoundaryHinge("hinge %d lies on the boundary" % hinge.index)
    rule = quadrature_rule(hinge.dim, degree, "simplex")
    side = hinge.sides[0]
    t = rule.points
    theta = angle_defect(complex_, metric, hinge, t)
    b1, b2 = hinge_normal_basis(complex_, metric, hinge, side.cell, t)
    ref, _, g, _, density = hinge_frame(complex_, metric, hinge, side.cell, t)
    A = field.components(complex_, side.cell, ref, g)
    A_pair = np.einsum("pabcd,pa,pb,pc,pd->p", A, b1, b2, b1, b2)
    dens = _hinge_density(theta, A_pair)
    return float(rule.integrate(dens * density))


# ===========================================================================
# assembly
# ===========================================================================

@dataclass
class CurvatureMeasure:
    """Per-stratum breakdown of the assembled functional."""
    total: float
    cells: dict
    faces: dict
    hinges: dict
    quadrature_degree: int

    def to_dict(self):
        return {
            "total": self.total,
            "cells": [{"id": i, "value": v} for i, v in sorted(self.cells.items())],
            "faces": [{"id": i, "value": v} for i, v in sorted(self.faces.items())],
            "hinges": [{"id": i, "value": v} for i, v in sorted(self.hinges.items())],
            "quadrature_degree": self.quadrature_degree,
        }


def assemble(complex_, metric, field=None, degree=DEFAULT_DEGREE):
    """Evaluate the functional on every cell, interior face and hinge.

    Boundary faces and hinges carry no distributional curvature pairing
    here; closed-surface identities (and their boundary corrections in
    two dimensions) live in the Gauss module.
    """
    if field is None:
        field = GaussTestField("1", dim=complex_.dim)
    cells, faces, hinges = {}, {}, {}
    for cell in complex_.cells:
        cells[cell.index] = cell_term(complex_, metric, field, cell.index, degree)
    for f in complex_.interior_faces:
        faces[f.index] = face_term(complex_, metric, field, f, degree)
    for h in complex_.interior_hinges:
        hinges[h.index] = hinge_term(complex_, metric, field, h, degree)
    total = (sum(cells[k] for k in sorted(cells))
             + sum(faces[k] for k in sorted(faces))
             + sum(hinges[k] for k in sorted(hinges)))
    log.debug("assembled functional: total=%.15g (%d cells, %d faces, %d hinges)",
              total, len(cells), len(faces), len(hinges))
    return CurvatureMeasure(total=float(total), cells=cells, faces=faces,
                            hinges=hinges, quadrature_degree=degree)


# ===========================================================================
# independent wedge-trace equivalence check
# ===========================================================================
#
# The checker re-expresses each stratum density as the trace pairing of a
# matrix-valued form against a matrix-valued (n-2)-form phi-hat with
# random constant skew coefficients, evaluated in an orthonormal frame
# adapted to the stratum:
#
#   cell :  <R-hat wedge phi-hat>            R-hat_ij = <f_i, R(.,.) f_j>
#   face :  <II-hat wedge i* phi-hat>        II-hat(Z) = n (x) (D_Z n)^b
#                                                        - (D_Z n) (x) n^b
#   hinge:  <Theta-hat (wedge) i* phi-hat>   Theta-hat = Theta (b1 (x) b2^b
#                                                        - b2 (x) b1^b)
#
# with the adapted frame ordered (normal-first for faces, tangent-first
# for hinges) and the test field recovered through the Hodge star,
#   A(X, Y, Z, W) = <(star phi-hat)(X, Y) W, Z>.
# In these conventions each wedge-trace equals the corresponding
# production contraction with no stray signs, in dimensions 2 and 3.

def _random_skew(rng, n):
    S = rng.standard_normal((n, n))
    return S - S.T


def _wedge_2_nm2(R2, phi, n):
    """Trace pairing of a matrix 2-form with a matrix (n-2)-form.

    ``R2[i, j, a, b]`` are 2-form components on frame slots (a, b);
    ``phi`` is (n, n) for n = 2 or (n, n, n) (last slot the 1-form index)
    for n = 3.  Returns the evaluation on (f_1, .., f_n).
    """
    if n == 2:
        return float(np.einsum("ij,ij->", R2[:, :, 0, 1], phi))
    total = 0.0
    # (alpha ^ beta)(f1,f2,f3) for 2-form alpha, 1-form beta
    for (a, b, c), sgn in (((0, 1, 2), 1.0), ((0, 2, 1), -1.0), ((1, 2, 0), 1.0)):
        total += sgn * float(np.einsum("ij,ij->", R2[:, :, a, b], phi[:, :, c]))
    return total


def _star_field(phi, n):
    """A[a, b, c, d] = <(star phi-hat)(f_a, f_b) f_d, f_c> in frame indices."""
    A = np.zeros((n, n, n, n))
    if n == 2:
        eps = np.array([[0.0, 1.0], [-1.0, 0.0]])
        A = np.einsum("ab,cd->abcd", eps, phi)
    else:
        eps3 = np.zeros((3, 3, 3))
        for p in itertools.permutations(range(3)):
            sgn = 1.0
            q = list(p)
            for i in range(3):
                for j in range(i + 1, 3):
                    if q[i] > q[j]:
                        sgn = -sgn
            eps3[p] = sgn
        A = np.einsum("mab,cdm->abcd", eps3, phi)
    return A


def _on_frame(g):
    """Columns = g-orthonormal frame (inverse transpose Cholesky)."""
    L = np.linalg.cholesky(g)
    return np.linalg.inv(L).transpose(0, 2, 1)


def bruteforce_equivalence_check(complex_, metric, n_fields=3, n_points=2,
                                 degree=4, rng=None):
    """Pointwise wedge-trace vs contraction residuals on every stratum.

    Draws random skew-coefficient (n-2)-forms, recovers the test field
    through the Hodge star and compares the independently-computed
    wedge-trace densities against the production kernels at random
    points of every cell, interior face and interior hinge.  Returns a
    dict of maximal relative residuals per stratum.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    n = complex_.dim
    if n not in (2, 3):
        raise ValueError("equivalence check implemented for dimensions 2 and 3")
    res = {"cell": 0.0, "face": 0.0, "hinge": 0.0}

    def rand_phi():
        if n == 2:
            return _random_skew(rng, 2)
        return np.stack([_random_skew(rng, 3) for _ in range(3)], axis=-1)

    # --- cells ------------------------------------------------------------
    for cell in complex_.cells:
        pts = _random_ref_points(rng, cell.ref, n_points)
        mv = metric.evaluate(complex_, cell.index, pts, order=2)
        cov = riemann(mv).cov
        F = _on_frame(mv.g)
        R_on = np.einsum("pijkl,pia,pjb,pkc,pld->pabcd", cov, F, F, F, F)
        for _ in range(n_fields):
            phi = rand_phi()
            A = _star_field(phi, n)
            for p in range(len(pts)):
                lhs = _wedge_2_nm2(R_on[p], phi, n)
                rhs = float(_cell_density(cov[p:p + 1], _frame_to_chart(
                    A, F[p]), np.linalg.inv(mv.g[p:p + 1]))[0])
                scale = max(1.0, abs(lhs))
                res["cell"] = max(res["cell"], abs(lhs - rhs) / scale)

    # --- faces ------------------------------------------------------------
    for face in complex_.interior_faces:
        spts = _random_ref_points(rng, None, n_points, dim=face.dim,
                                  kind=face.kind)
        for side in face.sides:
            fr = face_frame(complex_, metric, face, side.cell, spts)
            II = second_fundamental_form(complex_, metric, face, side.cell,
                                         spts, frame=fr)
            for _ in range(n_fields):
                phi = rand_phi()
                A = _star_field(phi, n)
                for p in range(len(spts)):
                    lhs = _face_wedge(II[p], phi, n)
                    A_on = _face_A_on(A, n)
                    rhs = float(_face_density(II[p:p + 1],
                                              A_on[None, :, :])[0])
                    scale = max(1.0, abs(lhs))
                    res["face"] = max(res["face"], abs(lhs - rhs) / scale)

    # --- hinges -----------------------------------------------------------
    for hinge in complex_.interior_hinges:
        t = (np.zeros((1, 0)) if hinge.dim == 0
             else _random_ref_points(rng, None, n_points, dim=1, kind="simplex"))
        theta = angle_defect(complex_, metric, hinge, t)
        for _ in range(n_fields):
            phi = rand_phi()
            A = _star_field(phi, n)
            for p in range(len(t)):
                lhs = _hinge_wedge(theta[p], phi, n)
                A_pair = A[tuple(_hinge_slots(n))]
                rhs = float(_hinge_density(theta[p], A_pair))
                scale = max(1.0, abs(lhs))
                res["hinge"] = max(res["hinge"], abs(lhs - rhs) / scale)
    return res


def _frame_to_chart(A_frame, F):
    """Push frame-index test components to chart covariant components."""
    # A_chart contracted with chart vectors v equals A_frame contracted
    # with frame components F^{-1} v; covariantly A_chart = F^{-T}-pulled
    Finv = np.linalg.inv(F)
    return np.einsum("abcd,ae,bf,cg,dh->efgh", A_frame, Finv, Finv, Finv,
                     Finv)[None, :, :, :, :]


def _face_A_on(A, n):
    """A(E_k, n, E_j, n) in the face-adapted frame (n, E_1, .., E_{n-1})."""
    ks = range(1, n)
    return np.array([[A[k, 0, j, 0] for j in ks] for k in ks])


def _face_wedge(II, phi, n):
    """<II-hat wedge i* phi-hat> on the adapted frame (n, E_1, ..)."""
    # II-hat(E_a) = n (x) (D_a n)^b - (D_a n) (x) n^b, D_a n = II_ak E_k
    mats = []
    for a in range(n - 1):
        M = np.zeros((n, n))
        for k in range(n - 1):
            M[0, k + 1] += II[a, k]
            M[k + 1, 0] -= II[a, k]
        mats.append(M)
    if n == 2:
        return float(np.einsum("ij,ij->", mats[0], phi))
    # 1-form wedge 1-form on (E_1, E_2); i* phi-hat(E_a) = phi[:, :, a+1]
    return float(np.einsum("ij,ij->", mats[0], phi[:, :, 2])
                 - np.einsum("ij,ij->", mats[1], phi[:, :, 1]))


def _hinge_slots(n):
    # normal-plane basis occupies the last two adapted slots
    i, j = n - 2, n - 1
    return (i, j, i, j)


def _hinge_wedge(theta, phi, n):
    """<Theta-hat (wedge) i* phi-hat> on the adapted frame (t, b1, b2)."""
    i, j = n - 2, n - 1
    M = np.zeros((n, n))
    M[i, j] = theta
    M[j, i] = -theta
    if n == 2:
        return float(np.einsum("ij,ij->", M, phi))
    return float(np.einsum("ij,ij->", M, phi[:, :, 0]))


def _random_ref_points(rng, ref, count, dim=None, kind=None):
    """Strictly interior random points of a reference simplex or box."""
    if ref is not None:
        dim, kind = ref.dim, ref.kind
    if kind == "simplex":
        bary = rng.dirichlet(np.ones(dim + 1), size=count)
        pts = bary[:, :dim]
        centroid = np.full(dim, 1.0 / (dim + 1))
        return centroid + 0.8 * (pts - centroid)
    return 0.05 + 0.9 * rng.random((count, dim))
