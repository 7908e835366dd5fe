"""Per-cell differential geometry: curvature tensors, face frames,
second fundamental forms, dihedral angles and angle defects.

All tensor components live in the chart coordinate frame of the cell
being processed.  Conventions:

* Christoffel symbols ``G[i, j, k]`` = Gamma^i_{jk}
  = 1/2 g^{il} (d_j g_{lk} + d_k g_{lj} - d_l g_{jk});
* mixed curvature ``R^m_{jkl}`` = d_k Gamma^m_{lj} - d_l Gamma^m_{kj}
  + Gamma^m_{ka} Gamma^a_{lj} - Gamma^m_{la} Gamma^a_{kj};
* covariant ``R_{ijkl}`` = g_{im} R^m_{jkl}; for the round sphere in
  polar coordinates this gives R_{1212} = sin^2(x1) > 0, i.e. the sign
  convention with ``R_{1212} = K det g`` in two dimensions;
* the second fundamental form of a face is taken with respect to the
  *outward* unit normal of the cell, ``II(X, Y) = <nabla_X n, Y>``, so a
  round boundary circle of radius r seen from the inside has II = 1/r.

Face frames are orthonormal bases of the face tangent space obtained by
metric Gram-Schmidt of the canonical face parametrisation tangents; the
first leg is always parallel to the first canonical tangent, and both
sides of an interior face produce matching frames whenever the metric is
tangentially continuous.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import (BoundaryFace, BoundaryHinge, DegenerateFace,
                     DegenerateHinge)
from .mesh import _reference_outward_normal

log = logging.getLogger(__name__)


# ===========================================================================
# curvature tensors from metric values
# ===========================================================================

def christoffels(mv):
    """Gamma^i_{jk} as array [point, i, j, k] from order>=1 metric values."""
    g, dg = mv.g, mv.dg
    ginv = np.linalg.inv(g)
    # lowered symbol low[p, l, j, k] = 1/2 (d_j g_lk + d_k g_lj - d_l g_jk)
    # with dg[p, a, b, c] = d_c g_ab; the middle term is dg itself
    low = 0.5 * (dg.transpose(0, 1, 3, 2) + dg - dg.transpose(0, 3, 1, 2))
    return np.einsum("pil,pljk->pijk", ginv, low)


@dataclass
class RiemannData:
    """Curvature components at a batch of points.

    ``mixed[p, m, j, k, l]`` = R^m_{jkl};
    ``cov[p, i, j, k, l]`` = R_{ijkl}.
    """
    mixed: np.ndarray
    cov: np.ndarray


def riemann(mv):
    """Riemann curvature from order-2 metric values."""
    g, dg, d2g = mv.g, mv.dg, mv.d2g
    ginv = np.linalg.inv(g)
    dginv = -np.einsum("pim,pmnc,pnj->pijc", ginv, dg, ginv)
    low = 0.5 * (dg.transpose(0, 1, 3, 2) + dg - dg.transpose(0, 3, 1, 2))
    # derivative of the lowered symbol: dlow[p, l, j, k, c] = d_c low[l, j, k]
    dlow = 0.5 * (d2g.transpose(0, 1, 3, 2, 4) + d2g
                  - d2g.transpose(0, 3, 1, 2, 4))
    gamma = np.einsum("pil,pljk->pijk", ginv, low)
    dG = (np.einsum("pilc,pljk->pijkc", dginv, low)
          + np.einsum("pil,pljkc->pijkc", ginv, dlow))
    # dG[p, m, a, b, c] = d_c Gamma^m_{ab}
    # R^m_{jkl} = d_k G^m_{lj} - d_l G^m_{kj} + G^m_{ka} G^a_{lj} - G^m_{la} G^a_{kj}
    term1 = np.transpose(dG, (0, 1, 3, 4, 2))     # [p,m,j,k,l] <- dG[p,m,l,j,k]
    term2 = np.transpose(dG, (0, 1, 3, 2, 4))     # [p,m,j,k,l] <- dG[p,m,k,j,l]
    term3 = np.einsum("pmka,palj->pmjkl", gamma, gamma)
    term4 = np.einsum("pmla,pakj->pmjkl", gamma, gamma)
    mixed = term1 - term2 + term3 - term4
    cov = np.einsum("pim,pmjkl->pijkl", g, mixed)
    return RiemannData(mixed=mixed, cov=cov)


# ===========================================================================
# face frames
# ===========================================================================

@dataclass
class FaceFrame:
    """Geometry of one side of a face at a batch of canonical face points.

    ``tangents[p, :, a]`` are the chart pushforwards of the canonical
    face parametrisation; ``onb[p, :, k]`` the metric-orthonormal frame
    (first leg parallel to the first tangent); ``normal[p, :]`` the
    outward metric-unit normal of the cell; ``density[p]`` the
    sqrt(det Gram) area factor relating ds to the metric measure.
    """
    face: object
    cell: int
    s: np.ndarray
    ref: np.ndarray
    chart: np.ndarray
    g: np.ndarray
    tangents: np.ndarray
    gram: np.ndarray
    chol: np.ndarray
    onb: np.ndarray
    normal: np.ndarray
    density: np.ndarray


def face_frame(complex_, metric, face, cell_index, s_points):
    side = complex_.face_side(face, cell_index)
    cell = complex_.cells[cell_index]
    s = np.atleast_2d(np.asarray(s_points, float))
    ref = side.sigma.eval(s)
    mv = metric.evaluate(complex_, cell_index, ref)
    g = mv.g
    T = side.chart_map.jacobian(s)                 # (k, n, n-1)
    gram = np.einsum("pai,pab,pbj->pij", T, g, T)
    try:
        L = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise DegenerateFace("face %d side (cell %d) has degenerate tangent "
                             "Gram matrix" % (face.index, cell_index)) from exc
    onb = np.einsum("pai,pji->paj", T, np.linalg.inv(L))
    # outward normal: reference outward covector pushed through J^{-T},
    # then raised with g^{-1}; exactly g-orthogonal to the face tangents
    w_ref = _reference_outward_normal(cell.ref, side.facet)
    J = cell.geom.jacobian(ref)
    rhs = np.broadcast_to(w_ref, (len(s), len(w_ref)))[:, :, None]
    w = np.linalg.solve(np.transpose(J, (0, 2, 1)), rhs)[:, :, 0]
    ginv_w = np.linalg.solve(g, w[:, :, None])[:, :, 0]
    nn = np.einsum("pa,pa->p", w, ginv_w)
    if np.any(nn <= 0):
        raise DegenerateFace("face %d normal degenerated" % face.index)
    normal = ginv_w / np.sqrt(nn)[:, None]
    density = np.sqrt(np.linalg.det(gram))
    return FaceFrame(face=face, cell=cell_index, s=s, ref=ref,
                     chart=cell.geom.eval(ref), g=g, tangents=T, gram=gram,
                     chol=L, onb=onb, normal=normal, density=density)


def second_fundamental_form(complex_, metric, face, cell_index, s_points,
                            frame=None):
    """II in the face's orthonormal tangent frame, outward normal.

    Computed from second derivatives of the face parametrisation plus the
    ambient Christoffel correction; no normal field differentiation is
    needed: II_ab = -<n, d2P_ab + Gamma(T_a, T_b)>_g.
    """
    if frame is None:
        frame = face_frame(complex_, metric, face, cell_index, s_points)
    side = complex_.face_side(face, cell_index)
    s = frame.s
    mv = metric.evaluate(complex_, cell_index, frame.ref, order=1)
    gamma = christoffels(mv)
    d2P = side.chart_map.second(s)                 # (k, n, a, b)
    corr = np.einsum("pijk,pja,pkb->piab", gamma, frame.tangents, frame.tangents)
    cov = d2P + corr
    II_t = -np.einsum("pi,pij,pjab->pab", frame.normal, frame.g, cov)
    Linv = np.linalg.inv(frame.chol)
    return np.einsum("pka,pab,plb->pkl", Linv, II_t, Linv)


def jump_II(complex_, metric, face, s_points):
    """Sum of the two second fundamental forms of an interior face.

    Both sides are expressed in the shared canonical orthonormal tangent
    frame (frames agree for tangentially continuous metrics), so the
    entries add directly.
    """
    if face.is_boundary:
        raise BoundaryFace("face %d is a boundary face" % face.index)
    total = None
    for side in face.sides:
        II = second_fundamental_form(complex_, metric, face, side.cell, s_points)
        total = II if total is None else total + II
    return total


# ===========================================================================
# dihedral angles and angle defects
# ===========================================================================

def _gram_schmidt_against(v, basis, g):
    """Remove g-components of v along an orthonormal basis list."""
    for b in basis:
        v = v - np.einsum("pa,pab,pb->p", v, g, b)[:, None] * b
    return v


def _g_normalize(v, g, what):
    n2 = np.einsum("pa,pab,pb->p", v, g, v)
    if np.any(n2 <= 1e-24):
        raise DegenerateHinge("degenerate direction while building %s" % what)
    return v / np.sqrt(n2)[:, None]


def hinge_frame(complex_, metric, hinge, cell_index, t_points):
    """Hinge tangent data inside one incident cell.

    Returns (ref points, J, g, list of g-orthonormal hinge tangents,
    density) at the hinge quadrature points ``t``.
    """
    hs = hinge.side_for_cell(cell_index)
    cell = complex_.cells[cell_index]
    t = np.atleast_2d(np.asarray(t_points, float))
    if hinge.dim == 0:
        t = np.zeros((1, 0)) if t.size == 0 else t
    ref = hs.sigma.eval(t)
    mv = metric.evaluate(complex_, cell_index, ref)
    g = mv.g
    J = cell.geom.jacobian(ref)
    tangents = []
    if hinge.dim >= 1:
        T = hs.chart_map.jacobian(t)               # (k, n, hdim)
        for a in range(hinge.dim):
            v = T[:, :, a]
            v = _gram_schmidt_against(v, tangents, g)
            tangents.append(_g_normalize(v, g, "hinge tangent"))
        gram = np.einsum("pai,pab,pbj->pij", T, g, T)
        density = np.sqrt(np.linalg.det(gram))
    else:
        density = np.ones(len(ref))
    return ref, J, g, tangents, density


def hinge_normal_basis(complex_, metric, hinge, cell_index, t_points):
    """g-orthonormal basis (b1, b2) of the plane normal to a hinge.

    Built inside the given incident cell: b1 is the unit conormal of the
    cell's first facet at the hinge, b2 completes it using the direction
    towards the cell's reference centroid.  Any such basis spans the same
    plane; quantities contracted with the full antisymmetric slot pattern
    (b1, b2, b1, b2) do not depend on the choice.
    """
    hs = hinge.side_for_cell(cell_index)
    cell = complex_.cells[cell_index]
    ref, J, g, tangents, _ = hinge_frame(complex_, metric, hinge, cell_index,
                                         t_points)

    def into_face(facet_idx):
        fac_mid = cell.ref.verts[list(cell.ref.facets[facet_idx])].mean(axis=0)
        u = np.einsum("pij,pj->pi", J, fac_mid - ref)
        u = _gram_schmidt_against(u, tangents, g)
        return _g_normalize(u, g, "conormal")

    b1 = into_face(hs.facets[0])
    c = np.einsum("pij,pj->pi", J, cell.ref.centroid() - ref)
    b2 = _gram_schmidt_against(c, tangents + [b1], g)
    b2 = _g_normalize(b2, g, "normal-plane completion")
    return b1, b2


def dihedral_angle(complex_, metric, hinge, cell_index, t_points):
    """Interior angle of one cell wedge at a hinge, in (0, 2 pi).

    The angle between the conormals of the cell's two faces meeting at
    the hinge, measured through the cell interior (the quadrant is fixed
    with a vector pointing from the hinge towards the cell's mapped
    reference centroid).
    """
    hs = hinge.side_for_cell(cell_index)
    cell = complex_.cells[cell_index]
    ref, J, g, tangents, _ = hinge_frame(complex_, metric, hinge, cell_index,
                                         t_points)
    k = len(ref)

    def conormal(facet_idx):
        fac_mid = cell.ref.verts[list(cell.ref.facets[facet_idx])].mean(axis=0)
        u_ref = fac_mid - ref              # (k, n), into the face
        u = np.einsum("pij,pj->pi", J, u_ref)
        u = _gram_schmidt_against(u, tangents, g)
        return _g_normalize(u, g, "conormal")

    nu_a = conormal(hs.facets[0])
    nu_b = conormal(hs.facets[1])
    c_ref = cell.ref.centroid() - ref
    c = np.einsum("pij,pj->pi", J, c_ref)
    n_hat = _gram_schmidt_against(c, tangents + [nu_a], g)
    n_hat = _g_normalize(n_hat, g, "angle normal")
    x = np.einsum("pa,pab,pb->p", nu_b, g, nu_a)
    y = np.einsum("pa,pab,pb->p", nu_b, g, n_hat)
    theta = np.arctan2(y, x)
    theta = np.where(theta <= 0, theta + 2 * np.pi, theta)
    return theta


def angle_defect(complex_, metric, hinge, t_points=None):
    """2 pi minus the sum of incident dihedral angles at an interior hinge."""
    if hinge.is_boundary:
        raise BoundaryHinge("hinge %d lies on the boundary" % hinge.index)
    if t_points is None:
        t_points = np.zeros((1, hinge.dim))
    total = None
    for side in hinge.sides:
        th = dihedral_angle(complex_, metric, hinge, side.cell, t_points)
        total = th if total is None else total + th
    return 2 * np.pi - total
