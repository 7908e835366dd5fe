from __future__ import annotations

import numpy as np

import catalog
from reggecurv import elemgeom as E, mesh as M, metric as G


def _flat(mesh):
    return G.load_metric(catalog.flat_metric(mesh.dim), mesh)


# ===========================================================================
# Christoffel symbols and curvature tensor
# ===========================================================================

def test_round_sphere_chart_metric_has_unit_curvature():
    rng = np.random.default_rng(7)
    verts = [[0.3, 0.0], [2.8, 0.0], [0.3, 6.0], [2.8, 6.0]]
    mc = M.build_complex(verts, [{"type": "box", "verts": [0, 1, 2, 3]}])
    g = G.load_metric({"kind": "expression",
                       "entries": [["1", "0"], ["0", "sin(x1)^2"]]}, mc)
    pts = rng.random((5, 2))
    mv = g.evaluate(mc, 0, pts, order=2)
    th = mc.cells[0].geom.eval(pts)[:, 0]
    gam = E.christoffels(mv)
    assert np.allclose(gam[:, 0, 1, 1], -np.sin(th) * np.cos(th))
    assert np.allclose(gam[:, 1, 0, 1], np.cos(th) / np.sin(th))
    R = E.riemann(mv)
    assert np.allclose(R.cov[:, 0, 1, 0, 1], np.sin(th) ** 2)
    K = R.cov[:, 0, 1, 0, 1] / np.linalg.det(mv.g)
    assert np.allclose(K, 1.0)


def test_riemann_tensor_symmetries_on_random_3d_metric():
    rng = np.random.default_rng(7)
    m3 = M.build_complex([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]],
                         [{"type": "simplex", "verts": [0, 1, 2, 3]}])
    cc = {}
    for key in [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (2, 0, 0),
                (1, 1, 0), (0, 1, 1), (1, 0, 2)]:
        A = 0.2 * rng.standard_normal((3, 3))
        cc[key] = 0.5 * (A + A.T) + (np.eye(3) * 2.0 if key == (0, 0, 0)
                                     else 0)
    gp = G.PolynomialMetric(3, [cc])
    assert G.check_positive_definite(m3, gp) > 0
    mv = gp.evaluate(m3, 0, rng.random((4, 3)) * 0.3, order=2)
    R = E.riemann(mv).cov
    scale = np.max(np.abs(R))
    assert np.max(np.abs(R + R.transpose(0, 2, 1, 3, 4))) / scale < 1e-12
    assert np.max(np.abs(R + R.transpose(0, 1, 2, 4, 3))) / scale < 1e-12
    assert np.max(np.abs(R - R.transpose(0, 3, 4, 1, 2))) / scale < 1e-12
    bianchi = R + R.transpose(0, 1, 3, 4, 2) + R.transpose(0, 1, 4, 2, 3)
    assert np.max(np.abs(bianchi)) / scale < 1e-12


# ===========================================================================
# face frames and second fundamental forms
# ===========================================================================

def test_face_frames_agree_across_an_interior_face():
    m2 = M.build_complex([[0, 0], [1, 0], [0, 1], [1, 1]],
                         [{"type": "simplex", "verts": [0, 1, 2]},
                          {"type": "simplex", "verts": [1, 3, 2]}])
    gid = _flat(m2)
    f = m2.interior_faces[0]
    s = np.array([[0.25], [0.5], [0.75]])
    fr0 = E.face_frame(m2, gid, f, f.sides[0].cell, s)
    fr1 = E.face_frame(m2, gid, f, f.sides[1].cell, s)
    assert np.allclose(fr0.chart, fr1.chart)
    assert np.allclose(fr0.normal, -fr1.normal)
    assert np.allclose(fr0.onb, fr1.onb)
    gram = np.einsum("pai,pab,pbj->pij", fr0.onb, fr0.g, fr0.onb)
    assert np.allclose(gram, np.eye(1))

    g49 = G.load_metric({"kind": "expression",
                         "entries": [["4", "0"], ["0", "9"]]}, m2)
    fr = E.face_frame(m2, g49, f, 0, s)
    gram = np.einsum("pai,pab,pbj->pij", fr.onb, fr.g, fr.onb)
    assert np.allclose(gram, np.eye(1))
    nrm2 = np.einsum("pa,pab,pb->p", fr.normal, fr.g, fr.normal)
    assert np.allclose(nrm2, 1.0)


def test_flat_straight_faces_have_zero_second_fundamental_form():
    m2 = M.build_complex([[0, 0], [1, 0], [0, 1], [1, 1]],
                         [{"type": "simplex", "verts": [0, 1, 2]},
                          {"type": "simplex", "verts": [1, 3, 2]}])
    gid = _flat(m2)
    f = m2.interior_faces[0]
    s = np.array([[0.25], [0.5], [0.75]])
    II = E.second_fundamental_form(m2, gid, f, 0, s)
    assert np.max(np.abs(II)) < 1e-13
    assert np.max(np.abs(E.jump_II(m2, gid, f, s))) < 1e-13


def test_polar_chart_circles_have_curvature_one_over_radius():
    # flat plane in polar coordinates: chart (r, phi), metric diag(1, r^2);
    # the circle r = R bends with curvature 1/R toward decreasing r
    verts = [[0.5, 0.0], [2.0, 0.0], [0.5, 1.2], [2.0, 1.2]]
    mp = M.build_complex(verts, [{"type": "box", "verts": [0, 1, 2, 3]}])
    gpol = G.load_metric({"kind": "expression",
                          "entries": [["1", "0"], ["0", "x1^2"]]}, mp)
    s = np.array([[0.25], [0.5], [0.75]])
    for fc in mp.boundary_faces:
        side = fc.sides[0]
        mid = side.chart_map.eval(np.array([[0.5]]))
        II = E.second_fundamental_form(mp, gpol, fc, side.cell, s)
        if np.allclose(mid[0, 0], 2.0):
            assert np.allclose(II[:, 0, 0], 0.5)
        elif np.allclose(mid[0, 0], 0.5):
            assert np.allclose(II[:, 0, 0], -2.0)
        else:
            assert np.max(np.abs(II)) < 1e-13


# ===========================================================================
# dihedral angles and angle defects
# ===========================================================================

def test_triangle_corner_angles_respond_to_the_metric():
    mt = M.build_complex([[0, 0], [1, 0], [0, 1]],
                         [{"type": "simplex", "verts": [0, 1, 2]}])
    gid1 = _flat(mt)
    gsk = G.load_metric({"kind": "expression",
                         "entries": [["1", "0.5"], ["0.5", "1"]]}, mt)
    for h in mt.hinges:
        th = E.dihedral_angle(mt, gid1, h, 0, np.zeros((1, 0)))
        ths = E.dihedral_angle(mt, gsk, h, 0, np.zeros((1, 0)))
        if h.sides[0].local_verts[0] == 0:
            assert np.allclose(th, np.pi / 2)
            assert np.allclose(ths, np.pi / 3)
        else:
            assert np.allclose(th, np.pi / 4)


def test_flat_interior_vertex_has_zero_defect():
    mf = M.build_complex(
        [[0.5, 0.5], [0, 0], [1, 0], [1, 1], [0, 1]],
        [{"type": "simplex", "verts": [0, 1, 2]},
         {"type": "simplex", "verts": [0, 2, 3]},
         {"type": "simplex", "verts": [0, 3, 4]},
         {"type": "simplex", "verts": [0, 4, 1]}])
    h = [h for h in mf.hinges if not h.is_boundary][0]
    assert np.allclose(E.angle_defect(mf, _flat(mf), h), 0.0, atol=1e-13)


def test_piecewise_flat_surface_defects_total_4pi():
    mcube = catalog.build(catalog.cube_surface())
    gcube = _flat(mcube)
    total = 0.0
    for h in mcube.hinges:
        d = E.angle_defect(mcube, gcube, h)[0]
        assert np.allclose(d, np.pi / 2)
        total += d
    assert abs(total - 4 * np.pi) < 1e-12

    mocta = catalog.build(catalog.octa_surface())
    gocta = _flat(mocta)
    total = 0.0
    for h in mocta.hinges:
        d = E.angle_defect(mocta, gocta, h)[0]
        assert np.allclose(d, 2 * np.pi / 3)
        total += d
    assert abs(total - 4 * np.pi) < 1e-12


def test_unit_tetrahedron_edge_dihedrals():
    m3 = M.build_complex([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]],
                         [{"type": "simplex", "verts": [0, 1, 2, 3]}])
    g3 = _flat(m3)
    tq = np.array([[0.3], [0.6]])
    for h in m3.hinges:
        th = E.dihedral_angle(m3, g3, h, 0, tq)
        corner = tuple(sorted(h.sides[0].local_verts))
        if corner in [(0, 1), (0, 2), (0, 3)]:
            assert np.allclose(th, np.pi / 2)
        else:
            assert np.allclose(th, np.arccos(1 / np.sqrt(3)))
