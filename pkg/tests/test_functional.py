from __future__ import annotations

import numpy as np

import catalog
import reggecurv.functional as F
import reggecurv.mesh as M
import reggecurv.metric as MET


def _flat(mesh):
    return MET.load_metric(catalog.flat_metric(mesh.dim), mesh)


# ===========================================================================
# closed flat surfaces
# ===========================================================================

def test_catalog_surfaces_are_oriented_and_closed():
    for d in (catalog.cube_surface(), catalog.flat_torus(),
              catalog.octa_surface()):
        mesh = catalog.build(d)
        assert catalog.is_oriented(mesh)
        assert not mesh.has_boundary


def test_closed_flat_surface_totals_match_topology():
    for d, want in [(catalog.cube_surface(), 4 * np.pi),
                    (catalog.flat_torus(), 0.0),
                    (catalog.octa_surface(), 4 * np.pi)]:
        mesh = catalog.build(d)
        g = _flat(mesh)
        worst, _ = MET.check_tt_continuity(mesh, g)
        assert worst < 1e-12
        meas = F.assemble(mesh, g, degree=4)
        assert abs(meas.total - want) < 1e-12
        # piecewise flat: everything concentrates on the hinges
        assert all(abs(v) < 1e-13 for v in meas.cells.values())
        assert all(abs(v) < 1e-13 for v in meas.faces.values())


# ===========================================================================
# individual terms against analytic values
# ===========================================================================

def test_sphere_band_cell_term_weights_the_scalar_field():
    eps = 0.3
    band = catalog.build(catalog.sphere_band(eps))
    gs = MET.load_metric(catalog.sphere_metric(), band)
    ct = F.cell_term(band, gs, F.GaussTestField("1", dim=2), 0, degree=20)
    assert abs(ct - 4 * np.pi * np.cos(eps)) < 1e-9
    ct2 = F.cell_term(band, gs, F.GaussTestField("x1", dim=2), 0, degree=24)
    assert abs(ct2 - 2 * np.pi ** 2 * np.cos(eps)) < 1e-8
    # the seam is a great-circle arc from both sides: no bending jump
    ft = F.face_term(band, gs, F.GaussTestField("1", dim=2),
                     band.interior_faces[0])
    assert abs(ft) < 1e-12


def test_cone_apex_hinge_term_equals_the_defect():
    cone = catalog.build(catalog.cone_fan(3, np.pi / 3))
    assert len(cone.interior_hinges) == 1
    ht = F.hinge_term(cone, _flat(cone), F.GaussTestField("1", dim=2),
                      cone.interior_hinges[0])
    assert abs(ht - np.pi) < 1e-13


def test_face_jump_term_against_flat_polar_chart():
    # left cell carries cartesian coordinates, right cell polar ones; the
    # shared straight segment is a geodesic on the left and bends with the
    # polar chart on the right, so the jump integral is minus its turning
    mesh2 = M.build_complex(
        [[0, 0], [1, 0], [0, 1], [1, 1], [2, 0], [2, 1]],
        [{"type": "box", "verts": [0, 1, 2, 3]},
         {"type": "box", "verts": [1, 4, 3, 5]}])
    gpolar = MET.load_metric(
        {"kind": "expression_per_cell",
         "cells": [{"entries": [["1", "0"], ["0", "1"]]},
                   {"entries": [["1", "0"], ["0", "x1^2"]]}]}, mesh2)
    worst, _ = MET.check_tt_continuity(mesh2, gpolar)
    assert worst < 1e-12
    fj = F.face_term(mesh2, gpolar, F.GaussTestField("1", dim=2),
                     mesh2.interior_faces[0], degree=12)
    assert abs(fj + 1.0) < 1e-11


# ===========================================================================
# wedge-trace vs contraction cross-check
# ===========================================================================

def test_equivalence_checker_2d():
    tri2 = catalog.build(catalog.triangle_pair())
    rng = np.random.default_rng(7)
    g2 = MET.load_metric(catalog.random_poly_metric(tri2, 3, rng), tri2)
    res = F.bruteforce_equivalence_check(tri2, g2, n_fields=4, n_points=3,
                                         rng=rng)
    assert set(res) == {"cell", "face", "hinge"}
    assert all(v < 1e-11 for v in res.values())


def test_equivalence_checker_3d():
    fan = catalog.build(catalog.tet_fan(3))
    assert len(fan.interior_hinges) >= 1
    rng = np.random.default_rng(8)
    g3 = MET.load_metric(catalog.random_poly_metric(fan, 3, rng), fan)
    res3 = F.bruteforce_equivalence_check(fan, g3, n_fields=4, n_points=2,
                                          rng=rng)
    assert all(v < 1e-11 for v in res3.values())


# ===========================================================================
# test-field inputs
# ===========================================================================

def test_component_field_can_reproduce_the_canonical_gauss_field():
    band = catalog.build(catalog.sphere_band(0.3))
    gs = MET.load_metric(catalog.sphere_metric(), band)
    # with phi = 1 the single independent chart component is det(g)/2
    tf = F.load_test_field({"kind": "components",
                            "terms": [[[1, 2, 1, 2], "0.5*sin(x1)^2"]]},
                           band)
    gf = F.GaussTestField("1", dim=2)
    pts = np.array([[0.4, 0.3], [1.1, 2.5]])
    mvb = gs.evaluate(band, 0, pts)
    Ac = tf.components(band, 0, pts, mvb.g)
    Ag = gf.components(band, 0, pts, mvb.g)
    assert np.abs(Ac - Ag).max() < 1e-14
    m1 = F.cell_term(band, gs, tf, 0, degree=20)
    m2 = F.cell_term(band, gs, gf, 0, degree=20)
    assert abs(m1 - m2) < 1e-12


# ===========================================================================
# smooth metrics on chart complexes
# ===========================================================================

def test_octant_chart_sphere_metric():
    octa = catalog.build(catalog.octa_surface())
    gg = MET.load_metric(catalog.gnomonic_octa_metric(octa), octa)
    worst, _ = MET.check_tt_continuity(octa, gg)
    assert worst < 1e-10
    ct = F.cell_term(octa, gg, F.GaussTestField("1", dim=2), 0, degree=32)
    assert abs(ct - np.pi / 2) < 1e-10
    meas = F.assemble(octa, gg, degree=24)
    assert abs(meas.total - 4 * np.pi) < 1e-8


def test_eight_box_chart_sphere_cell_terms():
    s8 = catalog.build(catalog.sphere_boxes())
    gs8 = MET.load_metric(catalog.sphere_metric(), s8)
    meas = F.assemble(s8, gs8, degree=12)
    assert abs(sum(meas.cells.values()) - 4 * np.pi) < 1e-6
