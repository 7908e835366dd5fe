from __future__ import annotations

import json

import numpy as np
import pytest

import catalog
from reggecurv import mesh as M
from reggecurv.errors import InvertedCell, NonManifold, UnsupportedCellType
from reggecurv.quadrature import quadrature_rule


# ===========================================================================
# adjacency and strata
# ===========================================================================

def test_two_triangles_share_one_interior_face():
    mc = M.build_complex(
        [[0, 0], [1, 0], [0, 1], [1, 1]],
        [{"type": "simplex", "verts": [0, 1, 2]},
         {"type": "simplex", "verts": [1, 3, 2]}])
    assert len(mc.faces) == 5
    assert len(mc.interior_faces) == 1
    assert len(mc.hinges) == 4
    assert len(mc.boundary_hinges) == 4
    f = mc.interior_faces[0]
    s0 = M.induced_orientation(mc, f, f.sides[0].cell)
    s1 = M.induced_orientation(mc, f, f.sides[1].cell)
    assert s0 == -s1
    assert M.euler_characteristic(mc) == 1


def test_vertex_fan_is_cyclic_on_an_interior_vertex():
    mc = M.build_complex(
        [[0.5, 0.5], [0, 0], [1, 0], [1, 1], [0, 1]],
        [{"type": "simplex", "verts": [0, 1, 2]},
         {"type": "simplex", "verts": [0, 2, 3]},
         {"type": "simplex", "verts": [0, 3, 4]},
         {"type": "simplex", "verts": [0, 4, 1]}])
    interior = [h for h in mc.hinges if not h.is_boundary]
    assert len(interior) == 1
    fan = M.hinge_fan(mc, interior[0])
    assert len(fan) == 4
    for j in range(4):
        # the face we leave through is the face the next cell enters through
        assert fan[j][2] == fan[(j + 1) % 4][1]
    assert M.euler_characteristic(mc) == 1


def test_vertex_identification_builds_a_flat_torus():
    def vid(i, j):
        return 3 * j + i

    verts = [[i / 2, j / 2] for j in range(3) for i in range(3)]
    cells = []
    for j in range(2):
        for i in range(2):
            cells.append({"type": "box",
                          "verts": [vid(i, j), vid(i + 1, j),
                                    vid(i, j + 1), vid(i + 1, j + 1)]})
    identify = [(vid(2, j), vid(0, j)) for j in range(3)] + \
               [(vid(i, 2), vid(i, 0)) for i in range(3)]
    mc = M.build_complex(verts, cells, identify)
    assert mc.strata_counts() == {2: 4, 1: 8, 0: 4}
    assert M.euler_characteristic(mc) == 0
    assert not mc.has_boundary
    for h in mc.hinges:
        assert not h.is_boundary
        assert len(M.hinge_fan(mc, h)) == 4


def test_cube_surface_counts_and_fans():
    mc = catalog.build(catalog.cube_surface())
    assert mc.strata_counts() == {2: 6, 1: 12, 0: 8}
    assert M.euler_characteristic(mc) == 2
    assert not mc.has_boundary
    for h in mc.hinges:
        fan = M.hinge_fan(mc, h)
        assert len(fan) == 3 and not h.is_boundary
        for j in range(3):
            assert fan[j][2] == fan[(j + 1) % 3][1]


def test_octahedron_surface_counts_and_fans():
    mc = catalog.build(catalog.octa_surface())
    assert mc.strata_counts() == {2: 8, 1: 12, 0: 6}
    assert M.euler_characteristic(mc) == 2
    for h in mc.hinges:
        assert len(M.hinge_fan(mc, h)) == 4 and not h.is_boundary


# ===========================================================================
# refinement
# ===========================================================================

def test_refinement_preserves_topology():
    mc = catalog.build(catalog.octa_surface())
    r1 = M.refine(mc)
    r2 = M.refine(r1)
    assert len(r1.cells) == 32 and len(r2.cells) == 128
    assert M.euler_characteristic(r1) == 2
    assert M.euler_characteristic(r2) == 2
    assert not r2.has_boundary

    tri = M.build_complex([[0, 0], [1, 0], [0, 1]],
                          [{"type": "simplex", "verts": [0, 1, 2]}])
    r = M.refine(tri)
    assert len(r.cells) == 4 and M.euler_characteristic(r) == 1


def test_refinement_of_curved_geometry_preserves_area():
    pm = M.PolynomialMap(2, 2, {(0, 0): [0, 0], (1, 0): [1, 0],
                                (0, 1): [0, 1], (1, 1): [0.3, 0.2]})
    mcq = M.build_complex([[0, 0], [1, 0], [0, 1]],
                          [{"type": "simplex", "verts": [0, 1, 2],
                            "geom": pm}])
    rule = quadrature_rule(2, 6, "simplex")
    parent = rule.integrate(np.linalg.det(
        mcq.cells[0].geom.jacobian(rule.points)))
    rq = M.refine(mcq)
    assert len(rq.cells) == 4
    children = 0.0
    for c in rq.cells:
        dets = np.linalg.det(c.geom.jacobian(rule.points))
        assert np.all(dets > 0)
        children += rule.integrate(dets)
    assert abs(parent - children) < 1e-13


def test_tetrahedron_refinement_conserves_volume():
    mt = M.build_complex([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]],
                         [{"type": "simplex", "verts": [0, 1, 2, 3]}])
    assert len(mt.faces) == 4 and len(mt.hinges) == 6
    assert M.euler_characteristic(mt) == 1
    rt = M.refine(mt)
    assert len(rt.cells) == 8 and M.euler_characteristic(rt) == 1
    rule = quadrature_rule(3, 4, "simplex")
    vol = 0.0
    for c in rt.cells:
        dets = np.linalg.det(c.geom.jacobian(rule.points))
        assert np.all(dets > 0)
        vol += rule.integrate(dets)
    assert abs(vol - 1 / 6) < 1e-14


def test_two_tets_share_a_face_with_open_edge_fans():
    m2 = M.build_complex(
        [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]],
        [{"type": "simplex", "verts": [0, 1, 2, 3]},
         {"type": "simplex", "verts": [1, 2, 3, 4]}])
    assert len(m2.interior_faces) == 1
    shared = [h for h in m2.hinges if len(h.sides) == 2]
    assert len(shared) == 3
    for h in shared:
        fan = M.hinge_fan(m2, h)
        assert len(fan) == 2 and h.is_boundary
        # an open fan starts and ends at boundary faces
        assert m2.faces[fan[0][1]].is_boundary
        assert m2.faces[fan[-1][2]].is_boundary


# ===========================================================================
# input validation
# ===========================================================================

def test_three_cells_on_one_edge_are_rejected():
    with pytest.raises((NonManifold, InvertedCell)):
        M.build_complex([[0, 0], [1, 0], [0, 1], [1, 1], [-1, 1]],
                        [{"type": "simplex", "verts": [0, 1, 2]},
                         {"type": "simplex", "verts": [1, 2, 3]},
                         {"type": "simplex", "verts": [2, 1, 4]}])


def test_negatively_oriented_cell_is_rejected():
    with pytest.raises(InvertedCell):
        M.build_complex([[0, 0], [1, 0], [0, 1]],
                        [{"type": "simplex", "verts": [0, 2, 1]}])


def test_box_refinement_is_unsupported():
    mc = M.build_complex([[0, 0], [1, 0], [0, 1], [1, 1]],
                         [{"type": "box", "verts": [0, 1, 2, 3]}])
    with pytest.raises(UnsupportedCellType):
        M.refine(mc)


# ===========================================================================
# serialization
# ===========================================================================

def test_json_round_trip_keeps_curved_geometry():
    tri = M.build_complex([[0, 0], [1, 0], [0, 1]],
                          [{"type": "simplex", "verts": [0, 1, 2]}])
    again = M.load_mesh(tri.to_dict())
    assert len(again.cells) == 1

    pm = M.PolynomialMap(2, 2, {(0, 0): [0, 0], (1, 0): [1, 0],
                                (0, 1): [0, 1], (1, 1): [0.3, 0.2]})
    mcq = M.build_complex([[0, 0], [1, 0], [0, 1]],
                          [{"type": "simplex", "verts": [0, 1, 2],
                            "geom": pm}])
    again = M.load_mesh(json.dumps(mcq.to_dict()))
    assert again.cells[0].geom.degree == 2
    pts = np.array([[0.2, 0.3], [0.4, 0.1]])
    assert np.allclose(again.cells[0].geom.eval(pts),
                       mcq.cells[0].geom.eval(pts))
