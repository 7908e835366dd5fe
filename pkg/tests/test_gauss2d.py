from __future__ import annotations

import numpy as np
import pytest

import catalog
import reggecurv.functional as F
import reggecurv.gauss2d as GB
import reggecurv.metric as MET
from reggecurv.errors import WrongDimension


def _flat(mesh):
    return MET.load_metric(catalog.flat_metric(mesh.dim), mesh)


def _interior_total(rep):
    return rep.cell_integral + rep.interior_jump + rep.interior_defect


# ===========================================================================
# surfaces with boundary
# ===========================================================================

def test_flat_square_total_is_all_corner_turning():
    sq = catalog.build(catalog.unit_square())
    res = GB.gauss_bonnet_check(sq, _flat(sq))
    assert res.defect < 1e-12
    assert abs(res.report.boundary_turning - 2 * np.pi) < 1e-12


def test_polygonal_disk_with_circular_arcs():
    disk = catalog.build(catalog.disk_mesh(64))
    gd = _flat(disk)
    res = GB.gauss_bonnet_check(disk, gd)
    assert res.defect < 1e-8
    # the rim is a unit circle: geodesic curvature 1 along every arc
    rim = [f for f in disk.faces if f.is_boundary][0]
    k = GB.geodesic_curvature(disk, gd, rim, rim.sides[0].cell,
                              np.linspace(0.1, 0.9, 5)[:, None])
    assert np.all(np.abs(k - 1) < 1e-5)


# ===========================================================================
# closed surfaces
# ===========================================================================

def test_closed_flat_surfaces_balance_their_topology():
    for d, chi in [(catalog.cube_surface(), 2),
                   (catalog.flat_torus(), 0),
                   (catalog.octa_surface(), 2)]:
        mesh = catalog.build(d)
        res = GB.gauss_bonnet_check(mesh, _flat(mesh))
        assert res.chi == chi
        assert res.defect < 1e-12
        assert res.report.boundary_geodesic == 0.0
        assert not res.report.boundary_hinges


def test_round_annulus_band_balances_to_zero():
    band = catalog.build(catalog.sphere_band(0.3))
    gs = MET.load_metric(catalog.sphere_metric(), band)
    res = GB.gauss_bonnet_check(band, gs, degree=20)
    assert res.chi == 0
    assert res.defect < 1e-10


# ===========================================================================
# pointwise curvature and scalar pairing
# ===========================================================================

def test_gauss_curvature_of_the_round_sphere_chart():
    band = catalog.build(catalog.sphere_band(0.3))
    gs = MET.load_metric(catalog.sphere_metric(), band)
    K = GB.gauss_curvature(band, gs, 0, np.array([[0.4, 0.2], [0.7, 0.6]]))
    assert np.abs(K - 1).max() < 1e-12


def test_interior_groups_match_the_assembled_functional():
    cone = catalog.build(catalog.cone_fan(3, np.pi / 3))
    gflat = _flat(cone)
    rep = GB.pair_gauss(cone, gflat, "1")
    meas = F.assemble(cone, gflat)
    assert abs(_interior_total(rep) - meas.total) < 1e-13

    s4 = catalog.build(catalog.square_four_triangles())
    rng = np.random.default_rng(11)
    g4 = MET.load_metric(catalog.random_poly_metric(s4, 3, rng), s4)
    rep = GB.pair_gauss(s4, g4, "1 + 0.2*x1*x2", degree=14)
    tf = F.GaussTestField("1 + 0.2*x1*x2", dim=2)
    meas = F.assemble(s4, g4, tf, degree=14)
    assert abs(_interior_total(rep) - meas.total) < 1e-12


def test_random_metric_square_still_balances():
    s4 = catalog.build(catalog.square_four_triangles())
    rng = np.random.default_rng(11)
    g4 = MET.load_metric(catalog.random_poly_metric(s4, 3, rng), s4)
    res = GB.gauss_bonnet_check(s4, g4, degree=20)
    assert res.defect < 1e-9


# ===========================================================================
# guards
# ===========================================================================

def test_dimension_guard_rejects_3d_complexes():
    fan = catalog.build(catalog.tet_fan(3))
    with pytest.raises(WrongDimension):
        GB.gauss_bonnet_check(fan, _flat(fan))
