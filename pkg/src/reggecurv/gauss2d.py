"""Gauss curvature and Gauss-Bonnet accounting on 2D complexes.

For surfaces the distributional curvature has a classical reading: Gauss
curvature density on cells, geodesic curvature jumps on interior edges,
angle defects at interior vertices, plus the boundary terms (geodesic
curvature of boundary edges and turning angles at boundary vertices)
that close the Gauss-Bonnet identity

    sum of all five terms with phi = 1  ==  2 pi chi.

:func:`pair_gauss` evaluates the five groups against a scalar weight and
:func:`gauss_bonnet_check` reports the closure defect.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .elemgeom import angle_defect, dihedral_angle, face_frame, hinge_frame, \
    riemann, second_fundamental_form
from .errors import WrongDimension
from .expressions import parse_expression
from .mesh import euler_characteristic
from .quadrature import quadrature_rule

log = logging.getLogger(__name__)

DEFAULT_DEGREE = 12


def _require_2d(complex_, what):
    if complex_.dim != 2:
        raise WrongDimension("%s needs a 2D complex, got dimension %d"
                             % (what, complex_.dim))


# ===========================================================================
# pointwise curvatures
# ===========================================================================

def gauss_curvature(complex_, metric, cell_index, ref_points):
    """K = R_1212 / det g at reference points of one cell."""
    _require_2d(complex_, "gauss_curvature")
    mv = metric.evaluate(complex_, cell_index, ref_points, order=2)
    cov = riemann(mv).cov
    return cov[:, 0, 1, 0, 1] / np.linalg.det(mv.g)


def geodesic_curvature(complex_, metric, face, cell_index, s_points):
    """k = <D_tau n, tau> along an edge, n the cell's outward unit normal.

    Positive where the edge curves away from the normal direction; the
    boundary circle of a flat disk of radius r gives +1/r.
    """
    _require_2d(complex_, "geodesic_curvature")
    II = second_fundamental_form(complex_, metric, face, cell_index, s_points)
    return II[:, 0, 0]


# ===========================================================================
# five-term pairing
# ===========================================================================

@dataclass
class GaussReport:
    """Gauss-Bonnet style breakdown of the curvature pairing.

    Aggregates per group plus per-object values keyed by stratum index;
    ``total`` is the sum of all five groups.
    """
    cell_integral: float
    interior_jump: float
    interior_defect: float
    boundary_geodesic: float
    boundary_turning: float
    total: float
    cells: dict
    interior_faces: dict
    interior_hinges: dict
    boundary_faces: dict
    boundary_hinges: dict
    quadrature_degree: int

    def to_dict(self):
        return {
            "cell_integral": self.cell_integral,
            "interior_jump": self.interior_jump,
            "interior_defect": self.interior_defect,
            "boundary_geodesic": self.boundary_geodesic,
            "boundary_turning": self.boundary_turning,
            "total": self.total,
            "cells": [{"id": i, "value": v} for i, v in sorted(self.cells.items())],
            "interior_faces": [{"id": i, "value": v}
                               for i, v in sorted(self.interior_faces.items())],
            "interior_hinges": [{"id": i, "value": v}
                                for i, v in sorted(self.interior_hinges.items())],
            "boundary_faces": [{"id": i, "value": v}
                               for i, v in sorted(self.boundary_faces.items())],
            "boundary_hinges": [{"id": i, "value": v}
                                for i, v in sorted(self.boundary_hinges.items())],
            "quadrature_degree": self.quadrature_degree,
        }


def _phi_ast(phi):
    if hasattr(phi, "ast"):
        return phi.ast
    return parse_expression(str(phi), dim=2)


def pair_gauss(complex_, metric, phi="1", degree=DEFAULT_DEGREE):
    """Pair Gauss curvature (all five groups) against a scalar weight.

    ``phi`` is a chart-coordinate expression, a number, or an object with
    an ``ast`` attribute; non-constant weights are only meaningful on
    single-chart complexes.
    """
    _require_2d(complex_, "pair_gauss")
    ast = _phi_ast(phi)

    def phi_at(cell_index, ref):
        x = complex_.cells[cell_index].geom.eval(ref)
        return np.broadcast_to(np.asarray(ast.eval(x.T), float), (len(x),))

    cells = {}
    for cell in complex_.cells:
        rule = quadrature_rule(2, degree, cell.kind)
        K = gauss_curvature(complex_, metric, cell.index, rule.points)
        mv = metric.evaluate(complex_, cell.index, rule.points)
        detJ = np.linalg.det(cell.geom.jacobian(rule.points))
        dens = K * phi_at(cell.index, rule.points) * np.sqrt(
            np.linalg.det(mv.g)) * detJ
        cells[cell.index] = float(rule.integrate(dens))

    int_faces, bd_faces = {}, {}
    rule1 = quadrature_rule(1, degree, "simplex")
    for face in complex_.faces:
        val = 0.0
        for side in face.sides:
            fr = face_frame(complex_, metric, face, side.cell, rule1.points)
            k = second_fundamental_form(complex_, metric, face, side.cell,
                                        rule1.points, frame=fr)[:, 0, 0]
            val += float(rule1.integrate(
                k * phi_at(side.cell, fr.ref) * fr.density))
        (bd_faces if face.is_boundary else int_faces)[face.index] = val

    int_hinges, bd_hinges = {}, {}
    for hinge in complex_.hinges:
        side = hinge.sides[0]
        ref, _, _, _, _ = hinge_frame(complex_, metric, hinge, side.cell,
                                      np.zeros((1, 0)))
        w = float(phi_at(side.cell, ref)[0])
        if hinge.is_boundary:
            turn = np.pi - sum(
                float(dihedral_angle(complex_, metric, hinge, hs.cell,
                                     np.zeros((1, 0)))[0])
                for hs in hinge.sides)
            bd_hinges[hinge.index] = turn * w
        else:
            int_hinges[hinge.index] = float(
                angle_defect(complex_, metric, hinge)[0]) * w

    groups = [sum(cells.values()), sum(int_faces.values()),
              sum(int_hinges.values()), sum(bd_faces.values()),
              sum(bd_hinges.values())]
    report = GaussReport(
        cell_integral=groups[0], interior_jump=groups[1],
        interior_defect=groups[2], boundary_geodesic=groups[3],
        boundary_turning=groups[4], total=float(sum(groups)),
        cells=cells, interior_faces=int_faces, interior_hinges=int_hinges,
        boundary_faces=bd_faces, boundary_hinges=bd_hinges,
        quadrature_degree=degree)
    log.debug("pair_gauss total=%.15g (groups %s)", report.total, groups)
    return report


# ===========================================================================
# Gauss-Bonnet closure
# ===========================================================================

@dataclass
class GaussBonnetResult:
    report: GaussReport
    chi: int
    expected: float
    defect: float

    def to_dict(self):
        d = self.report.to_dict()
        d.update({"chi": self.chi, "expected": self.expected,
                  "defect": self.defect})
        return d


def gauss_bonnet_check(complex_, metric, degree=DEFAULT_DEGREE):
    """Compare the phi = 1 pairing against 2 pi chi."""
    _require_2d(complex_, "gauss_bonnet_check")
    report = pair_gauss(complex_, metric, "1", degree=degree)
    chi = euler_characteristic(complex_)
    expected = 2 * np.pi * chi
    defect = abs(report.total - expected)
    log.info("gauss-bonnet: total=%.15g expected=%.15g defect=%.3e",
             report.total, expected, defect)
    return GaussBonnetResult(report=report, chi=chi, expected=expected,
                             defect=defect)
