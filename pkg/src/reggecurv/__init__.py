"""Distributional curvature of piecewise-smooth (Regge) metrics.

The package computes the curvature of metrics that are smooth inside
each cell of a polytopal mesh and tangentially continuous across faces:
element curvature integrals, second-fundamental-form jumps across
codimension-1 faces, and angle defects at codimension-2 hinges.  It
assembles these into a curvature measure paired against test fields,
specializes to the Gauss curvature / Gauss-Bonnet identity in two
dimensions, and provides orthonormal frame machinery (evolution ODE,
compatible-frame construction, frame-route functional) to cross-check
the frame-free assembly.
"""
from __future__ import annotations

from .errors import ReggeError
from .mesh import (MeshComplex, build_complex, euler_characteristic,
                   hinge_fan, induced_orientation, load_mesh, refine)
from .metric import (ExpressionMetric, MetricValues, PolynomialMetric,
                     check_positive_definite, check_tt_continuity,
                     interpolate, load_metric, parse_metric_expression,
                     save_metric)
from .elemgeom import (angle_defect, christoffels, dihedral_angle,
                       face_frame, hinge_frame, riemann,
                       second_fundamental_form)
from .functional import (ComponentTestField, CurvatureMeasure,
                         GaussTestField, assemble,
                         bruteforce_equivalence_check, cell_term, face_term,
                         hinge_term, load_test_field)
from .gauss2d import (GaussBonnetResult, GaussReport, gauss_bonnet_check,
                      gauss_curvature, geodesic_curvature, pair_gauss)
from .frames import (CompatibilityReport, Frame, FrameHomotopy,
                     build_compatible_frame, evolve_frame, evolved_frame,
                     face_extension_weights, frame_based_functional,
                     ldl_orthonormalize, linear_metric_path,
                     orthonormal_frame, verify_compatibility)

__all__ = [
    "ReggeError",
    "MeshComplex", "build_complex", "euler_characteristic", "hinge_fan",
    "induced_orientation", "load_mesh", "refine",
    "ExpressionMetric", "MetricValues", "PolynomialMetric",
    "check_positive_definite", "check_tt_continuity", "interpolate",
    "load_metric", "parse_metric_expression", "save_metric",
    "angle_defect", "christoffels", "dihedral_angle", "face_frame",
    "hinge_frame", "riemann", "second_fundamental_form",
    "ComponentTestField", "CurvatureMeasure", "GaussTestField", "assemble",
    "bruteforce_equivalence_check", "cell_term", "face_term", "hinge_term",
    "load_test_field",
    "GaussBonnetResult", "GaussReport", "gauss_bonnet_check",
    "gauss_curvature", "geodesic_curvature", "pair_gauss",
    "CompatibilityReport", "Frame", "FrameHomotopy",
    "build_compatible_frame", "evolve_frame", "evolved_frame",
    "face_extension_weights", "frame_based_functional",
    "ldl_orthonormalize", "linear_metric_path", "orthonormal_frame",
    "verify_compatibility",
]

__version__ = "0.1.0"
