"""Quadrature rules on reference simplices and boxes.

Simplex rules use the collapsed (Duffy) construction: a Gauss-Legendre
factor for the first coordinate and Gauss-Jacobi factors absorbing the
collapse Jacobian for the remaining ones,

    triangle:     x = s(1-t),            y = t,        J = (1-t)
    tetrahedron:  x = s(1-t)(1-u), y = t(1-u), z = u,  J = (1-t)(1-u)^2

so an m-point factor per direction integrates total degree 2m-1 exactly.
Box rules are plain tensor Gauss-Legendre.  All rules live on the unit
reference polytopes ([0,1]^k boxes, unit right simplices).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi

from .errors import DegreeUnavailable

MAX_DEGREE = 60


@dataclass(frozen=True)
class QuadratureRule:
    """Points/weights on a reference polytope, exact to ``degree``."""

    dim: int
    degree: int
    cell_type: str          # 'simplex' or 'box'
    points: np.ndarray      # (npts, dim)
    weights: np.ndarray     # (npts,)

    @property
    def npoints(self):
        return self.points.shape[0]

    def integrate(self, values):
        """Weighted sum of sampled integrand values (shape (npts, ...))."""
        values = np.asarray(values)
        return np.tensordot(self.weights, values, axes=(0, 0))


def reference_volume(dim, cell_type):
    if cell_type == "box":
        return 1.0
    return 1.0 / math.factorial(dim)


def _gauss_legendre_01(m):
    t, w = np.polynomial.legendre.leggauss(m)
    return (t + 1.0) / 2.0, w / 2.0


def _gauss_jacobi_01(m, alpha):
    # nodes/weights for  int_0^1 (1-x)^alpha p(x) dx
    t, w = roots_jacobi(m, alpha, 0.0)
    return (t + 1.0) / 2.0, w / 2.0 ** (alpha + 1)


@functools.lru_cache(maxsize=None)
def quadrature_rule(dim, degree, cell_type="simplex"):
    """Rule exact for polynomials of total degree <= ``degree``.

    Raises :class:`DegreeUnavailable` above the implemented maximum
    (well past the guaranteed floor of 20).
    """
    if degree < 0:
        raise ValueError("quadrature degree must be >= 0, got %d" % degree)
    if degree > MAX_DEGREE:
        raise DegreeUnavailable(
            "no rule of exactness degree %d (maximum %d)" % (degree, MAX_DEGREE))
    if dim == 0:
        return QuadratureRule(0, degree, cell_type,
                              np.zeros((1, 0)), np.ones(1))
    m = (degree + 2) // 2          # ceil((degree+1)/2)
    xg, wg = _gauss_legendre_01(m)

    if cell_type == "box" or dim == 1:
        grids = np.meshgrid(*([xg] * dim), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        wts = functools.reduce(np.multiply.outer, [wg] * dim).ravel()
        return QuadratureRule(dim, degree, cell_type, pts, wts)

    if cell_type != "simplex":
        raise ValueError("unknown cell type %r" % cell_type)

    if dim == 2:
        xj, wj = _gauss_jacobi_01(m, 1.0)
        s, t = np.meshgrid(xg, xj, indexing="ij")
        pts = np.stack([(s * (1.0 - t)).ravel(), t.ravel()], axis=1)
        wts = np.multiply.outer(wg, wj).ravel()
        return QuadratureRule(2, degree, "simplex", pts, wts)

    if dim == 3:
        xj1, wj1 = _gauss_jacobi_01(m, 1.0)
        xj2, wj2 = _gauss_jacobi_01(m, 2.0)
        s, t, u = np.meshgrid(xg, xj1, xj2, indexing="ij")
        x = s * (1.0 - t) * (1.0 - u)
        y = t * (1.0 - u)
        pts = np.stack([x.ravel(), y.ravel(), u.ravel()], axis=1)
        wts = functools.reduce(np.multiply.outer, [wg, wj1, wj2]).ravel()
        return QuadratureRule(3, degree, "simplex", pts, wts)

    raise DegreeUnavailable("no simplex rules beyond dimension 3")
