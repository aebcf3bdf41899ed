"""Quadrature rules on edges, triangles and tetrahedra in barycentric form.

Rules are stored normalized: points are barycentric coordinates on the
reference entity and weights sum to one, so a physical integral is
``measure * sum(w_k * f(x_k))``.  Construction uses conical (collapsed
Gauss-Jacobi) products, which are deterministic and exact for all
polynomials up to the advertised degree.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from scipy.special import roots_jacobi

EDGE = "edge"
TRIANGLE = "triangle"
TET = "tet"

MAX_DEGREE = {TRIANGLE: 10, TET: 12}


class QuadratureCapabilityError(ValueError):
    """Requested degree exceeds what the rule factory supports."""


@dataclass(frozen=True)
class QuadratureRule:
    kind: str
    points: np.ndarray  # (nq, nbary) barycentric coordinates
    weights: np.ndarray  # (nq,), sum to 1
    degree: int

    @property
    def npoints(self):
        return self.points.shape[0]


def _gauss_jacobi_01(m, alpha):
    """Nodes/weights on [0,1] for weight (1-u)**alpha."""
    if alpha == 0:
        x, w = np.polynomial.legendre.leggauss(m)
    else:
        x, w = roots_jacobi(m, alpha, 0.0)
    u = 0.5 * (x + 1.0)
    w = w / 2.0 ** (alpha + 1)
    return u, w


def _edge_rule(degree):
    m = max(1, (degree + 2) // 2)
    u, w = _gauss_jacobi_01(m, 0)
    pts = np.column_stack([1.0 - u, u])
    return pts, w / w.sum(), 2 * m - 1


def _triangle_rule(degree):
    m = max(1, (degree + 2) // 2)
    u1, w1 = _gauss_jacobi_01(m, 1)
    u2, w2 = _gauss_jacobi_01(m, 0)
    # lam1 = u1, lam2 = u2*(1-u1), lam0 the remainder
    l1 = np.repeat(u1, m)
    l2 = np.tile(u2, m) * (1.0 - l1)
    l0 = 1.0 - l1 - l2
    w = np.repeat(w1, m) * np.tile(w2, m)
    pts = np.column_stack([l0, l1, l2])
    return pts, w / w.sum(), 2 * m - 1


def _tet_rule(degree):
    m = max(1, (degree + 2) // 2)
    u1, w1 = _gauss_jacobi_01(m, 2)
    u2, w2 = _gauss_jacobi_01(m, 1)
    u3, w3 = _gauss_jacobi_01(m, 0)
    l1 = np.repeat(u1, m * m)
    l2 = np.tile(np.repeat(u2, m), m) * (1.0 - l1)
    l3 = np.tile(u3, m * m) * (1.0 - l1 - l2)
    l0 = 1.0 - l1 - l2 - l3
    w = np.repeat(w1, m * m) * np.tile(np.repeat(w2, m), m) * np.tile(w3, m * m)
    pts = np.column_stack([l0, l1, l2, l3])
    return pts, w / w.sum(), 2 * m - 1


@lru_cache(maxsize=None)
def get_rule(kind, degree):
    """Return a QuadratureRule of exactness >= ``degree`` on the entity kind."""
    if degree < 0:
        raise QuadratureCapabilityError(f"degree must be nonnegative, got {degree}")
    if kind == EDGE:
        pts, w, deg = _edge_rule(degree)
    elif kind == TRIANGLE:
        if degree > MAX_DEGREE[TRIANGLE]:
            raise QuadratureCapabilityError(
                f"triangle rules support degree <= {MAX_DEGREE[TRIANGLE]}, got {degree}"
            )
        pts, w, deg = _triangle_rule(degree)
    elif kind == TET:
        if degree > MAX_DEGREE[TET]:
            raise QuadratureCapabilityError(
                f"tet rules support degree <= {MAX_DEGREE[TET]}, got {degree}"
            )
        pts, w, deg = _tet_rule(degree)
    else:
        raise QuadratureCapabilityError(f"unknown entity kind {kind!r}")
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(kind, pts, w, deg)


def barycentric_monomial_mean(alpha):
    """Exact mean value of prod(lambda_i**alpha_i) over the entity.

    Uses the closed form  d! * prod(alpha_i!) / (|alpha| + d)!  for a
    d-simplex, where the number of barycentric coordinates is d + 1.
    """
    alpha = tuple(int(a) for a in alpha)
    d = len(alpha) - 1
    num = factorial(d)
    for a in alpha:
        num *= factorial(a)
    return num / factorial(sum(alpha) + d)
