import itertools

import numpy as np
import pytest

from ncderham.quadrature import (
    EDGE,
    TET,
    TRIANGLE,
    QuadratureCapabilityError,
    barycentric_monomial_mean,
    get_rule,
)


def _monomials(nbary, degree):
    for alpha in itertools.product(range(degree + 1), repeat=nbary):
        if sum(alpha) <= degree:
            yield alpha


@pytest.mark.parametrize("kind,nbary,maxdeg", [(EDGE, 2, 9), (TRIANGLE, 3, 10), (TET, 4, 12)])
def test_monomial_exactness_exhaustive(kind, nbary, maxdeg):
    for degree in range(maxdeg + 1):
        rule = get_rule(kind, degree)
        assert rule.degree >= degree
        assert abs(rule.weights.sum() - 1.0) < 1e-14
        for alpha in _monomials(nbary, degree):
            approx = rule.weights @ np.prod(rule.points ** np.array(alpha), axis=1)
            exact = barycentric_monomial_mean(alpha)
            assert abs(approx - exact) <= 1e-12 * max(abs(exact), 1e-30), (
                kind,
                degree,
                alpha,
            )


def test_tet_degree2_example():
    # mean of lambda0*lambda1 is 1/20, i.e. integral is |T|/20
    rule = get_rule(TET, 2)
    val = rule.weights @ (rule.points[:, 0] * rule.points[:, 1])
    assert abs(val - 1.0 / 20.0) < 1e-14


def test_triangle_degree4_example():
    # mean of lambda0^4 is 1/15
    rule = get_rule(TRIANGLE, 4)
    val = rule.weights @ rule.points[:, 0] ** 4
    assert abs(val - 1.0 / 15.0) < 1e-14


def test_edge_three_point_gauss_degree5():
    rule = get_rule(EDGE, 5)
    assert rule.npoints == 3
    for k in range(6):
        val = rule.weights @ rule.points[:, 1] ** k
        assert abs(val - 1.0 / (k + 1)) < 1e-14


def test_rules_are_deterministic_and_capability_errors():
    r1 = get_rule(TET, 8)
    r2 = get_rule(TET, 8)
    assert r1 is r2
    with pytest.raises(QuadratureCapabilityError, match="12"):
        get_rule(TET, 13)
    with pytest.raises(QuadratureCapabilityError, match="10"):
        get_rule(TRIANGLE, 11)
