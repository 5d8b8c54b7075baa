import math

import mpmath
import numpy as np
import pytest

from relu_gpc.errors import DomainError
from relu_gpc.multiindex import MultiIndex
from relu_gpc.orthopoly import (HERMITE, JACOBI, coeff_sum_bound, eval_multi, gauss_rule, hermite_coeffs,
                                jacobi_coeffs, tensor_rule)


def hermite_oracle(k, y):
    # probabilists' Hermite via the physicists' polynomial in mpmath, then normalized
    mpmath.mp.dps = 40
    val = mpmath.hermite(k, mpmath.mpf(y) / mpmath.sqrt(2)) * mpmath.power(2, -mpmath.mpf(k) / 2)
    return float(val / mpmath.sqrt(mpmath.factorial(k)))


def test_hermite_low_rows():
    fam = hermite_coeffs(4)
    assert fam.row(0).tolist() == [1.0]
    assert fam.row(1).tolist() == [0.0, 1.0]
    assert fam.row(2) == pytest.approx([-1 / math.sqrt(2), 0.0, 1 / math.sqrt(2)], rel=1e-15)


def test_hermite_rows_match_closed_form():
    fam = hermite_coeffs(30)
    for s in range(31):
        want = np.zeros(s + 1)
        for ell in range(s // 2 + 1):
            want[s - 2 * ell] = (math.sqrt(math.factorial(s)) * (-1) ** ell
                                 / (math.factorial(ell) * math.factorial(s - 2 * ell) * 2**ell))
        assert np.allclose(fam.row(s), want, rtol=1e-13, atol=0)


def test_hermite_against_mpmath():
    fam = hermite_coeffs(20)
    for k in (0, 1, 5, 12, 20):
        for y in (-3.3, -0.7, 0.0, 1.9, 5.5):
            assert float(fam.eval_recurrence(k, y)) == pytest.approx(hermite_oracle(k, y), rel=1e-11, abs=1e-12)


def test_jacobi_legendre_rows():
    fam = jacobi_coeffs(0.0, 0.0, 3)
    assert fam.row(0) == pytest.approx([1.0])
    assert fam.row(1) == pytest.approx([0.0, math.sqrt(3)], rel=1e-14)
    # sqrt(5) * (3 y^2 - 1) / 2
    assert fam.row(2) == pytest.approx([-math.sqrt(5) / 2, 0.0, 1.5 * math.sqrt(5)], rel=1e-13)


@pytest.mark.parametrize("kind,ab", [(HERMITE, (0, 0)), (JACOBI, (0.0, 0.0)), (JACOBI, (1.0, 0.5)),
                                     (JACOBI, (-0.5, -0.5))])
def test_orthonormality_to_degree_twenty(kind, ab):
    fam = hermite_coeffs(20) if kind == HERMITE else jacobi_coeffs(*ab, 20)
    rule = gauss_rule(fam, 40)
    vals = fam.eval_all(rule.nodes, 20)
    gram = (vals * rule.weights) @ vals.T
    assert np.max(np.abs(gram - np.eye(21))) <= 1e-8


@pytest.mark.parametrize("kind,ab", [(HERMITE, (0, 0)), (JACOBI, (0.0, 0.0)), (JACOBI, (2.0, 1.0))])
def test_table_agrees_with_recurrence(kind, ab):
    fam = hermite_coeffs(30) if kind == HERMITE else jacobi_coeffs(*ab, 30)
    y = np.linspace(-6, 6, 61) if kind == HERMITE else np.linspace(-1, 1, 61)
    # relative to the monomial-sum magnitude, which bounds the rounding of any table evaluation
    for s in range(31):
        table, rec = fam.eval_table(s, y), fam.eval_recurrence(s, y)
        magnitude = np.abs(np.polynomial.polynomial.polyval(np.abs(y), np.abs(fam.row(s))))
        assert np.all(np.abs(table - rec) <= 1e-10 * magnitude)


def test_hermite_row_sum_bound_for_all_degrees():
    fam = hermite_coeffs(30)
    for s in range(31):
        res = coeff_sum_bound(fam, s)
        assert res.total <= res.bound * (1 + 1e-14)
    assert coeff_sum_bound(fam, 2).total == pytest.approx(math.sqrt(2), rel=1e-15)
    assert coeff_sum_bound(fam, 0).total == 1.0
    assert coeff_sum_bound(fam, 10).total <= math.sqrt(math.factorial(10))


def test_legendre_row_sums_scaled_by_six_are_bounded():
    fam = jacobi_coeffs(0.0, 0.0, 25)
    scaled = [coeff_sum_bound(fam, s).total / 6.0**s for s in range(26)]
    assert max(scaled) < 2.0
    assert all(coeff_sum_bound(fam, s).total <= coeff_sum_bound(fam, s).bound * (1 + 1e-12) for s in range(26))


def test_eval_multi_values():
    fam = hermite_coeffs(3)
    assert eval_multi(fam, MultiIndex(), np.array([0.3, 0.1])) == 1.0
    assert eval_multi(fam, MultiIndex({1: 1}), np.array([2.0, 5.0])) == pytest.approx(2.0)
    assert eval_multi(fam, MultiIndex({1: 2, 2: 1}), np.array([1.0, 3.0])) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(DomainError):
        eval_multi(fam, MultiIndex({3: 1}), np.array([1.0, 3.0]))


def test_gauss_hermite_small_rules():
    one = gauss_rule(HERMITE, 1)
    assert one.nodes.tolist() == pytest.approx([0.0], abs=1e-15) and one.weights.tolist() == [1.0]
    two = gauss_rule(HERMITE, 2)
    assert sorted(two.nodes.tolist()) == pytest.approx([-1.0, 1.0], rel=1e-14)
    assert two.weights.tolist() == pytest.approx([0.5, 0.5], rel=1e-14)
    three = gauss_rule(HERMITE, 3)
    assert three.weights @ three.nodes**4 == pytest.approx(3.0, rel=1e-13)


def test_gauss_rules_against_numpy():
    nodes, weights = np.polynomial.hermite_e.hermegauss(15)
    rule = gauss_rule(HERMITE, 15)
    assert np.allclose(np.sort(rule.nodes), nodes, atol=1e-12)
    assert np.allclose(rule.weights[np.argsort(rule.nodes)], weights / weights.sum(), atol=1e-14)
    x, w = np.polynomial.legendre.leggauss(12)
    rule = gauss_rule(JACOBI, 12)
    assert np.allclose(np.sort(rule.nodes), x, atol=1e-13)


def test_gauss_rule_polynomial_exactness():
    rule = gauss_rule(HERMITE, 6)
    for p in range(12):
        moment = 0 if p % 2 else math.prod(range(p - 1, 0, -2))
        assert rule.weights @ rule.nodes**p == pytest.approx(moment, rel=1e-10, abs=1e-10)


def test_tensor_rule_shape_and_mass():
    nodes, weights = tensor_rule(gauss_rule(HERMITE, 4), 3)
    assert nodes.shape == (64, 3)
    assert weights.sum() == pytest.approx(1.0, rel=1e-14)


def test_degree_limit():
    with pytest.raises(DomainError):
        hermite_coeffs(3).row(4)


def jacobi_monomials_oracle(n, a, b):
    # P_n^{(a,b)} = sum_m C(n+a, n-m) C(n+b, m) ((x-1)/2)^m ((x+1)/2)^(n-m), expanded in 40 digits
    mpmath.mp.dps = 40
    a, b = mpmath.mpf(a), mpmath.mpf(b)

    def mul(p, q):
        out = [mpmath.mpf(0)] * (len(p) + len(q) - 1)
        for i, x in enumerate(p):
            for j, y in enumerate(q):
                out[i + j] += x * y
        return out

    total = [mpmath.mpf(0)] * (n + 1)
    for m in range(n + 1):
        term = [mpmath.binomial(n + a, n - m) * mpmath.binomial(n + b, m)]
        for _ in range(m):
            term = mul(term, [mpmath.mpf(-0.5), mpmath.mpf(0.5)])
        for _ in range(n - m):
            term = mul(term, [mpmath.mpf(0.5), mpmath.mpf(0.5)])
        total = [x + y for x, y in zip(total, term)]
    # probability-normalized squared norm of the classical polynomial
    sq = (2 ** (a + b + 1) / (2 * n + a + b + 1) * mpmath.gamma(n + a + 1) * mpmath.gamma(n + b + 1)
          / (mpmath.gamma(n + a + b + 1) * mpmath.factorial(n)))
    mass = 2 ** (a + b + 1) * mpmath.beta(a + 1, b + 1)
    return [float(c / mpmath.sqrt(sq / mass)) for c in total]


@pytest.mark.parametrize("ab", [(0.0, 0.0), (1.0, 0.5), (2.0, 3.0)])
def test_jacobi_rows_against_expanded_hypergeometric_sum(ab):
    fam = jacobi_coeffs(*ab, 15)
    for n in (1, 2, 5, 9, 15):
        want = np.array(jacobi_monomials_oracle(n, *ab))
        assert np.allclose(fam.row(n), want, rtol=1e-10, atol=1e-12 * np.max(np.abs(want)))
