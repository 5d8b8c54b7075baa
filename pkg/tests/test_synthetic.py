import itertools
import math

import numpy as np
import pytest

from relu_gpc.errors import DomainError
from relu_gpc.multiindex import MultiIndex, RhoRule, WeightSequence, build_index_set
from relu_gpc.orthopoly import gauss_rule, hermite_coeffs, tensor_rule, HERMITE
from relu_gpc.sweeps import HermiteSyntheticSweep, TaylorAffineSweep
from relu_gpc.synthetic import power_law_expansion, product_power_sum, telescoping_expansion

W = WeightSequence("taylor", RhoRule("power", 3.0, 1.0), 1.0)


def test_telescoping_error_is_next_weight_inverse():
    truth = telescoping_expansion(W, 200.0, None)
    levels = sorted(set(np.round(truth.log_sigma, 12)))
    sig = np.exp(levels)
    for xi in (3.5, 10.0, 47.0, 150.0):
        nxt = sig[sig > xi * (1 + 1e-12)][0]
        assert truth.truncation_error(xi) == pytest.approx(1 / nxt, rel=1e-10)


def test_telescoping_shells_share_equally():
    truth = telescoping_expansion(W, 60.0, None)
    by_level = {}
    for ls, v in zip(np.round(truth.log_sigma, 12), truth.values):
        by_level.setdefault(ls, set()).add(round(float(v), 14))
    assert all(len(vals) == 1 for vals in by_level.values())


def test_power_law_parseval_and_signs():
    w2 = WeightSequence("taylor", RhoRule.parse("list:2,3"), 1.0)
    truth = power_law_expansion(w2, 30.0, hermite_coeffs(6), eps=0.5, signs=3)
    assert np.allclose(np.abs(truth.values), np.exp(-1.5 * truth.log_sigma))
    assert np.any(truth.values < 0)
    nodes, weights = tensor_rule(gauss_rule(HERMITE, 8), truth.dim)
    assert weights @ truth(nodes) ** 2 == pytest.approx(float(np.sum(truth.values**2)), rel=1e-10)
    assert truth.truncation_error(1.5) == pytest.approx(math.sqrt(np.sum(truth.values[1:] ** 2)))


def test_weighted_norm_of_power_law():
    truth = power_law_expansion(W, 100.0, None, eps=0.5)
    assert truth.weighted_norm() == pytest.approx(math.sqrt(np.sum(np.exp(-truth.log_sigma))))


def test_product_power_sum_against_enumeration():
    w = WeightSequence("taylor", RhoRule.parse("list:2,3,5"), 1.0)
    brute = sum(2.0 ** (-a * 1.5) * 3.0 ** (-b * 1.5) * 5.0 ** (-c * 1.5)
                for a, b, c in itertools.product(range(80), repeat=3))
    assert product_power_sum(w, 1.5) == pytest.approx(brute, rel=1e-12)
    with pytest.raises(DomainError):
        product_power_sum(W, 1.0)


def test_coefficients_outside_reference_are_refused():
    truth = telescoping_expansion(W, 10.0, None)
    with pytest.raises(DomainError):
        truth.coeffs_on(build_index_set(W, 40.0))
    got = truth.coeffs_on(build_index_set(W, 5.0))
    assert MultiIndex() in got


def test_hermite_sweep_point_is_consistent():
    sweep = HermiteSyntheticSweep(q=1.0, rho_scale=8.0, rho_rate=1.5, xi_ref=100.0, samples=20_000)
    row = sweep(64, 30.0)
    assert row["error"] == pytest.approx(row["exact_truncation"], rel=0.05)
    assert row["net_outside_cube"] == 0.0
    with pytest.raises(ValueError):
        sweep(64, 200.0)


def test_taylor_sweep_point_is_below_delta_scale():
    sweep = TaylorAffineSweep(grid=101)
    row = sweep(64, 8.0)
    assert row["error"] > 0 and row["W"] > 0
    assert row["m"] == 1
