import logging
import math

import mpmath
import numpy as np
import pytest

from relu_gpc.assembler import (TAYLOR, DeltaPolicy, _MonomialCache, assemble, basis_matrix, build_index_net,
                                delta_s, error_budget, index_terms, log_delta_raw, make_plan, predicted_size,
                                truncate)
from relu_gpc.errors import BudgetError, ConstructionError, DomainError
from relu_gpc.gadgets import PHI0, build_cutoff
from relu_gpc.multiindex import IndexSet, MultiIndex, RhoRule, WeightSequence, build_index_set
from relu_gpc.orthopoly import HERMITE, JACOBI, gauss_rule, hermite_coeffs, tensor_rule


def taylor_weights(q=1.0, rule="list:4,6"):
    return WeightSequence("taylor", RhoRule.parse(rule), q)


def hermite_plan(xi=30.0, omega=16, policy=None, rule="list:4,6", q=1.0):
    iset = build_index_set(taylor_weights(q, rule), xi)
    return make_plan(iset, HERMITE, omega=omega, delta_policy=policy or DeltaPolicy("floor", 1e-6))


def test_delta_policy_parse_and_apply():
    assert DeltaPolicy.parse("paper") == DeltaPolicy("paper")
    assert DeltaPolicy.parse("floor:1e-4") == DeltaPolicy("floor", 1e-4)
    assert DeltaPolicy("floor", 1e-4).apply(math.log(1e-8)) == 1e-4
    assert DeltaPolicy("floor", 1e-4).apply(math.log(1e-2)) == pytest.approx(1e-2)
    with pytest.raises(ConstructionError):
        DeltaPolicy.parse("tight")


def test_raw_policy_clamps_with_warning(caplog):
    with caplog.at_level(logging.WARNING):
        assert DeltaPolicy("paper").apply(-900.0) == 1e-300
    assert "clamped" in caplog.text


def test_delta_zero_index_hermite():
    plan = hermite_plan()
    xi, q = plan.index_set.xi, plan.index_set.q
    assert log_delta_raw(plan, MultiIndex()) == pytest.approx(-(1 / q + 0.5) * math.log(xi), rel=1e-14)


def test_delta_against_high_precision():
    iset = IndexSet(10.0, 2.0, (MultiIndex(), MultiIndex({1: 1}), MultiIndex({1: 2})), np.ones(3))
    plan = make_plan(iset, HERMITE, omega=20, theta=2.0, delta_policy=DeltaPolicy("paper"))
    mpmath.mp.dps = 50
    inv = (mpmath.mpf(10) ** (mpmath.mpf(1) / 2 + mpmath.mpf(1) / 2) * 3 * (2 * mpmath.sqrt(20)) ** 2
           / mpmath.sqrt(2))
    want = float(-mpmath.log(inv))
    assert log_delta_raw(plan, MultiIndex({1: 2})) == pytest.approx(want, rel=1e-14)


def test_delta_non_increasing_in_degree():
    plan = hermite_plan(policy=DeltaPolicy("paper"))
    vals = [log_delta_raw(plan, MultiIndex({1: k})) for k in range(plan.index_set.m1 + 1)]
    assert len(vals) >= 3
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_jacobi_and_taylor_delta_forms():
    iset = build_index_set(WeightSequence("jacobi", RhoRule("power", 3.0, 2.0), 1.0), 20.0)
    plan = make_plan(iset, JACOBI, delta_policy=DeltaPolicy("paper"))
    s = MultiIndex({1: 1})
    assert log_delta_raw(plan, s) == pytest.approx(-(math.log(20.0) + math.log(2) + 0.5 * math.log(3)))
    tplan = make_plan(build_index_set(taylor_weights(), 20.0), TAYLOR)
    assert log_delta_raw(tplan, s) == pytest.approx(-0.5 * math.log(20.0))


def test_make_plan_guards():
    iset = build_index_set(taylor_weights(), 30.0)
    with pytest.raises(ConstructionError, match="theta"):
        make_plan(iset, HERMITE, omega=16, theta=3.0)
    with pytest.raises(ConstructionError, match="omega"):
        make_plan(iset, HERMITE, omega=1)
    with pytest.raises(ConstructionError):
        make_plan(iset, "chebyshev")
    with pytest.raises(ConstructionError):
        make_plan(build_index_set(taylor_weights(q=2.0), 30.0), TAYLOR)


def test_omega_from_tail_constant():
    w = taylor_weights()
    iset = build_index_set(w, 30.0)
    plan = make_plan(iset, HERMITE, weights=w)
    assert plan.theta == 4.0
    assert plan.omega == math.floor(plan.kq_theta * 30.0)
    assert plan.support_radius == pytest.approx(4 * math.sqrt(plan.omega))


def test_index_terms_hermite_two():
    plan = hermite_plan()
    terms = dict(index_terms(plan, MultiIndex({1: 2})))
    r = plan.scale
    assert set(terms) == {MultiIndex(), MultiIndex({1: 2})}
    assert terms[MultiIndex()] == pytest.approx(-1 / math.sqrt(2))
    assert terms[MultiIndex({1: 2})] == pytest.approx(r**2 / math.sqrt(2))


def test_zero_index_net_is_plateau():
    plan = hermite_plan()
    net = build_index_net(plan, MultiIndex())
    r = plan.scale
    y = np.column_stack([np.linspace(-r, r, 201), np.zeros(201)])
    assert np.all(net(y)[:, 0] == 1.0)
    far = np.column_stack([np.linspace(2 * r, 5 * r, 50), np.zeros(50)])
    assert np.all(net(far)[:, 0] == 0.0)


@pytest.mark.parametrize("s", [MultiIndex({1: 1}), MultiIndex({1: 2}), MultiIndex({1: 1, 2: 1}),
                               MultiIndex({1: 3}), MultiIndex({1: 2, 2: 1}), MultiIndex({2: 1})])
def test_index_net_within_budget_on_cube(s):
    plan = hermite_plan(xi=200.0, omega=16, policy=DeltaPolicy("floor", 1e-4))
    if s not in plan.index_set:
        pytest.skip("index outside the set")
    net = build_index_net(plan, s)
    r = plan.scale
    rng = np.random.default_rng(0)
    y = rng.uniform(-r, r, size=(20_000, 2))
    exact = basis_matrix(hermite_coeffs(4), [s], y)[:, 0]
    err = np.max(np.abs(net(y)[:, 0] - exact))
    assert err <= error_budget(plan, s) + 1e-12 * max(1.0, np.max(np.abs(exact)))


def test_taylor_mode_product_accuracy():
    iset = build_index_set(taylor_weights(rule="list:2,2"), 4.0)
    plan = make_plan(iset, TAYLOR)
    s = MultiIndex({1: 1, 2: 1})
    net = build_index_net(plan, s)
    rng = np.random.default_rng(1)
    y = rng.uniform(-1, 1, size=(50_000, 2))
    assert np.max(np.abs(net(y)[:, 0] - y[:, 0] * y[:, 1])) <= delta_s(plan, s)


def test_cardinality_one_surrogate():
    iset = build_index_set(taylor_weights(), 2.0)
    plan = make_plan(iset, HERMITE, omega=4)
    sur = assemble(plan, {MultiIndex(): 2.5})
    assert sur.manifest["W"] == build_cutoff(PHI0).net.size
    assert sur(np.zeros(1)) == pytest.approx([2.5])


def test_surrogate_matches_truncation_and_manifest():
    plan = hermite_plan(xi=60.0, omega=16, policy=DeltaPolicy("floor", 1e-8))
    rng = np.random.default_rng(2)
    coeffs = {s: rng.normal(size=3) for s in plan.index_set}
    sur = assemble(plan, coeffs)
    y = rng.uniform(-plan.scale, plan.scale, size=(5000, plan.input_dim))
    exact = truncate(coeffs, y, hermite_coeffs(plan.index_set.m1))
    bound = sum(np.abs(v) * error_budget(plan, s) for s, v in coeffs.items())
    assert np.all(np.max(np.abs(sur(y) - exact), axis=0) <= bound + 1e-12)
    man = sur.manifest
    for key in ("xi", "q", "theta", "omega", "m", "m1", "cardinality", "W", "L", "T", "deltaPolicy", "perIndex"):
        assert key in man
    assert man["W"] <= man["sumW"]
    assert man["L"] == max(p["L_s"] for p in man["perIndex"])
    assert sur.net.output_dim == plan.index_set.cardinality
    assert sur.net.input_dim == plan.index_set.m


def test_stacked_outputs_vanish_outside_support_box():
    plan = hermite_plan(xi=60.0, omega=16)
    sur = assemble(plan, {s: 1.0 for s in plan.index_set})
    t = plan.support_radius
    rng = np.random.default_rng(3)
    y = rng.choice([-1, 1], size=(10_000, 2)) * rng.uniform(t, 3 * t, size=(10_000, 2))
    assert np.all(sur.index_outputs(y) == 0.0)


def test_monomial_terms_vanish_when_an_active_coordinate_leaves():
    plan = hermite_plan(xi=60.0, omega=16)
    cache = _MonomialCache()
    t = plan.support_radius
    rng = np.random.default_rng(4)
    for s in plan.index_set:
        for ell, _ in index_terms(plan, s):
            net = cache.get(s, ell, 1 / plan.scale, 1e-6, plan.input_dim)
            active = ell.support() or (min(s.support(), default=1),)
            y = rng.uniform(-t, t, size=(500, plan.input_dim))
            y[:, active[0] - 1] = rng.choice([-1, 1], size=500) * rng.uniform(t, 2 * t, size=500)
            assert np.all(net(y)[:, 0] == 0.0)


def test_budget_guard_and_prediction():
    plan = hermite_plan(xi=60.0, omega=16)
    predicted = predicted_size(plan)
    sur = assemble(plan, {s: 1.0 for s in plan.index_set})
    assert sur.manifest["sumW"] <= predicted
    with pytest.raises(BudgetError):
        assemble(plan, {s: 1.0 for s in plan.index_set}, budget=predicted - 1)


def test_threads_do_not_change_the_result():
    plan = hermite_plan(xi=60.0, omega=16)
    coeffs = {s: float(i) for i, s in enumerate(plan.index_set)}
    a, b = assemble(plan, coeffs), assemble(plan, coeffs, threads=4)
    y = np.random.default_rng(5).normal(size=(100, plan.input_dim))
    assert np.array_equal(a(y), b(y))
    assert a.manifest["hash"] == b.manifest["hash"]


def test_missing_coefficients_warn(caplog):
    plan = hermite_plan(xi=60.0, omega=16)
    with caplog.at_level(logging.WARNING):
        sur = assemble(plan, {MultiIndex(): 1.0, MultiIndex({5: 1}): 3.0})
    assert "treated as zero" in caplog.text and "ignored" in caplog.text
    assert np.count_nonzero(sur.coeffs) == 1


def test_parseval_of_truncation():
    fam = hermite_coeffs(4)
    rng = np.random.default_rng(6)
    idx = [MultiIndex(), MultiIndex({1: 1}), MultiIndex({2: 2}), MultiIndex({1: 2, 2: 1})]
    coeffs = {s: rng.normal() for s in idx}
    nodes, weights = tensor_rule(gauss_rule(HERMITE, 10), 2)
    sq = weights @ truncate(coeffs, nodes, fam) ** 2
    assert sq == pytest.approx(sum(v * v for v in coeffs.values()), abs=1e-6)


def test_single_coefficient_truncation_is_constant():
    y = np.random.default_rng(7).normal(size=(10, 3))
    assert np.allclose(truncate({MultiIndex(): 4.0}, y, hermite_coeffs(1)), 4.0)


def test_index_net_rejects_foreign_index():
    with pytest.raises(DomainError):
        build_index_net(hermite_plan(), MultiIndex({7: 1}))
