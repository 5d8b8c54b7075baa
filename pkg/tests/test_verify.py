import csv
import math

import mpmath
import numpy as np
import pytest
from scipy.special import erfc

from relu_gpc.assembler import DeltaPolicy, assemble, basis_matrix, error_budget, make_plan
from relu_gpc.errors import DomainError
from relu_gpc.multiindex import MultiIndex, RhoRule, WeightSequence, build_index_set
from relu_gpc.orthopoly import HERMITE, hermite_coeffs
from relu_gpc.synthetic import telescoping_expansion
from relu_gpc.verify import (GAUSSIAN, JACOBI_NORM, SUP, MonteCarlo, Quadrature, error_split, l2_error,
                             linear_fit, loglog_fit, rate_sweep, tail_norm, xi_for_budget)

H = hermite_coeffs(6)


def herm(k, j=0):
    return lambda y: H.eval_recurrence(k, y[:, j])


def tail_oracle(k, radius):
    mpmath.mp.dps = 30
    r = mpmath.mpf(radius)

    def f(y):
        return mpmath.hermite(k, y / mpmath.sqrt(2)) ** 2 / (2**k * mpmath.factorial(k)) * mpmath.npdf(y)

    return float(2 * mpmath.quad(f, [r, r + 10, mpmath.inf]))


@pytest.mark.parametrize("n,want", [(256, 62.02), (8192, 1160.85)])
def test_xi_for_budget_values(n, want):
    xi = xi_for_budget(n)
    assert xi == pytest.approx(want, abs=0.01)
    mpmath.mp.dps = 30
    assert xi == pytest.approx(float(mpmath.findroot(lambda x: x * mpmath.log(x) - n, want)), rel=1e-12)


def test_xi_for_budget_rejects_nonpositive():
    with pytest.raises(DomainError):
        xi_for_budget(0)


@pytest.mark.parametrize("k,omega", [(0, 4.0), (1, 4.0), (3, 6.0), (4, 9.0)])
def test_one_dimensional_tail_against_quadrature(k, omega):
    want = math.sqrt(tail_oracle(k, 2 * math.sqrt(omega)))
    assert tail_norm(MultiIndex({1: k}) if k else MultiIndex(), omega, 1) == pytest.approx(want, rel=1e-8)


def test_constant_tail_is_gaussian_mass():
    for m in (1, 2, 5):
        omega = 10.0
        t = erfc(math.sqrt(2 * omega))
        assert tail_norm(MultiIndex(), omega, m) == pytest.approx(math.sqrt(1 - (1 - t) ** m), rel=1e-10)
        assert tail_norm(MultiIndex(), omega, m) <= math.sqrt(m * t) * (1 + 1e-12)


def test_tail_is_monotone_and_decays_exponentially():
    s = MultiIndex({1: 4})
    omegas = np.arange(4, 41, 2)
    logs = [math.log(tail_norm(s, float(w))) for w in omegas]
    assert all(b < a for a, b in zip(logs, logs[1:]))
    assert linear_fit(omegas, logs).slope < 0


def test_tail_rejects_degree_above_omega():
    with pytest.raises(DomainError):
        tail_norm(MultiIndex({1: 5}), 4.0)
    with pytest.raises(DomainError):
        tail_norm(MultiIndex({3: 1}), 8.0, 2)


def test_l2_error_identical_functions():
    f = herm(2)
    assert l2_error(f, f, 1, Quadrature(10)).value == 0.0
    assert l2_error(f, f, 1, MonteCarlo(1000)).value <= 1e-14


def test_l2_error_orthonormality_and_parseval():
    zero = lambda y: np.zeros(y.shape[0])  # noqa: E731
    assert l2_error(herm(2), zero, 1, Quadrature(10)).value == pytest.approx(1.0, abs=1e-10)
    both = lambda y: H.eval_recurrence(1, y[:, 0]) + H.eval_recurrence(2, y[:, 1])  # noqa: E731
    assert l2_error(both, herm(1), 2, Quadrature(10)).value == pytest.approx(1.0, abs=1e-10)


def test_quadrature_limits_and_unknown_norm():
    f = herm(1)
    with pytest.raises(DomainError):
        l2_error(f, f, 7, Quadrature(2))
    with pytest.raises(DomainError):
        l2_error(f, f, 1, Quadrature(4), norm=SUP)
    with pytest.raises(DomainError):
        l2_error(f, f, 1, MonteCarlo(10), norm="energy")


def test_seeds_agree_within_stderr():
    f = lambda y: np.exp(0.3 * y[:, 0]) * np.cos(y[:, 1])  # noqa: E731
    zero = lambda y: np.zeros(y.shape[0])  # noqa: E731
    a = l2_error(f, zero, 2, MonteCarlo(50_000, seed=1))
    b = l2_error(f, zero, 2, MonteCarlo(50_000, seed=2))
    assert abs(a.value - b.value) <= 4 * math.hypot(a.stderr, b.stderr)
    q = l2_error(f, zero, 2, Quadrature(30))
    assert abs(a.value - q.value) <= 4 * a.stderr


def test_jacobi_norm_draws_inside_interval():
    f = lambda y: y[:, 0]  # noqa: E731
    zero = lambda y: np.zeros(y.shape[0])  # noqa: E731
    # uniform measure: E[y^2] = 1/3
    assert l2_error(f, zero, 1, Quadrature(6), norm=JACOBI_NORM).value == pytest.approx(math.sqrt(1 / 3))


def test_exact_law_recovers_slope():
    ns = [2**k for k in range(6, 14)]
    q = 1.0
    sweep = rate_sweep(lambda n, xi: {"error": (n / math.log(n)) ** (-1 / q)}, ns, -1 / q)
    assert sweep.slope == pytest.approx(-1 / q, abs=1e-6)
    assert sweep.within


def test_rate_sweep_rejects_short_or_unsorted_lists():
    with pytest.raises(DomainError):
        rate_sweep(lambda n, xi: {"error": 1.0}, [4, 8, 16], -1.0)
    with pytest.raises(DomainError):
        rate_sweep(lambda n, xi: {"error": 1.0}, [4, 16, 8, 32], -1.0)


def test_rate_csv_has_slope_column(tmp_path):
    sweep = rate_sweep(lambda n, xi: {"error": 1 / n, "W": n}, [16, 32, 64, 128], -1.0)
    path = tmp_path / "rate.csv"
    sweep.write_csv(path, "abc")
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config abc")
    rows = list(csv.DictReader(lines[1:]))
    assert len(rows) == 4 and all(float(r["slope"]) == pytest.approx(sweep.slope, abs=1e-6) for r in rows)


def test_loglog_fit_of_power():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    fit = loglog_fit(x, 3 * x**-1.5)
    assert fit.slope == pytest.approx(-1.5) and fit.r2 == pytest.approx(1.0)


@pytest.fixture(scope="module")
def synthetic_surrogate():
    w = WeightSequence("taylor", RhoRule("power", 3.0, 1.0), 1.0)
    truth = telescoping_expansion(w, 80.0, hermite_coeffs(8))
    iset = build_index_set(w, 20.0)
    plan = make_plan(iset, HERMITE, omega=16, delta_policy=DeltaPolicy("floor", 1e-10))
    return truth, assemble(plan, truth.coeffs_on(iset)), iset


def test_error_split_triangle_inequality(synthetic_surrogate):
    truth, sur, iset = synthetic_surrogate
    rep = error_split(sur, truth, MonteCarlo(100_000, seed=7), dim=truth.dim)
    assert rep.total <= sum(rep.split) + 4 * rep.stderr["total"]
    assert rep.truncation == pytest.approx(truth.truncation_error(20.0), abs=4 * rep.stderr["truncation"] + 1e-3)
    assert rep.net_on_cube <= sum(float(np.abs(c).max()) * error_budget(sur.plan, s)
                                   for s, c in zip(sur.indices, sur.coeffs))
    assert rep.norm == GAUSSIAN and rep.method["kind"] == "montecarlo"


def test_error_split_vanishing_truncation_when_supported_on_the_set(synthetic_surrogate):
    _, sur, _ = synthetic_surrogate
    rep = error_split(sur, lambda y: basis_matrix(sur.plan.family, sur.indices, y) @ sur.coeffs,
                      MonteCarlo(20_000, seed=3))
    assert rep.truncation == 0.0


def test_error_split_outside_component_is_zero_beyond_support(synthetic_surrogate):
    truth, sur, _ = synthetic_surrogate
    t = sur.plan.support_radius
    y = np.full((3, sur.plan.input_dim), 1.01 * t)
    assert np.all(sur.evaluate(y) == 0.0)
