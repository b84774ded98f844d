import math
from fractions import Fraction
from itertools import product

import mpmath as mp
import pytest

from satbound.analytic import clause_type_ideals
from satbound.optimize import (
    CONTINUITY, PRINTED_SOLUTION, BracketError, LagrangeVars, B_constant, bisect_threshold, critical_point,
    evaluate_psis, lagrange_hessian, lagrange_residual, log_B, log_B_unsimplified, log_L, log_max_F, max_F_value,
    multistart_solve, naive_threshold, solve_lagrange, upper_bound_rate,
)
from satbound.polytope import build_constraints, residuals
from satbound.structure import log_F

GAMMA = "4.4898"
# Regression constants, frozen after cross-checking two evaluation routes.
LOG_B = "-27.32655503961843036684476816009428343454"
GAMMA_STAR = "4.48979"


@pytest.fixture(scope="module")
def params():
    return clause_type_ideals(GAMMA, 23, 50)


@pytest.fixture(scope="module")
def root(params):
    return solve_lagrange(params)


@pytest.fixture(autouse=True)
def working_precision():
    with mp.workdps(50):
        yield


def test_lagrange_vars_must_be_positive():
    with pytest.raises(ValueError):
        LagrangeVars.from_sequence([1, 1, 0, 1, 1, 1])
    v = LagrangeVars.from_sequence([1, 2, 3, 4, 5, 6])
    assert [float(x) for x in v.as_list()] == [1, 2, 3, 4, 5, 6]
    assert set(v.to_dict()) == {"nu_ps", "nu_nsf", "nu_nsr", "mu_ps", "mu_nsf", "mu_nsr"}


def test_psis_at_all_ones(params):
    psis = evaluate_psis(LagrangeVars.from_sequence([1] * 6), params)
    assert all(abs(v - 2 ** j) < mp.mpf(10) ** -40 for (i, j), v in psis.psi_light.items())
    assert psis.psi == 2 and psis.psi_p == 2 and psis.psi_n == 3
    # Psi_k at ones: sum of 2/w! over clause types with k positive copies
    want = [Fraction(0)] * 4
    for ps, ns, pu, nu in product(range(4), repeat=4):
        if ps + ns + pu + nu == 3 and ps + ns > 0:
            want[ps + pu] += Fraction(2, math.factorial((ps, ns, pu, nu).count(0)))
    assert want[3] == Fraction(7, 3)
    for got, w in zip(psis.psi_clause, want):
        assert abs(got - mp.mpf(w.numerator) / w.denominator) < mp.mpf(10) ** -40


def test_printed_solution_nearly_solves(params):
    assert max(abs(r) for r in lagrange_residual(PRINTED_SOLUTION, params)) < 1e-6


def test_solver_from_ones_reaches_printed_root(params, root):
    for got, want in zip(root.as_list(), PRINTED_SOLUTION.as_list()):
        assert abs(got / want - 1) < 1e-6
    assert max(abs(r) for r in lagrange_residual(root, params)) < mp.mpf(10) ** -35


def test_residual_is_finite_difference_gradient(params, root):
    h = mp.mpf(10) ** -10
    base = root.as_list()
    res = lagrange_residual(root, params)
    for a in range(6):
        up = list(base)
        dn = list(base)
        up[a] *= mp.exp(h)
        dn[a] *= mp.exp(-h)
        fd = (log_L(LagrangeVars(*up), params) - log_L(LagrangeVars(*dn), params)) / (2 * h)
        assert abs(-fd - res[a]) < mp.mpf(10) ** -15


def test_hessian_is_jacobian_of_residual(params, root):
    h = mp.mpf(10) ** -12
    H = lagrange_hessian(root, params)
    base = root.as_list()
    for a in range(6):
        up, dn = list(base), list(base)
        up[a] *= mp.exp(h)
        dn[a] *= mp.exp(-h)
        ru, rd = lagrange_residual(LagrangeVars(*up), params), lagrange_residual(LagrangeVars(*dn), params)
        for b in range(6):
            assert abs((ru[b] - rd[b]) / (2 * h) - H[b, a]) < mp.mpf(10) ** -15


def test_multistarts_share_one_root(params, root):
    roots, failures = multistart_solve(params, starts=8, seed=1)
    assert not failures
    for r in roots:
        assert max(abs(a - b) for a, b in zip(r.as_list(), root.as_list())) < mp.mpf(10) ** -20


def test_critical_point_is_feasible(params, root):
    x = critical_point(root, params)
    sysm = build_constraints(params)
    assert max(abs(r) for r in residuals(sysm, x)) < mp.mpf(10) ** -30
    assert max(abs(r) for r in residuals(sysm, x, original=True)) < mp.mpf(10) ** -30
    assert abs(x.h[0] + x.h[1] - params.h_ns) < mp.mpf(10) ** -45
    psis = evaluate_psis(root, params)
    assert abs(x.ell["pu"] - params.lambda_p / psis.psi_p) < mp.mpf(10) ** -45
    assert abs(x.ell["nu"] - params.lambda_n / psis.psi_n) < mp.mpf(10) ** -45


def test_log_F_matches_closed_form(params, root):
    x = critical_point(root, params)
    assert abs(log_F(x) - log_max_F(root, params)) < mp.mpf(10) ** -25
    assert abs(mp.log(max_F_value(root, params)) - log_max_F(root, params)) < mp.mpf(10) ** -40


def test_log_B_pinned_and_both_forms(params):
    assert abs(log_B(params) - mp.mpf(LOG_B)) < mp.mpf(10) ** -30
    assert abs(log_B(params) - log_B_unsimplified(params)) < mp.mpf(10) ** -25
    assert B_constant(params) > 0


def test_product_near_printed_value(params, root):
    prod = mp.exp(log_B(params) + log_max_F(root, params))
    assert abs(prod - mp.mpf("0.9999998965")) < 5e-9
    assert (1 + mp.mpf(CONTINUITY.numerator) / CONTINUITY.denominator) * prod < 1


def test_rate_tightening_tolerance(params):
    a = upper_bound_rate(GAMMA, multistarts=0, tol="1e-20", params=params)
    b = upper_bound_rate(GAMMA, multistarts=0, tol="1e-40", params=params)
    assert abs(a.rate - b.rate) < mp.mpf(10) ** -25


def test_higher_density_also_below_one():
    rep = upper_bound_rate("5.2", 23, 30, multistarts=0)
    assert rep.rate < 1
    assert rep.to_dict()["rate_below_one"] is True


def test_bisection():
    res = bisect_threshold("4.2", "4.6")
    assert res.gamma_star <= mp.mpf(GAMMA)
    assert res.hi - res.lo <= mp.mpf("1e-4")
    assert res.rate_hi < 1 <= res.rate_lo
    assert mp.nstr(res.gamma_star, 6) == GAMMA_STAR
    assert len(res.trace) == res.steps


def test_bisection_needs_a_bracket():
    with pytest.raises(BracketError):
        bisect_threshold("4.5", "4.6")


def test_naive_threshold():
    v = naive_threshold()
    assert mp.nstr(v, 4) == "5.191"
    assert abs(2 * (mp.mpf(7) / 8) ** v - 1) < mp.mpf(10) ** -45
    assert v > mp.mpf(GAMMA)
