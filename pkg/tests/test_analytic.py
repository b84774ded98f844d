import json

import mpmath as mp
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import poisson

from satbound.analytic import (
    RootBracketError, clause_type_ideals, ode_solution, ode_solution_general, peeled_ideal, poisson_ideal,
    pure_mass, retention, stopping_time,
)

GAMMA = "4.4898"
mp.mp.dps, _saved = 60, mp.mp.dps

# Frozen from a separate mpmath evaluation (findroot on the closed-form pure
# mass, then direct Poisson double sums), 60 digits.
T_D = mp.mpf("0.01625717009609925219979039016925661")
B = mp.mpf("0.99758459962854968348082126345659949")
LAMBDA_P = mp.mpf("8.1507678906499638873322274171077366")
LAMBDA_N = mp.mpf("5.2698605990617383560684014123844936")
GAMMAHAT = mp.mpf("4.4735428299039007478002096098307434")
GAMMAHAT_K = [mp.mpf(v) for v in ("0.27085098424822195038108626542277031", "1.256756301649270589380302947482055",
                                 "1.9437950430185313261645367211520727", "1.0021405009878768818742836757738454")]
H_PS = mp.mpf("0.0000092223273813915760553182498530741741")
H_NS = mp.mpf("0.0000025471375818297440410579716143471892")
mp.mp.dps = _saved


@pytest.fixture(autouse=True)
def working_precision():
    with mp.workdps(50):
        yield


@pytest.fixture(scope="module")
def params():
    return clause_type_ideals(GAMMA, 23, 50)


def test_poisson_ideal_against_scipy():
    d = poisson_ideal(GAMMA)
    for i in range(12):
        for j in range(12):
            ref = poisson.pmf(i, 1.5 * 4.4898) * poisson.pmf(j, 1.5 * 4.4898)
            assert float(d[(i, j)]) == pytest.approx(ref, rel=1e-12)


def test_poisson_ideal_normalised_and_mean():
    with mp.workdps(50):
        d = poisson_ideal(GAMMA)
        assert abs(d.total() - 1) < mp.mpf(10) ** -30
        copies = mp.fsum((i + j) * v for (i, j), v in d.items())
        assert abs(copies / 3 - mp.mpf(GAMMA)) < mp.mpf(10) ** -30
        assert abs(d[(0, 0)] - mp.exp(-3 * mp.mpf(GAMMA))) < mp.mpf(10) ** -45
        assert d.tail_bound < mp.mpf(10) ** -40
        assert all(v >= 0 for v in d.entries.values())


def test_poisson_ideal_rejects_nonpositive_gamma():
    with pytest.raises(ValueError):
        poisson_ideal(0)


def test_ode_at_zero_is_poisson():
    with mp.workdps(50):
        y, d = ode_solution(GAMMA, 0), poisson_ideal(GAMMA)
        assert all(abs(y[k] - d[k]) < mp.mpf(10) ** -45 for k in d)


@pytest.mark.parametrize("t", ["0.1", "1", "3.5"])
def test_general_and_collapsed_forms_agree(t):
    with mp.workdps(50):
        y = ode_solution(GAMMA, t, verify=True)
        gen = ode_solution_general(GAMMA, t, 8)
        assert max(abs(v - y[k]) for k, v in gen.items()) < mp.mpf(10) ** -25


def test_ode_rejects_time_outside_range():
    with pytest.raises(ValueError):
        ode_solution(GAMMA, "4.4898")
    with pytest.raises(ValueError):
        ode_solution(GAMMA, -1)


@pytest.mark.parametrize("t", ["0", "0.01", "0.5", "2"])
def test_pure_mass_closed_equals_series(t):
    with mp.workdps(50):
        a = pure_mass(GAMMA, t, method="closed")
        b = pure_mass(GAMMA, t, method="series")
        assert abs(a - b) < mp.mpf(10) ** -25
    with pytest.raises(ValueError):
        pure_mass(GAMMA, t, method="other")


def test_pure_mass_at_zero():
    with mp.workdps(50):
        g = mp.mpf(GAMMA)
        d = poisson_ideal(GAMMA)
        direct = mp.fsum(i * d[(i, 0)] + i * d[(0, i)] for i in range(1, d.tail_cutoff))
        assert abs(pure_mass(GAMMA, 0) - 3 * g * mp.exp(-3 * g / 2)) < mp.mpf(10) ** -40
        assert abs(pure_mass(GAMMA, 0) - direct) < mp.mpf(10) ** -35
        assert pure_mass(GAMMA, 0) > 0


def test_stopping_time_pinned():
    with mp.workdps(50):
        st_ = stopping_time(GAMMA)
        assert abs(st_.t - T_D) < mp.mpf(10) ** -30
        assert abs(st_.b - B) < mp.mpf(10) ** -30
        assert abs(st_.residual) < mp.mpf(10) ** -20
        assert abs(retention(mp.mpf(GAMMA), st_.t) - st_.b) < mp.mpf(10) ** -45


def test_stopping_time_without_root():
    # at small density the pure mass stays positive until every clause is gone
    with pytest.raises(RootBracketError):
        stopping_time("0.5", scan_steps=200)


def test_peeled_ideal_shape():
    with mp.workdps(50):
        dh = peeled_ideal(GAMMA)
        y = ode_solution(GAMMA, stopping_time(GAMMA).t)
        assert all(v == 0 for (i, j), v in dh.items() if i < j)
        assert all(dh[(i, 0)] == 0 for i in range(1, 10))
        assert abs(dh[(2, 1)] - 2 * y[(2, 1)]) < mp.mpf(10) ** -40
        assert abs(dh[(3, 3)] - y[(3, 3)]) < mp.mpf(10) ** -40
        assert abs(dh.total() - 1) < mp.mpf(10) ** -40


def test_clause_type_ideals_pinned(params):
    tol = mp.mpf(10) ** -30
    assert abs(params.t_D - T_D) < tol
    assert abs(params.lambda_p - LAMBDA_P) < tol
    assert abs(params.lambda_n - LAMBDA_N) < tol
    assert abs(params.gammahat - GAMMAHAT) < tol
    assert all(abs(a - b) < tol for a, b in zip(params.gammahat_k, GAMMAHAT_K))
    assert abs(params.h_ps - H_PS) < tol
    assert abs(params.h_ns - H_NS) < tol


def test_clause_type_identities(params):
    params.check_identities()
    g0, g1, g2, g3 = params.gammahat_k
    tol = mp.mpf(10) ** -40
    assert abs(g0 + g1 + g2 + g3 - params.gammahat) < tol
    assert abs(g1 + 2 * g2 + 3 * g3 - params.lambda_p) < tol
    assert abs(3 * g0 + 2 * g1 + g2 - params.lambda_n) < tol
    assert abs(3 * params.gammahat - params.lambda_p - params.lambda_n) < tol
    assert params.lambda_p >= params.lambda_n
    assert 0 < params.b < 1 and 0 < params.t_D < params.gamma


def test_light_entries_respect_cutoff(params):
    light = params.light()
    assert all(i <= 23 and j <= 23 for i, j in light)
    assert params.is_light(23, 23) and not params.is_light(24, 0)


def test_params_json_uses_decimal_strings(params):
    obj = json.loads(params.to_json())
    assert isinstance(obj["t_D"], str)
    assert mp.mpf(obj["lambda_p"]) == pytest.approx(float(LAMBDA_P))


def test_clause_type_ideals_rejects_bad_M():
    with pytest.raises(ValueError):
        clause_type_ideals(GAMMA, 0)


@given(st.decimals(min_value="1.0", max_value="8.0", places=3), st.floats(0.0, 0.9))
@settings(max_examples=25, deadline=None)
def test_collapsed_solution_is_poisson_product(gamma, frac):
    with mp.workdps(30):
        g = mp.mpf(str(gamma))
        t = g * mp.mpf(frac)
        y = ode_solution(g, t, digits=30)
        a = 3 * g * retention(g, t) / 2
        for i, j in [(0, 0), (1, 0), (2, 3), (5, 5)]:
            ref = mp.exp(-2 * a) * a ** (i + j) / (mp.factorial(i) * mp.factorial(j))
            assert abs(y[(i, j)] - ref) <= mp.mpf(10) ** -25 * max(1, ref)
        assert abs(y.total() - 1) < mp.mpf(10) ** -25


@given(st.decimals(min_value="3.0", max_value="6.0", places=2))
@settings(max_examples=10, deadline=None)
def test_stopping_time_is_root(gamma):
    with mp.workdps(30):
        s = stopping_time(str(gamma), digits=30)
        assert abs(s.residual) < mp.mpf(10) ** -20
        assert 0 < s.t < mp.mpf(str(gamma))
        assert 0 < s.b < 1
