"""Acceptance criteria, one test each; verdicts are summarised at the end of the run."""
import contextlib
import io
import json
import os
import time
from fractions import Fraction

import mpmath as mp
import pytest

from satbound.analytic import clause_type_ideals, stopping_time
from satbound.cli import main
from satbound.optimize import LagrangeVars, lagrange_residual, log_L, log_max_F, naive_threshold, \
    solve_lagrange, upper_bound_rate
from satbound.polytope import build_constraints, grid_sweep, lp_min_coordinate, verify_case3_direction
from satbound.structure import LABELS
from satbound.verify import run_experiment, tiny_exact_suite

GAMMA = "4.4898"
JOBS = os.cpu_count() or 1

# the six printed multipliers, as (nu_ps, nu_nsf, nu_nsr, mu_ps, mu_nsf, mu_nsr)
PRINTED = ("1.2782018", "0.33277280", "0.95336927", "1.9972796", "0.45029358", "0.33794030")


def cli_json(*argv):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main(list(argv))
    return code, json.loads(buf.getvalue())


@pytest.fixture(scope="module")
def bound_run():
    t0 = time.time()
    code, rep = cli_json("bound", "--gamma", GAMMA, "--M", "23", "--digits", "50")
    return code, rep, time.time() - t0


def test_criterion_01_final_rate(bound_run, criterion):
    code, rep, seconds = bound_run
    with mp.workdps(50):
        prod = mp.mpf(rep["result"]["B_maxF"])
        rate = mp.mpf(rep["result"]["rate"])
        gap = abs(prod - mp.mpf("0.9999998965"))
        ok = gap < 5e-9 and rate < 1 and abs(rate - (1 + mp.mpf(10) ** -7) * prod) < mp.mpf(10) ** -45
    ok = ok and code == 0 and seconds < 300
    assert criterion(1, ok, f"B*maxF={mp.nstr(prod, 15)} |diff|={mp.nstr(gap, 3)} "
                            f"rate={mp.nstr(rate, 15)} exit={code} {seconds:.1f}s")


def test_criterion_02_lagrange_solution(bound_run, criterion):
    _, rep, _ = bound_run
    res = rep["result"]
    with mp.workdps(50):
        got = [mp.mpf(res["lagrange"][k]) for k in ("nu_ps", "nu_nsf", "nu_nsr", "mu_ps", "mu_nsf", "mu_nsr")]
        rel = max(abs(g / mp.mpf(p) - 1) for g, p in zip(got, PRINTED))
        spread = mp.mpf(res["root_spread"])
    all_converged = res["converged_count"] == res["multistart_count"] >= 33
    ok = rel < 1e-6 and all_converged and spread < mp.mpf(10) ** -20
    assert criterion(2, ok, f"max rel dev={mp.nstr(rel, 3)} converged={res['converged_count']}/"
                            f"{res['multistart_count']} spread={mp.nstr(spread, 3)}")


def test_criterion_03_stopping_time(criterion):
    with mp.workdps(50):
        s = stopping_time(GAMMA)
        in_interval = mp.mpf("0.15") < s.t < mp.mpf("0.16")
        small = abs(s.residual) < mp.mpf(10) ** -20
    assert criterion(3, in_interval and small,
                     f"t_D={mp.nstr(s.t, 20)} in (0.15, 0.16): {in_interval}; |y0(t_D)|={mp.nstr(abs(s.residual), 3)}")


def test_criterion_04_naive_bound(criterion):
    t0 = time.time()
    v = naive_threshold()
    ok = round(float(v), 3) == 5.191 and time.time() - t0 < 1
    assert criterion(4, ok, f"naive threshold={mp.nstr(v, 10)}")


def _lp_suite(M):
    params = clause_type_ideals(GAMMA, M, 50)
    sysm = build_constraints(params)
    warm = {s: lp_min_coordinate(sysm, ("ell", s)) for s in LABELS}
    return sysm, warm


def test_criterion_05_boundary_lps(criterion):
    t0 = time.time()
    sys6, warm6 = _lp_suite(6)
    cold6 = {s: lp_min_coordinate(sys6, ("ell", s), warm_start=False) for s in LABELS}
    reduced_ok = (all(r.certified for r in [*warm6.values(), *cold6.values()])
                  and all(warm6[s].value == cold6[s].value for s in LABELS)
                  and verify_case3_direction(sys6))
    reduced_time = time.time() - t0
    sys23, mins = _lp_suite(23)
    pattern = mins["nsr"].value == 0 and all(mins[s].value > 0 for s in LABELS if s != "nsr")
    full_ok = pattern and all(r.certified for r in mins.values()) and verify_case3_direction(sys23)
    ok = reduced_ok and reduced_time < 120 and full_ok
    values = ", ".join(f"{s}={float(mins[s].value):.6g}" for s in LABELS)
    assert criterion(5, ok, f"M=23 minima: {values}; certified+case3 M=6 {reduced_ok} ({reduced_time:.1f}s), "
                            f"M=23 {full_ok}")


def _grid(grid):
    params = clause_type_ideals(GAMMA, 23, 50)
    with mp.workdps(50):
        lm = float(log_max_F(solve_lagrange(params), params))
    rep = grid_sweep(build_constraints(params), grid, jobs=JOBS)
    return rep, lm


def test_criterion_06_grid_sweep(criterion):
    rep, lm = _grid(20)
    ok = rep.best is not None and rep.best_value <= lm + 1e-12
    assert criterion(6, ok, f"grid 20: feasible={rep.feasible_count} best-log-max={rep.best_value - lm:.3e}")


@pytest.mark.slow
def test_criterion_06_grid_sweep_fine(criterion):
    rep, lm = _grid(100)
    ok = rep.best is not None and rep.best_value <= lm + 1e-12
    assert criterion(6, ok, f"grid 100: feasible={rep.feasible_count} best-log-max={rep.best_value - lm:.3e}")


def test_criterion_07_exact_counting(tiny_classes, criterion):
    rep = tiny_exact_suite()
    frozen = {(r["n"], json.dumps(r["d_hat"], sort_keys=True), tuple(r["c_hat"]), r["M"]): r
              for *_, r in tiny_classes}
    matches = all(
        frozen[(row["n"], json.dumps(row["d_hat"], sort_keys=True), tuple(row["c_hat"]), row["M"])]
        ["enumerated_X"] == row["enumerated_X"] for row in rep.per_seed)
    ok = rep.passed and matches and len(rep.per_seed) == len(tiny_classes)
    assert criterion(7, ok, f"{len(rep.per_seed)} class/M cases, {rep.aggregate['failures']} mismatches")


def test_criterion_08_concentration(criterion):
    seeds = range(10)
    deg = run_experiment("degree-concentration", {"n": 100_000}, seeds, JOBS)
    core = run_experiment("core-degree", {"n": 100_000}, seeds, JOBS)
    ctype = run_experiment("clause-type-concentration", {"n": 100_000}, seeds, JOBS)
    steps = [r["steps_per_n"] for r in core.per_seed]
    steps_ok = all(0.14 < s < 0.17 for s in steps)
    ok = deg.passed and core.passed and ctype.passed and steps_ok
    assert criterion(8, ok, f"|d-delta|={deg.aggregate['max']:.4g} (<0.003) "
                            f"|dhat-deltahat|={core.aggregate['max']:.4g} (<0.01) "
                            f"|chat-gammahat|={ctype.aggregate['max']:.4g} (<0.01) "
                            f"steps/n in [{min(steps):.4f}, {max(steps):.4f}] vs (0.14, 0.17)")


def test_criterion_09_sat_phase(criterion):
    low = run_experiment("sat-rate", {"n": 150, "gamma": "3.5"}, range(50), JOBS)
    high = run_experiment("sat-rate", {"n": 150, "gamma": "5.5"}, range(50), JOBS)
    ok = low.aggregate["sat_fraction"] >= 0.9 and high.aggregate["unsat_fraction"] >= 0.9
    assert criterion(9, ok, f"SAT at 3.5: {low.aggregate['sat_fraction']:.2f}, "
                            f"UNSAT at 5.5: {high.aggregate['unsat_fraction']:.2f}")


def test_criterion_10_numerical_hygiene(bound_run, criterion):
    _, first, _ = bound_run
    params = clause_type_ideals(GAMMA, 23, 50)
    with mp.workdps(50):
        v = solve_lagrange(params)
        h = mp.mpf(10) ** -10
        res = lagrange_residual(v, params)
        fd_err = mp.mpf(0)
        for a in range(6):
            up, dn = v.as_list(), v.as_list()
            up[a] *= mp.exp(h)
            dn[a] *= mp.exp(-h)
            fd = (log_L(LagrangeVars(*up), params) - log_L(LagrangeVars(*dn), params)) / (2 * h)
            fd_err = max(fd_err, abs(fd + res[a]))
    hi = upper_bound_rate(GAMMA, 23, 80, multistarts=0)
    with mp.workdps(80):
        ladder = abs(hi.log_rate - mp.mpf(first["result"]["log_rate"]))
    _, second = cli_json("bound", "--gamma", GAMMA, "--M", "23", "--digits", "50")
    exp_a = run_experiment("core-degree", {"n": 100_000}, [3])
    exp_b = run_experiment("core-degree", {"n": 100_000}, [3])
    rerun = second == first and exp_a.to_json() == exp_b.to_json()
    ok = fd_err < mp.mpf(10) ** -15 and ladder < mp.mpf(10) ** -40 and rerun
    assert criterion(10, ok, f"FD err={mp.nstr(fd_err, 3)} ladder 50 vs 80={mp.nstr(ladder, 3)} "
                             f"bit-identical reruns={rerun}")
