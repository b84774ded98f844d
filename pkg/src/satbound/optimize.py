"""Exponential rate of the first moment.

The maximum of log F over the polytope is reached at a critical point that is
parametrised by six positive Lagrange variables.  We solve for them with Newton
in log coordinates, so that iterates never leave the positive orthant, and
evaluate the rate ``(1 + 1e-7) * B * max F``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath as mp
import numpy as np
from scipy.optimize import least_squares

from .analytic import DEFAULT_DIGITS, DEFAULT_M, AnalyticParams, clause_type_ideals
from .structure import LABELS, PolytopePoint, clause_types, log_F, to_mpf

__all__ = [
    "LagrangeVars", "PsiValues", "BoundReport", "NumericError", "BracketError",
    "PRINTED_SOLUTION", "evaluate_psis", "log_L", "lagrange_residual", "lagrange_hessian",
    "solve_lagrange", "multistart_solve", "critical_point", "log_F", "log_B",
    "log_B_unsimplified", "B_constant", "log_max_F", "max_F_value", "upper_bound_rate",
    "bisect_threshold", "naive_threshold",
]

NAMES = ("nu_ps", "nu_nsf", "nu_nsr", "mu_ps", "mu_nsf", "mu_nsr")
# kept exact; an mpf built at import would carry only 15 digits
CONTINUITY = Fraction(1, 10**7)


class NumericError(ArithmeticError):
    def __init__(self, message: str, trace: list | None = None):
        super().__init__(message)
        self.trace = trace or []


class BracketError(ValueError):
    pass


@dataclass(frozen=True)
class LagrangeVars:
    nu_ps: mp.mpf
    nu_nsf: mp.mpf
    nu_nsr: mp.mpf
    mu_ps: mp.mpf
    mu_nsf: mp.mpf
    mu_nsr: mp.mpf

    def __post_init__(self):
        for name in NAMES:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    @classmethod
    def from_sequence(cls, values) -> "LagrangeVars":
        return cls(*[mp.mpf(v) for v in values])

    def as_list(self) -> list:
        return [getattr(self, n) for n in NAMES]

    def to_dict(self, digits: int = 30) -> dict[str, str]:
        return {n: mp.nstr(getattr(self, n), digits) for n in NAMES}


# Reference multipliers, published to eight digits.
PRINTED_SOLUTION = LagrangeVars.from_sequence(
    ["1.2782018", "0.33277280", "0.95336927", "1.9972796", "0.45029358", "0.33794030"])


@dataclass
class PsiValues:
    psi_light: dict
    psi_clause: tuple
    psi: object
    psi_p: object
    psi_n: object


# --- the function L --------------------------------------------------------
#
# Coordinates are u = log v.  Every Psi is a positive polynomial, so log L is a
# combination of logs of positive polynomials and its derivatives in u follow
# from the monomial exponents.

def _clause_polys() -> list[list[tuple]]:
    """Psi_k as monomial lists ((num, den), exponents over the six variables).

    Coefficients stay rational so they are exact at any working precision.
    """
    polys: list[list[tuple]] = [[] for _ in range(4)]
    for a in clause_types():
        polys[a.tp].append(((2, math.factorial(a.w)), (0, 0, 0, a.ps, a.nsf, a.nsr)))
    return polys


_CLAUSE_POLYS = _clause_polys()
_ONE = (1, 1)
_PSI_POLY = [(_ONE, (0, 1, 0, 0, 0, 0)), (_ONE, (0, 0, 1, 0, 0, 0))]
_PSI_P_POLY = [(_ONE, (1, 0, 0, 1, 0, 0)), (_ONE, (0,) * 6)]
_PSI_N_POLY = [(_ONE, (0, 1, 0, 0, 1, 0)), (_ONE, (0, 0, 1, 0, 0, 1)), (_ONE, (0,) * 6)]


class _Backend:
    """Arithmetic for one precision: mpmath or float64."""

    def __init__(self, exact: bool):
        self.exact = exact
        self.log = mp.log if exact else math.log
        self.num = mp.mpf if exact else float

    def zeros(self, n: int, m: int | None = None):
        z = self.num(0)
        return [z] * n if m is None else [[z] * m for _ in range(n)]


def _poly_derivs(poly, v, bk: _Backend):
    val = bk.num(0)
    grad = bk.zeros(6)
    hess = bk.zeros(6, 6)
    for (num, den), exps in poly:
        m = bk.num(num) / den
        for e, x in zip(exps, v):
            if e:
                m *= x ** e
        val += m
        nz = [(a, e) for a, e in enumerate(exps) if e]
        for a, ea in nz:
            grad[a] += m * ea
            for b, eb in nz:
                hess[a][b] += m * ea * eb
    return val, grad, hess


class _System:
    """Coefficients of log L at one precision."""

    def __init__(self, params: AnalyticParams, exact: bool):
        bk = self.bk = _Backend(exact)
        conv = bk.num
        self.M = params.M
        self.light = [(i, j, conv(d)) for (i, j), d in sorted(params.light().items())]
        self.h_ps = conv(params.h_ps)
        self.h_ns = conv(params.h_ns)
        self.gk = [conv(g) for g in params.gammahat_k]
        self.lp = conv(params.lambda_p)
        self.ln = conv(params.lambda_n)

    def _powers(self, v):
        x, p, r = v[0], v[1], v[2]
        M = self.M
        one = self.bk.num(1)
        S = p + r
        xs, Ss, rs, D = [one], [one], [one], [self.bk.num(0)]
        for _ in range(M):
            xs.append(xs[-1] * x)
            D.append(S * D[-1] + rs[-1])  # (S^j - r^j)/p without cancellation
            Ss.append(Ss[-1] * S)
            rs.append(rs[-1] * r)
        return xs, Ss, D

    def light_values(self, v) -> dict:
        xs, _, D = self._powers(v)
        return {(i, j): xs[i] + v[1] * D[j] for i, j, _ in self.light}

    def light_terms(self, v, order: int):
        """Yield (delta, P, grad, hess) restricted to the (x, p, r) block."""
        x, p, r = v[0], v[1], v[2]
        xs, Ss, D = self._powers(v)
        for i, j, d in self.light:
            X = xs[i]
            P = X + p * D[j]
            if order == 0:
                yield d, P, None, None
                continue
            gp = j * p * Ss[j - 1] if j else 0
            gr = j * r * p * D[j - 1] if j else 0
            g = (i * X, gp, gr)
            if order == 1:
                yield d, P, g, None
                continue
            jj = j * (j - 1)
            hpp = gp + (jj * p * p * Ss[j - 2] if j >= 2 else 0)
            hrr = gr + (jj * r * r * p * D[j - 2] if j >= 2 else 0)
            hpr = jj * p * r * Ss[j - 2] if j >= 2 else 0
            h = ((i * i * X, 0, 0), (0, hpp, hpr), (0, hpr, hrr))
            yield d, P, g, h

    def _small_polys(self):
        yield self.h_ns, _PSI_POLY
        for g, poly in zip(self.gk, _CLAUSE_POLYS):
            yield g, poly
        yield -self.lp, _PSI_P_POLY
        yield -self.ln, _PSI_N_POLY

    def value(self, v):
        log = self.bk.log
        total = self.h_ps * log(v[0])
        for d, P, _, _ in self.light_terms(v, 0):
            total += d * log(P)
        for w, poly in self._small_polys():
            total += w * log(_poly_derivs(poly, v, self.bk)[0])
        return total

    def derivatives(self, v, hessian: bool = True):
        """Gradient and Hessian of log L with respect to u = log v."""
        bk = self.bk
        grad = bk.zeros(6)
        hess = bk.zeros(6, 6)
        grad[0] += self.h_ps
        for d, P, g, h in self.light_terms(v, 2 if hessian else 1):
            for a in range(3):
                grad[a] += d * g[a] / P
                if hessian:
                    for b in range(3):
                        hess[a][b] += d * (h[a][b] / P - g[a] * g[b] / (P * P))
        for w, poly in self._small_polys():
            P, g, h = _poly_derivs(poly, v, bk)
            for a in range(6):
                if g[a] == 0:
                    continue
                grad[a] += w * g[a] / P
                if hessian:
                    for b in range(6):
                        hess[a][b] += w * (h[a][b] / P - g[a] * g[b] / (P * P))
        return grad, hess


def _system(params: AnalyticParams, exact: bool = True) -> _System:
    # cached on the params object, keyed by precision
    cache = params.__dict__.setdefault("_lagrange_systems", {})
    key = (exact, mp.mp.dps if exact else 0)
    if key not in cache:
        cache[key] = _System(params, exact)
    return cache[key]


def _check_positive(v: LagrangeVars | list) -> list:
    vals = v.as_list() if isinstance(v, LagrangeVars) else list(v)
    if len(vals) != 6 or any(not x > 0 for x in vals):
        raise ValueError("Lagrange variables must be six positive numbers")
    return vals


def evaluate_psis(v: LagrangeVars, params: AnalyticParams) -> PsiValues:
    vals = _check_positive(v)
    with mp.workdps(params.digits):
        vals = [mp.mpf(x) for x in vals]
        sys_ = _system(params)
        clause = tuple(_poly_derivs(poly, vals, sys_.bk)[0] for poly in _CLAUSE_POLYS)
        return PsiValues(
            psi_light=sys_.light_values(vals),
            psi_clause=clause,
            psi=vals[1] + vals[2],
            psi_p=vals[0] * vals[3] + 1,
            psi_n=vals[1] * vals[4] + vals[2] * vals[5] + 1,
        )


def log_L(v: LagrangeVars, params: AnalyticParams):
    vals = _check_positive(v)
    with mp.workdps(params.digits):
        return _system(params).value([mp.mpf(x) for x in vals])


def lagrange_residual(v: LagrangeVars, params: AnalyticParams) -> list:
    """Left minus right hand sides of the six expanded critical-point equations.

    Each equation is ``v_a * d(log L)/d v_a = 0`` rearranged, so the residual is
    the negated gradient of log L in log coordinates.
    """
    vals = _check_positive(v)
    with mp.workdps(params.digits):
        grad, _ = _system(params).derivatives([mp.mpf(x) for x in vals], hessian=False)
        return [-g for g in grad]


def lagrange_hessian(v: LagrangeVars, params: AnalyticParams) -> mp.matrix:
    """Jacobian of :func:`lagrange_residual` with respect to log v."""
    vals = _check_positive(v)
    with mp.workdps(params.digits):
        _, hess = _system(params).derivatives([mp.mpf(x) for x in vals])
        return -mp.matrix(hess)


# --- Newton ----------------------------------------------------------------

def _norm(g) -> object:
    return max(abs(x) for x in g)


def _newton(sys_: _System, u, tol, max_iter: int, max_step: float = 2.0):
    """Damped Newton on grad log L = 0 in log coordinates.

    Returns (u, residual_norm, trace).  Raises NumericError on failure.
    """
    bk = sys_.bk
    exp = mp.exp if bk.exact else math.exp
    u = list(u)
    trace = []
    grad, hess = sys_.derivatives([exp(x) for x in u])
    res = _norm(grad)
    for it in range(max_iter):
        trace.append((it, [float(x) for x in u], float(res)))
        if res < tol:
            return u, res, trace
        try:
            if bk.exact:
                step = mp.lu_solve(mp.matrix(hess), mp.matrix([-g for g in grad]))
                step = [step[a] for a in range(6)]
            else:
                step = list(np.linalg.solve(np.array(hess), -np.array(grad)))
        except (ZeroDivisionError, np.linalg.LinAlgError) as exc:
            raise NumericError(f"singular Jacobian at iteration {it}", trace) from exc
        big = max(abs(s) for s in step)
        if not big < math.inf:
            raise NumericError(f"non-finite Newton step at iteration {it}", trace)
        scale = min(1, max_step / big) if big > 0 else 1
        alpha = bk.num(scale)
        while True:
            cand = [x + alpha * s for x, s in zip(u, step)]
            try:
                g_new, h_new = sys_.derivatives([exp(x) for x in cand])
                r_new = _norm(g_new)
            except (OverflowError, ZeroDivisionError, ValueError):
                r_new = math.inf
            if r_new < (1 - 1e-4 * float(alpha)) * res or (r_new < res and alpha < 1e-3):
                break
            alpha /= 2
            if alpha < 1e-12:
                raise NumericError(f"line search failed at iteration {it}", trace)
        u, grad, hess, res = cand, g_new, h_new, r_new
    raise NumericError(f"no convergence after {max_iter} iterations (residual {float(res):.3g})", trace)


def _nu_given_mu(sys_: _System, mu):
    """Closed-form nu from the three mu-equations, or None outside the domain.

    Those equations only involve nu through nu_ps*mu_ps, nu_nsf*mu_nsf and
    nu_nsr*mu_nsr, and their right hand sides depend on mu alone.
    """
    v = [1.0, 1.0, 1.0, *mu]
    R = np.zeros(3)
    for g, poly in zip(sys_.gk, _CLAUSE_POLYS):
        val, grad, _ = _poly_derivs(poly, v, sys_.bk)
        R += g * np.array(grad[3:]) / val
    if not R[0] < sys_.lp:
        return None
    sf, sr = R[1] / sys_.ln, R[2] / sys_.ln
    if not sf + sr < 1:
        return None
    rest = 1 - sf - sr
    return np.array([R[0] / (sys_.lp - R[0]) / mu[0], sf / rest / mu[1], sr / rest / mu[2]])


def _reduced_solve(sys_: _System, mu0, max_nfev: int = 2000):
    """Solve the 3x3 system in log mu by least squares; returns the six values."""
    def resid(w):
        mu = np.exp(w)
        nu = _nu_given_mu(sys_, mu)
        if nu is None or not np.all(np.isfinite(nu)) or np.any(nu <= 0):
            return np.full(3, 1e3)
        grad, _ = sys_.derivatives(list(nu) + list(mu), hessian=False)
        return np.array(grad[:3])

    fit = least_squares(resid, np.log(np.asarray(mu0, dtype=float)), xtol=1e-15, ftol=1e-15,
                        gtol=1e-15, max_nfev=max_nfev)
    if not np.max(np.abs(fit.fun)) < 1e-9:
        raise NumericError(f"reduced system did not converge (residual {np.max(np.abs(fit.fun)):.3g})",
                           [(fit.nfev, list(fit.x), float(np.max(np.abs(fit.fun))))])
    mu = np.exp(fit.x)
    return list(_nu_given_mu(sys_, mu)) + list(mu)


def solve_lagrange(params: AnalyticParams, init: LagrangeVars | None = None, tol=None,
                   max_iter: int = 100) -> LagrangeVars:
    """Solve the six-variable critical-point system to residual norm ``tol``.

    A float64 stage solves the 3x3 system obtained by eliminating nu (it only
    uses the mu part of ``init``), then damped Newton on all six equations
    polishes the root at the working precision of ``params``.
    """
    init = LagrangeVars.from_sequence([1] * 6) if init is None else init
    start = [float(x) for x in _check_positive(init)]
    with mp.workdps(params.digits):
        tol = mp.mpf(10) ** (-(params.digits - 10)) if tol is None else mp.mpf(tol)
        v = _reduced_solve(_system(params, exact=False), start[3:])
        u, _, _ = _newton(_system(params), [mp.log(mp.mpf(x)) for x in v], tol, max_iter)
        return LagrangeVars.from_sequence([mp.exp(x) for x in u])


def multistart_solve(params: AnalyticParams, starts: int = 32, seed: int = 0, tol=None,
                     include_printed_start: bool = True):
    """Solve from log-uniform starts in [1e-2, 1e2]^6.

    Returns (roots, failures) where each root is a LagrangeVars.
    """
    rng = np.random.default_rng(seed)
    inits = [LagrangeVars.from_sequence(10.0 ** rng.uniform(-2, 2, 6)) for _ in range(starts)]
    if include_printed_start:
        inits.insert(0, PRINTED_SOLUTION)
    roots, failures = [], []
    for init in inits:
        try:
            roots.append(solve_lagrange(params, init, tol))
        except NumericError as exc:
            failures.append((init, str(exc)))
    return roots, failures


def _max_spread(roots: list[LagrangeVars]):
    if not roots:
        return mp.inf
    ref = roots[0].as_list()
    return max((abs(a - b) for r in roots for a, b in zip(r.as_list(), ref)), default=mp.mpf(0))


# --- values at the critical point ----------------------------------------

def critical_point(v: LagrangeVars, params: AnalyticParams) -> PolytopePoint:
    x, p, r, mps, mf, mr = _check_positive(v)
    with mp.workdps(params.digits):
        psis = evaluate_psis(v, params)
        t, f = {}, {}
        for (i, j), d in params.light().items():
            P = psis.psi_light[(i, j)]
            t[(i, j)] = d * x ** i / P
            for k in range(1, j + 1):
                f[(i, j, k)] = d * mp.binomial(j, k) * p ** k * r ** (j - k) / P
        h = (params.h_ns * p / psis.psi, params.h_ns * r / psis.psi)
        c = {}
        for a in clause_types():
            mono = mp.mpf(2) / math.factorial(a.w) * mps ** a.ps * mf ** a.nsf * mr ** a.nsr
            c[a.key] = params.gammahat_k[a.tp] * mono / psis.psi_clause[a.tp]
        lp, ln = params.lambda_p, params.lambda_n
        ell = {
            "ps": lp * x * mps / psis.psi_p,
            "pu": lp / psis.psi_p,
            "nsf": ln * p * mf / psis.psi_n,
            "nsr": ln * r * mr / psis.psi_n,
            "nu": ln / psis.psi_n,
        }
        assert set(ell) == set(LABELS)
        return PolytopePoint(t=t, f=f, h=h, c=c, ell=ell)


def log_max_F(v: LagrangeVars, params: AnalyticParams):
    """log max F from the closed form at a critical point."""
    vals = _check_positive(v)
    with mp.workdps(params.digits):
        psis = evaluate_psis(v, params)
        lp, ln = params.lambda_p, params.lambda_n
        total = params.h_ps * mp.log(vals[0])
        total += lp * mp.log(lp / psis.psi_p) + ln * mp.log(ln / psis.psi_n)
        for key, d in params.light().items():
            total += d * mp.log(psis.psi_light[key] / d)
        if params.h_ns > 0:
            total += params.h_ns * mp.log(psis.psi / params.h_ns)
        for g, P in zip(params.gammahat_k, psis.psi_clause):
            if g > 0:
                total += g * mp.log(P / g)
        return total


def max_F_value(v: LagrangeVars, params: AnalyticParams):
    with mp.workdps(params.digits):
        return mp.exp(log_max_F(v, params))


def _xlogx(x):
    return x * mp.log(x) if x > 0 else mp.mpf(0)


def log_B(params: AnalyticParams):
    """log B, simplified form with (3 gammahat)^(2 gammahat) in the denominator."""
    with mp.workdps(params.digits):
        g = params.gammahat
        total = params.heavy_mass * mp.log(2) + _xlogx(params.h_ns)
        total += sum((_xlogx(d) for d in params.light().values()), mp.mpf(0))
        return total - 2 * g * mp.log(3 * g)


def log_B_unsimplified(params: AnalyticParams):
    """log B written with the clause-type masses and the copy totals."""
    with mp.workdps(params.digits):
        g0, g1, g2, g3 = params.gammahat_k
        total = params.heavy_mass * mp.log(2) + _xlogx(params.h_ns)
        total += sum((_xlogx(d) for d in params.light().values()), mp.mpf(0))
        total += (g0 + g3) * mp.log(3) + sum(_xlogx(g) for g in params.gammahat_k)
        return total - _xlogx(params.lambda_p) - _xlogx(params.lambda_n)


def B_constant(params: AnalyticParams):
    with mp.workdps(params.digits):
        return mp.exp(log_B(params))


# --- the bound -------------------------------------------------------------

@dataclass
class BoundReport:
    gamma: mp.mpf
    M: int
    digits: int
    lagrange: LagrangeVars
    maxF: mp.mpf
    B: mp.mpf
    product: mp.mpf
    rate: mp.mpf
    log_rate: mp.mpf
    residual_norm: mp.mpf
    multistart_count: int
    converged_count: int
    root_spread: mp.mpf
    all_roots_agree: bool
    params: AnalyticParams = field(repr=False)

    def to_dict(self) -> dict:
        d = self.digits
        return {
            "gamma": mp.nstr(self.gamma, d),
            "M": self.M,
            "digits": d,
            "lagrange": self.lagrange.to_dict(d),
            "maxF": mp.nstr(self.maxF, d),
            "B": mp.nstr(self.B, d),
            "B_maxF": mp.nstr(self.product, d),
            "rate": mp.nstr(self.rate, d),
            "log_rate": mp.nstr(self.log_rate, d),
            "rate_below_one": bool(self.rate < 1),
            "residual_norm": mp.nstr(self.residual_norm, 5),
            "multistart_count": self.multistart_count,
            "converged_count": self.converged_count,
            "root_spread": mp.nstr(self.root_spread, 5),
            "all_roots_agree": self.all_roots_agree,
            "analytic": self.params.to_dict(),
        }


def upper_bound_rate(gamma, M: int = DEFAULT_M, digits: int = DEFAULT_DIGITS, multistarts: int = 32,
                     seed: int = 0, tol=None, agree_tol=None,
                     params: AnalyticParams | None = None) -> BoundReport:
    """Full pipeline: ideal parameters, multistart solve, rate."""
    with mp.workdps(digits):
        params = clause_type_ideals(gamma, M, digits) if params is None else params
        params.check_identities()
        tol = mp.mpf(10) ** (-(digits - 10)) if tol is None else mp.mpf(tol)
        agree_tol = mp.mpf(10) ** -20 if agree_tol is None else mp.mpf(agree_tol)
        roots, _ = multistart_solve(params, multistarts, seed, tol)
        if not roots:
            raise NumericError("no multistart converged")
        spread = _max_spread(roots)
        # when roots disagree, report the largest value of F among them
        best = max(roots, key=lambda r: log_max_F(r, params))
        res = _norm(lagrange_residual(best, params))
        lmf = log_max_F(best, params)
        lb = log_B(params)
        product = mp.exp(lb + lmf)
        rate = (1 + to_mpf(CONTINUITY)) * product
        return BoundReport(
            gamma=params.gamma, M=M, digits=digits, lagrange=best, maxF=mp.exp(lmf), B=mp.exp(lb),
            product=product, rate=rate, log_rate=mp.log(rate), residual_norm=res,
            multistart_count=multistarts + 1, converged_count=len(roots), root_spread=spread,
            all_roots_agree=bool(spread < agree_tol), params=params,
        )


def _rate(gamma, M: int, digits: int) -> mp.mpf:
    with mp.workdps(digits):
        params = clause_type_ideals(gamma, M, digits)
        v = solve_lagrange(params, PRINTED_SOLUTION)
        return (1 + to_mpf(CONTINUITY)) * mp.exp(log_B(params) + log_max_F(v, params))


@dataclass
class ThresholdResult:
    gamma_star: mp.mpf
    lo: mp.mpf
    hi: mp.mpf
    rate_lo: mp.mpf
    rate_hi: mp.mpf
    steps: int
    # (step, lo, hi, mid, rate at mid) per bisection step
    trace: list = field(default_factory=list)


def bisect_threshold(lo, hi, tol_gamma="1e-4", M: int = DEFAULT_M, digits: int = 30) -> ThresholdResult:
    """Locate the density where the rate crosses 1.

    ``gamma_star`` is the midpoint of the final bracket ``[lo, hi]``, whose
    width is at most ``tol_gamma``.
    """
    with mp.workdps(digits):
        lo, hi, tol_gamma = mp.mpf(lo), mp.mpf(hi), mp.mpf(tol_gamma)
        r_lo, r_hi = _rate(lo, M, digits), _rate(hi, M, digits)
        if not (r_lo >= 1 > r_hi):
            raise BracketError(f"rate({lo})={mp.nstr(r_lo, 12)}, rate({hi})={mp.nstr(r_hi, 12)}")
        steps = 0
        trace = []
        while hi - lo > tol_gamma:
            mid = (lo + hi) / 2
            r_mid = _rate(mid, M, digits)
            if r_mid >= 1:
                lo, r_lo = mid, r_mid
            else:
                hi, r_hi = mid, r_mid
            steps += 1
            trace.append((steps, lo, hi, mid, r_mid))
        return ThresholdResult((lo + hi) / 2, lo, hi, r_lo, r_hi, steps, trace)


def naive_threshold(digits: int = DEFAULT_DIGITS) -> mp.mpf:
    """Density at which 2^n (7/8)^(gamma n) = 1."""
    with mp.workdps(digits):
        return mp.log(2) / mp.log(mp.mpf(8) / 7)
