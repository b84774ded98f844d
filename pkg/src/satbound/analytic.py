"""Closed-form ideal quantities of the pure-literal peeling process.

Everything here is evaluated with :mod:`mpmath` at a configurable working
precision (default 50 significant digits). Public functions open their own
``mp.workdps`` context, so callers do not need to touch the global precision.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator

import mpmath as mp

DEFAULT_DIGITS = 50
DEFAULT_M = 23
TAIL_DIGITS = 40


class RootBracketError(ValueError):
    """No sign change of the pure-occurrence mass was found."""


@dataclass
class IdealSequence:
    """Real-valued 2D degree profile ``(i, j) -> scaled count``.

    Entries are stored for ``0 <= i, j < tail_cutoff``; the mass (and first
    moments) of everything beyond the cutoff is below ``tail_bound``.
    """

    entries: dict[tuple[int, int], mp.mpf]
    tail_cutoff: int
    tail_bound: mp.mpf

    def __getitem__(self, key: tuple[int, int]) -> mp.mpf:
        return self.entries.get(key, mp.mpf(0))

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def items(self):
        return self.entries.items()

    def total(self) -> mp.mpf:
        return mp.fsum(self.entries.values())


def _poisson_row(a, cutoff: int) -> list:
    row = [mp.exp(-a)]
    for i in range(1, cutoff):
        row.append(row[-1] * a / i)
    return row


def _tail_cutoff(a, tail_digits: int, factor: int = 2) -> int:
    # Chernoff: P(X >= k) <= e^{-a} (e a / k)^k for k > a. The bound below
    # covers the mass and the first moments outside the square [0, N)^2.
    eps = mp.mpf(10) ** (-tail_digits)
    k = int(mp.floor(a)) + 2
    while True:
        chern = mp.exp(-a) * (mp.e * a / k) ** k
        if factor * 2 * (1 + 2 * a) * chern < eps:
            return k + 1
        k += 1


def _tail_bound(a, cutoff: int, factor: int = 2):
    k = cutoff - 1
    return factor * 2 * (1 + 2 * a) * mp.exp(-a) * (mp.e * a / k) ** k


def _product_ideal(a, tail_digits: int) -> IdealSequence:
    n_cut = _tail_cutoff(a, tail_digits)
    row = _poisson_row(a, n_cut)
    entries = {(i, j): row[i] * row[j] for i in range(n_cut) for j in range(n_cut)}
    return IdealSequence(entries, n_cut, _tail_bound(a, n_cut))


def _tail_digits(digits: int) -> int:
    return max(TAIL_DIGITS, digits + 5)


def retention(gamma, t):
    """b(t) = (1 - t/gamma)^(2/3): survival probability of a non-pure copy."""
    return (1 - mp.mpf(t) / gamma) ** (mp.mpf(2) / 3)


def poisson_ideal(gamma, digits: int = DEFAULT_DIGITS) -> IdealSequence:
    """The 2D Poisson ideal ``e^{-3g} (3g/2)^{i+j} / (i! j!)``."""
    with mp.workdps(digits):
        gamma = mp.mpf(gamma)
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        return _product_ideal(3 * gamma / 2, _tail_digits(digits))


def ode_solution(gamma, t, digits: int = DEFAULT_DIGITS, verify: bool = False) -> IdealSequence:
    """Solution y_{i,j}(t) of the peeling ODE started from the Poisson ideal.

    With Poisson initial data the binomial-thinning sum collapses to a Poisson
    product with mean ``3 gamma b / 2`` per sign. With ``verify=True`` the
    general binomial form is evaluated too (for ``i, j <= 8``) and compared.
    """
    with mp.workdps(digits):
        gamma = mp.mpf(gamma)
        t = mp.mpf(t)
        if not 0 <= t < gamma:
            raise ValueError(f"t={t} outside [0, gamma)")
        b = retention(gamma, t)
        y = _product_ideal(3 * gamma * b / 2, _tail_digits(digits))
        if verify:
            general = ode_solution_general(gamma, t, 8, digits=digits)
            tol = mp.mpf(10) ** (-(digits - 25))
            for key, value in general.items():
                if abs(value - y[key]) > tol:
                    raise ArithmeticError(f"collapsed and general forms disagree at {key}")
        return y


def ode_solution_general(gamma, t, max_index: int, initial: IdealSequence | None = None,
                         digits: int = DEFAULT_DIGITS) -> dict[tuple[int, int], mp.mpf]:
    """y_{i,j}(t) for i, j <= max_index via the binomial-thinning double sum."""
    with mp.workdps(digits):
        gamma = mp.mpf(gamma)
        if initial is None:
            initial = poisson_ideal(gamma, digits)
        b = retention(gamma, mp.mpf(t))
        n_cut = initial.tail_cutoff
        # thin[k][i] = C(k, i) b^i (1-b)^(k-i)
        thin = [[mp.binomial(k, i) * b ** i * (1 - b) ** (k - i) if i <= k else mp.mpf(0)
                 for i in range(max_index + 1)] for k in range(n_cut)]
        partial = [[mp.fsum(initial[(k, l)] * thin[l][j] for l in range(j, n_cut))
                    for j in range(max_index + 1)] for k in range(n_cut)]
        return {(i, j): mp.fsum(thin[k][i] * partial[k][j] for k in range(i, n_cut))
                for i in range(max_index + 1) for j in range(max_index + 1)}


def pure_mass(gamma, t, digits: int = DEFAULT_DIGITS, method: str = "closed"):
    """Scaled number y0(t) of pure literal occurrences.

    ``y0 = 3g - 3t - sum_{i,j>0} (i+j) y_{i,j}(t)``. The ``closed`` method uses
    the Poisson moment identity ``sum = 3 g b (1 - e^{-3 g b / 2})``; ``series``
    sums the ODE solution entrywise.
    """
    with mp.workdps(digits):
        gamma = mp.mpf(gamma)
        t = mp.mpf(t)
        if method == "closed":
            b = retention(gamma, t)
            inner = 3 * gamma * b * (1 - mp.exp(-3 * gamma * b / 2))
        elif method == "series":
            y = ode_solution(gamma, t, digits)
            inner = mp.fsum((i + j) * v for (i, j), v in y.items() if i > 0 and j > 0)
        else:
            raise ValueError(f"unknown method {method!r}")
        return 3 * gamma - 3 * t - inner


@dataclass(frozen=True)
class StoppingTime:
    t: mp.mpf
    b: mp.mpf
    residual: mp.mpf


def stopping_time(gamma, tol=None, digits: int = DEFAULT_DIGITS, scan_steps: int = 10_000) -> StoppingTime:
    """Smallest positive root of the pure-occurrence mass y0.

    Scans ``t`` in steps of ``gamma / scan_steps`` for the first sign change,
    then bisects the bracket down to ``tol`` (default ``10^-(digits-5)``).
    """
    with mp.workdps(digits):
        gamma = mp.mpf(gamma)
        tol = mp.mpf(10) ** (-(digits - 5)) if tol is None else mp.mpf(tol)
        step = gamma / scan_steps
        lo = mp.mpf(0)
        f_lo = pure_mass(gamma, lo, digits)
        if f_lo <= 0:
            raise RootBracketError("no pure occurrences at t=0")
        for k in range(1, scan_steps):
            hi = k * step
            if pure_mass(gamma, hi, digits) <= 0:
                break
            lo = hi
        else:
            raise RootBracketError(f"y0 keeps its sign on (0, {gamma})")
        while hi - lo > tol:
            mid = (lo + hi) / 2
            if pure_mass(gamma, mid, digits) > 0:
                lo = mid
            else:
                hi = mid
        t = (lo + hi) / 2
        return StoppingTime(t, retention(gamma, t), pure_mass(gamma, t, digits))


def peeled_ideal(gamma, digits: int = DEFAULT_DIGITS, stop: StoppingTime | None = None) -> IdealSequence:
    """Ideal degree profile of the positively unbalanced impure core.

    For ``i >= j >= 1`` the entry is the surviving Poisson mass, doubled when
    ``i > j`` (variables with more negative copies are flipped onto it). Pure
    rows ``(i, 0)`` and ``(0, j)`` are empty at the stopping time, and all
    other variables end with no occurrences, so ``(0, 0)`` takes the rest.
    """
    with mp.workdps(digits):
        gamma = mp.mpf(gamma)
        if stop is None:
            stop = stopping_time(gamma, digits=digits)
        a = 3 * gamma * stop.b / 2
        n_cut = _tail_cutoff(a, _tail_digits(digits), factor=4)
        row = _poisson_row(a, n_cut)
        entries = {}
        for i in range(1, n_cut):
            for j in range(1, i + 1):
                entries[(i, j)] = (2 if i > j else 1) * row[i] * row[j]
        entries[(0, 0)] = 1 - mp.fsum(entries.values())
        return IdealSequence(dict(sorted(entries.items())), n_cut, _tail_bound(a, n_cut, factor=4))


@dataclass
class AnalyticParams:
    """All ideal quantities the first-moment computation needs at one density."""

    gamma: mp.mpf
    M: int
    digits: int
    t_D: mp.mpf
    b: mp.mpf
    delta_hat: IdealSequence = field(repr=False)
    gammahat: mp.mpf
    lambda_p: mp.mpf
    lambda_n: mp.mpf
    gammahat_k: tuple
    h_ps: mp.mpf
    h_ns: mp.mpf
    heavy_mass: mp.mpf

    def is_light(self, i: int, j: int) -> bool:
        return i <= self.M and j <= self.M

    def light(self) -> dict[tuple[int, int], mp.mpf]:
        """Entries of the peeled ideal over the light degree set (nonzero only)."""
        return {k: v for k, v in self.delta_hat.items() if self.is_light(*k) and v > 0}

    def check_identities(self, tol=None) -> None:
        with mp.workdps(self.digits):
            tol = mp.mpf(10) ** (-(self.digits - 10)) if tol is None else tol
            g0, g1, g2, g3 = self.gammahat_k
            checks = {
                "positive copies": g1 + 2 * g2 + 3 * g3 - self.lambda_p,
                "negative copies": 3 * g0 + 2 * g1 + g2 - self.lambda_n,
                "clause total": g0 + g1 + g2 + g3 - self.gammahat,
                "copy total": self.lambda_p + self.lambda_n - 3 * self.gammahat,
            }
            bad = {k: v for k, v in checks.items() if abs(v) > tol}
            if bad:
                raise ValueError(f"inconsistent analytic parameters: {bad}")

    def to_dict(self) -> dict:
        d = self.digits
        return {
            "gamma": mp.nstr(self.gamma, d),
            "M": self.M,
            "digits": d,
            "t_D": mp.nstr(self.t_D, d),
            "b": mp.nstr(self.b, d),
            "gammahat": mp.nstr(self.gammahat, d),
            "lambda_p": mp.nstr(self.lambda_p, d),
            "lambda_n": mp.nstr(self.lambda_n, d),
            "gammahat_k": [mp.nstr(g, d) for g in self.gammahat_k],
            "h_ps": mp.nstr(self.h_ps, d),
            "h_ns": mp.nstr(self.h_ns, d),
            "heavy_mass": mp.nstr(self.heavy_mass, d),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def clause_type_ideals(gamma, M: int = DEFAULT_M, digits: int = DEFAULT_DIGITS) -> AnalyticParams:
    """Derive every ideal quantity of the peeled, unbalanced model at ``gamma``."""
    if M < 1:
        raise ValueError("M must be at least 1")
    with mp.workdps(digits):
        gamma = mp.mpf(gamma)
        stop = stopping_time(gamma, digits=digits)
        dh = peeled_ideal(gamma, digits, stop=stop)
        lam_p = mp.fsum(i * v for (i, j), v in dh.items())
        lam_n = mp.fsum(j * v for (i, j), v in dh.items())
        ghat = (lam_p + lam_n) / 3
        total = lam_p + lam_n
        gk = tuple(mp.binomial(3, k) * lam_p ** k * lam_n ** (3 - k) / total ** 3 * ghat
                   for k in range(4))
        heavy = [(i, j, v) for (i, j), v in dh.items() if i > M or j > M]
        params = AnalyticParams(
            gamma=gamma, M=M, digits=digits, t_D=stop.t, b=stop.b, delta_hat=dh,
            gammahat=ghat, lambda_p=lam_p, lambda_n=lam_n, gammahat_k=gk,
            h_ps=mp.fsum(i * v for i, j, v in heavy),
            h_ns=mp.fsum(j * v for i, j, v in heavy),
            heavy_mass=mp.fsum(v for i, j, v in heavy),
        )
        params.check_identities()
        return params
