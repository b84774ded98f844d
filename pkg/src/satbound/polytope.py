"""The polytope of (t, f, h, c, ell) parameters for a fixed degree and clause
type sequence: exact constraint rows, LP checks of its boundary, and the
restricted maximisation of log F used by the grid sweep."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Iterable

import mpmath as mp
import numpy as np
from scipy.optimize import linprog

from .analytic import AnalyticParams
from .simplex import LPResult, solve_exact
from .structure import (
    LABELS, CoordinateIndex, PolytopePoint, clause_types, dimension, extended_degrees,
    light_degrees, log_F, to_mpf,
)

__all__ = [
    "ParameterError", "PolytopeData", "ConstraintSystem", "build_constraints", "residuals",
    "lp_min_coordinate", "LPReport", "InteriorReport", "strict_interior_point", "case2_point",
    "case3_direction", "verify_case3_direction", "SliceResult", "restricted_maximize",
    "ell_box", "grid_sweep", "SweepReport", "dimension", "PolytopePoint", "log_F",
]


class ParameterError(ValueError):
    pass


def _rational(v, digits: int) -> Fraction:
    return Fraction(mp.nstr(v, digits, min_fixed=-mp.inf, max_fixed=mp.inf)) if v else Fraction(0)


@dataclass
class PolytopeData:
    """Exact (d-hat, c-hat) data; d_hat is keyed by the light pairs (i, j)."""

    M: int
    d_hat: dict
    h_ps: Fraction
    h_ns: Fraction
    c_hat: tuple
    lambda_p: Fraction = None
    lambda_n: Fraction = None

    def __post_init__(self):
        self.d_hat = {k: Fraction(self.d_hat.get(k, 0)) for k in light_degrees(self.M)}
        self.h_ps, self.h_ns = Fraction(self.h_ps), Fraction(self.h_ns)
        self.c_hat = tuple(Fraction(c) for c in self.c_hat)
        if self.lambda_p is None:
            self.lambda_p = sum((i * d for (i, j), d in self.d_hat.items()), self.h_ps)
        if self.lambda_n is None:
            self.lambda_n = sum((j * d for (i, j), d in self.d_hat.items()), self.h_ns)
        self.lambda_p, self.lambda_n = Fraction(self.lambda_p), Fraction(self.lambda_n)

    def identity_gaps(self) -> dict:
        c0, c1, c2, c3 = self.c_hat
        return {
            "positive copies": c1 + 2 * c2 + 3 * c3 - self.lambda_p,
            "negative copies": 3 * c0 + 2 * c1 + c2 - self.lambda_n,
            "light positive": sum(i * d for (i, j), d in self.d_hat.items()) + self.h_ps - self.lambda_p,
            "light negative": sum(j * d for (i, j), d in self.d_hat.items()) + self.h_ns - self.lambda_n,
        }

    def check(self) -> None:
        bad = {k: v for k, v in self.identity_gaps().items() if v != 0}
        if bad:
            raise ParameterError(f"inconsistent polytope data: {bad}")
        if any(v < 0 for v in [*self.d_hat.values(), self.h_ps, self.h_ns, *self.c_hat]):
            raise ParameterError("negative polytope data")

    @classmethod
    def from_params(cls, params: AnalyticParams, digits: int | None = None) -> "PolytopeData":
        """Rationalise the ideal parameters so that the copy identities hold
        exactly: lambda comes from d-hat and c2, c3 are solved from c0, c1."""
        digits = params.digits if digits is None else digits
        with mp.workdps(params.digits):
            d_hat = {k: _rational(v, digits) for k, v in params.light().items()}
            h_ps = _rational(params.h_ps, digits)
            h_ns = _rational(params.h_ns, digits)
            c0 = _rational(params.gammahat_k[0], digits)
            c1 = _rational(params.gammahat_k[1], digits)
        data = cls(params.M, d_hat, h_ps, h_ns, (c0, c1, 0, 0))
        c2 = data.lambda_n - 3 * c0 - 2 * c1
        c3 = (data.lambda_p - c1 - 2 * c2) / 3
        data.c_hat = (c0, c1, c2, c3)
        with mp.workdps(params.digits):
            tol = mp.mpf(10) ** (-(digits - 10))
            for k, ck in enumerate(data.c_hat):
                if abs(to_mpf(ck) - params.gammahat_k[k]) > tol:
                    raise ParameterError(f"rationalised c_{k} drifted from the ideal value")
        data.check()
        return data

    def live(self, i: int, j: int) -> bool:
        return self.d_hat[(i, j)] > 0


@dataclass
class Row:
    label: str
    coeffs: dict  # coordinate position -> int
    rhs: Fraction


class ConstraintSystem:
    """Equality rows of the polytope over a fixed coordinate order.

    ``rows`` is the defining system; ``original_rows`` is the equivalent form
    that states every ell directly (kept for the equivalence check).
    """

    def __init__(self, data: PolytopeData):
        self.data = data
        self.M = data.M
        self.index = CoordinateIndex(data.M)
        self.K = len(self.index)
        self.rows = self._rows(original=False)
        self.original_rows = self._rows(original=True)

    def _rows(self, original: bool) -> list[Row]:
        ix, d, M = self.index, self.data, self.M
        rows = []
        for i, j in light_degrees(M):
            coeffs = {ix[("t", i, j)]: 1}
            coeffs.update({ix[("f", i, j, k)]: 1 for k in range(1, j + 1)})
            rows.append(Row(f"tf[{i},{j}]", coeffs, d.d_hat[(i, j)]))
        rows.append(Row("h", {ix[("h", "nsf")]: 1, ix[("h", "nsr")]: 1}, d.h_ns))
        for k in range(4):
            rows.append(Row(f"c[{k}]", {ix[("c", a.key)]: 1 for a in clause_types() if a.tp == k}, d.c_hat[k]))
        ell = {s: ix[("ell", s)] for s in LABELS}

        def tfh(label: str) -> tuple[dict, Fraction]:
            if label == "ps":
                co = {ix[("t", i, j)]: -i for i, j in light_degrees(M) if i}
                return co, d.h_ps
            if label == "pu":
                return {ix[("f", i, j, k)]: -i for i, j, k in extended_degrees(M) if i}, Fraction(0)
            if label == "nsf":
                co = {ix[("f", i, j, k)]: -k for i, j, k in extended_degrees(M)}
                co[ix[("h", "nsf")]] = -1
                return co, Fraction(0)
            if label == "nsr":
                co = {ix[("f", i, j, k)]: -(j - k) for i, j, k in extended_degrees(M) if j > k}
                co[ix[("h", "nsr")]] = -1
                return co, Fraction(0)
            return {ix[("t", i, j)]: -j for i, j in light_degrees(M) if j}, Fraction(0)

        def cell(label: str) -> dict:
            return {ix[("c", a.key)]: -a.count(label) for a in clause_types() if a.count(label)}

        if original:
            for s in LABELS:
                co, rhs = tfh(s)
                rows.append(Row(f"tfh-ell[{s}]", {ell[s]: 1, **co}, rhs))
            for s in LABELS:
                rows.append(Row(f"c-ell[{s}]", {ell[s]: 1, **cell(s)}, Fraction(0)))
        else:
            rows.append(Row("ell[p]", {ell["ps"]: 1, ell["pu"]: 1}, d.lambda_p))
            rows.append(Row("ell[n]", {ell["nsf"]: 1, ell["nsr"]: 1, ell["nu"]: 1}, d.lambda_n))
            for s in ("ps", "nsf", "nsr"):
                co, rhs = tfh(s)
                rows.append(Row(f"tfh-ell[{s}]", {ell[s]: 1, **co}, rhs))
            for s in ("ps", "nsf", "nsr"):
                rows.append(Row(f"c-ell[{s}]", {ell[s]: 1, **cell(s)}, Fraction(0)))
        return rows

    @property
    def m(self) -> int:
        return len(self.rows)

    def columns(self, rows: list[Row] | None = None) -> list[dict]:
        rows = self.rows if rows is None else rows
        cols: list[dict] = [{} for _ in range(self.K)]
        for r, row in enumerate(rows):
            for j, a in row.coeffs.items():
                cols[j][r] = a
        return cols

    def rhs(self) -> list[Fraction]:
        return [row.rhs for row in self.rows]

    def pinned(self) -> set[int]:
        """Positions forced to zero by a zero d-hat entry."""
        out = set()
        for (i, j), v in self.data.d_hat.items():
            if v == 0:
                out.add(self.index[("t", i, j)])
                out.update(self.index[("f", i, j, k)] for k in range(1, j + 1))
        return out

    def scales(self) -> list[Fraction]:
        """Natural size of each coordinate, used to measure interior margins."""
        d, ix = self.data, self.index
        w = [Fraction(0)] * self.K
        for (i, j), v in d.d_hat.items():
            w[ix[("t", i, j)]] = v / (j + 1)
            for k in range(1, j + 1):
                w[ix[("f", i, j, k)]] = v / (j + 1)
        w[ix[("h", "nsf")]] = w[ix[("h", "nsr")]] = d.h_ns / 2
        for a in clause_types():
            n_tp = sum(1 for b in clause_types() if b.tp == a.tp)
            w[ix[("c", a.key)]] = d.c_hat[a.tp] / n_tp
        for s in ("ps", "pu"):
            w[ix[("ell", s)]] = d.lambda_p / 2
        for s in ("nsf", "nsr", "nu"):
            w[ix[("ell", s)]] = d.lambda_n / 3
        return w


def build_constraints(source: AnalyticParams | PolytopeData, check: bool = True) -> ConstraintSystem:
    data = PolytopeData.from_params(source) if isinstance(source, AnalyticParams) else source
    if check:
        data.check()
    return ConstraintSystem(data)


def _as_vector(sys: ConstraintSystem, x) -> list:
    if isinstance(x, PolytopePoint):
        return sys.index.to_vector(x)
    vec = list(x)
    if len(vec) != sys.K:
        raise ValueError(f"point has {len(vec)} coordinates, expected {sys.K}")
    return vec


def residuals(sys: ConstraintSystem, x, original: bool = False) -> list:
    """Row-wise ``coeffs . x - rhs``; exact for Fractions, mpf otherwise."""
    vec = _as_vector(sys, x)
    exact = all(isinstance(v, (int, Fraction)) for v in vec)
    if not exact:
        vec = [to_mpf(v) for v in vec]
    conv = (lambda q: q) if exact else to_mpf
    out = []
    for row in (sys.original_rows if original else sys.rows):
        s = sum((a * vec[j] for j, a in row.coeffs.items()), Fraction(0) if exact else mp.mpf(0))
        out.append(s - conv(row.rhs))
    return out


def is_feasible(sys: ConstraintSystem, x, tol=0) -> bool:
    vec = _as_vector(sys, x)
    return all(v >= 0 for v in vec) and all(abs(r) <= tol for r in residuals(sys, vec))


# --- exact LPs --------------------------------------------------------------

@dataclass
class LPReport:
    coordinate: tuple
    value: Fraction | None
    status: str
    certified: bool
    method: str
    iterations: int

    def to_dict(self) -> dict:
        return {
            "coordinate": list(map(str, self.coordinate)),
            "value": None if self.value is None else str(self.value),
            "value_float": None if self.value is None else float(self.value),
            "status": self.status,
            "certified": self.certified,
            "method": self.method,
            "iterations": self.iterations,
        }


def lp_min_coordinate(sys: ConstraintSystem, coord: tuple, maximize: bool = False,
                      warm_start: bool = True) -> LPReport:
    """Exact minimum (or maximum) of one coordinate over the polytope."""
    j = sys.index[coord]
    res = solve_exact(sys.columns(), sys.rhs(), {j: -1 if maximize else 1}, warm_start)
    value = None if res.value is None else (-res.value if maximize else res.value)
    return LPReport(coord, value, res.status, res.certified, res.method, res.iterations)


@dataclass
class InteriorReport:
    point: PolytopePoint | None
    margin: Fraction  # largest s with x >= s * scale on every free coordinate
    min_coordinate: Fraction | None
    zero_coordinates: list
    lp: LPResult = field(repr=False, default=None)


def _margin_lp(sys: ConstraintSystem, fixed_zero: Iterable[int], warm_start: bool) -> InteriorReport:
    """max s subject to x = s*w + z, z >= 0, with the ``fixed_zero`` positions
    removed; w is :meth:`ConstraintSystem.scales`."""
    fixed = set(fixed_zero) | sys.pinned()
    keep = [j for j in range(sys.K) if j not in fixed]
    w = sys.scales()
    cols_all = sys.columns()
    cols = [cols_all[j] for j in keep]
    s_col: dict = {}
    for j in keep:
        for r, a in cols_all[j].items():
            s_col[r] = s_col.get(r, Fraction(0)) + a * w[j]
    s_col = {r: v for r, v in s_col.items() if v}
    cols.append(s_col)
    sidx = len(cols) - 1
    res = solve_exact(cols, sys.rhs(), {sidx: -1}, warm_start)
    if res.status != "optimal":
        return InteriorReport(None, Fraction(0), None, sorted(fixed), res)
    s = res.x.get(sidx, Fraction(0))
    vec = [Fraction(0)] * sys.K
    for pos, j in enumerate(keep):
        vec[j] = s * w[j] + res.x.get(pos, Fraction(0))
    point = sys.index.from_vector(vec)
    free = [vec[j] for j in keep]
    return InteriorReport(point if s > 0 else None, s, min(free) if free else None, sorted(fixed), res)


def strict_interior_point(sys: ConstraintSystem, warm_start: bool = True) -> InteriorReport:
    """A feasible point positive in every coordinate that is not pinned to zero
    by a zero d-hat entry; ``point`` is None when no such point exists."""
    return _margin_lp(sys, (), warm_start)


def case2_point(sys: ConstraintSystem, warm_start: bool = True) -> InteriorReport:
    """A feasible point where exactly the coordinates forced by ell_nsr = 0 vanish."""
    forced = {sys.index[k] for k in sys.index.forced()}
    forced.add(sys.index[("ell", "nsr")])
    return _margin_lp(sys, forced, warm_start)


def case3_direction(sys: ConstraintSystem, zeta=Fraction(1)) -> list:
    """Direction that trades ell_nsf for ell_nsr while keeping every row.

    Clause mass moves from three types to three others; on the variable side a
    degree (2, 2) zero-variable shifts one blocking occurrence to a regular one,
    and heavy negative copies shift the same way.
    """
    ix = sys.index
    vec = [Fraction(0)] * sys.K
    half = Fraction(zeta) / 2
    for key in [(1, 1, 1, 0), (1, 0, 0, 2), (2, 0, 1, 0)]:
        vec[ix[("c", key)]] += zeta
    for key in [(0, 1, 1, 1), (1, 0, 1, 1), (3, 0, 0, 0)]:
        vec[ix[("c", key)]] -= zeta
    vec[ix[("ell", "nsr")]] += zeta
    vec[ix[("ell", "nsf")]] -= zeta
    vec[ix[("f", 2, 2, 1)]] += half
    vec[ix[("f", 2, 2, 2)]] -= half
    vec[ix[("h", "nsr")]] += half
    vec[ix[("h", "nsf")]] -= half
    return vec


def verify_case3_direction(sys: ConstraintSystem, zeta=Fraction(1)) -> bool:
    """Exact check that the direction annihilates every equality row."""
    vec = case3_direction(sys, zeta)
    rows = sys.rows + sys.original_rows
    return all(sum((a * vec[j] for j, a in row.coeffs.items()), Fraction(0)) == 0 for row in rows)


# --- restricted maximisation -------------------------------------------------
#
# With ell fixed, log F = sum ell log ell + (entropy of t, f, h) + (entropy of
# c), and both entropy parts are maximised subject to block masses and three
# linear moments.  Their convex duals are three-dimensional; any dual point
# bounds the restricted maximum from above, and Newton converges to equality.

class _MomentProblem:
    """max -sum x log(x/w) s.t. block masses D_B and sum x*phi = target."""

    def __init__(self, masses, logw, feats):
        # logw, feats: (blocks, states) and (blocks, states, 3), padding -inf
        self.D = np.asarray(masses, dtype=float)
        self.logw = np.asarray(logw, dtype=float)
        self.feats = np.asarray(feats, dtype=float)

    def restrict(self, target) -> tuple["_MomentProblem", np.ndarray, np.ndarray] | None:
        target = np.asarray(target, dtype=float)
        keep = target > 0
        logw = self.logw.copy()
        drop = np.any(self.feats[:, :, ~keep] > 0, axis=2)
        logw[drop] = -np.inf
        live = self.D > 0
        if np.any(np.all(np.isneginf(logw[live]), axis=1)):
            return None
        return _MomentProblem(self.D[live], logw[live], self.feats[live][:, :, keep]), target[keep], keep

    def in_box(self, target, slack: float = 1e-12) -> bool:
        """Cheap necessary condition: each target inside its coordinate range."""
        if not hasattr(self, "_box"):
            f = np.where(np.isneginf(self.logw)[:, :, None], np.nan, self.feats)
            self._box = (self.D @ np.nanmin(f, axis=1), self.D @ np.nanmax(f, axis=1))
        lo, hi = self._box
        t = np.asarray(target, dtype=float)
        return bool(np.all(t >= lo - slack) and np.all(t <= hi + slack))

    def dual(self, u):
        a = self.logw + self.feats @ u
        amax = np.max(a, axis=1, keepdims=True)
        e = np.exp(a - amax)
        z = e.sum(axis=1, keepdims=True)
        p = e / z
        lz = (np.log(z) + amax)[:, 0]
        mean = np.einsum("bs,bsk->bk", p, self.feats)
        val = float(self.D @ lz)
        grad = self.D @ mean
        k = self.feats.shape[2]
        cen = (self.feats - mean[:, None, :]).reshape(-1, k)
        wts = (self.D[:, None] * p).reshape(-1)
        hess = (cen * wts[:, None]).T @ cen
        return val, grad, hess, p

    def maximize(self, target, max_iter: int = 200, tol: float = 1e-12):
        """Returns (value_upper_bound, converged, x, u) with x the primal point."""
        res = self.restrict(target)
        if res is None:
            return -math.inf, True, None, None
        prob, b, keep = res
        const = -float(prob.D @ np.log(prob.D))
        if b.size == 0:
            val, _, _, p = prob.dual(np.zeros(0))
            return const + val, True, (prob, p, keep), np.zeros(0)
        u = np.zeros(b.size)
        val, grad, hess, p = prob.dual(u)
        f = val - u @ b
        scale = max(1.0, float(np.max(np.abs(b))))
        converged = False
        for _ in range(max_iter):
            g = grad - b
            if np.max(np.abs(g)) < tol * scale:
                converged = True
                break
            try:
                step = -np.linalg.solve(hess + 1e-300 * np.eye(b.size), g)
            except np.linalg.LinAlgError:
                step = -g
            if not np.all(np.isfinite(step)):
                step = -g
            big = np.max(np.abs(step))
            if big > 5:
                step *= 5 / big
            t = 1.0
            while True:
                cand = u + t * step
                v2, g2, h2, p2 = prob.dual(cand)
                f2 = v2 - cand @ b
                if f2 <= f + 1e-4 * t * (g @ step) or t < 1e-10:
                    break
                t /= 2
            if f2 > f and t < 1e-10:
                break
            u, val, grad, hess, p, f = cand, v2, g2, h2, p2, f2
            if np.max(np.abs(u)) > 700:
                break
        return const + f, converged, (prob, p, keep), u


class _FeasibilityLP:
    """Reachability of a moment target, as one HiGHS model whose three
    target rows are re-bounded per query (warm-started dual simplex)."""

    def __init__(self, prob: _MomentProblem):
        import highspy

        live = prob.D > 0
        states = [(b, s) for b, s in np.argwhere(~np.isneginf(prob.logw)).tolist() if live[b]]
        rows = {b: r for r, b in enumerate(np.flatnonzero(live).tolist())}
        nb = len(rows)
        starts, index, value = [0], [], []
        for b, s in states:
            index.append(rows[b])
            value.append(1.0)
            for k in range(3):
                if prob.feats[b, s, k]:
                    index.append(nb + k)
                    value.append(float(prob.feats[b, s, k]))
            starts.append(len(index))
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        lp = highspy.HighsLp()
        lp.num_col_ = len(states)
        lp.num_row_ = nb + 3
        lp.col_cost_ = np.zeros(len(states))
        lp.col_lower_ = np.zeros(len(states))
        lp.col_upper_ = np.full(len(states), highspy.kHighsInf)
        bounds = np.concatenate([prob.D[live], np.zeros(3)])
        lp.row_lower_ = bounds
        lp.row_upper_ = bounds.copy()
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = np.array(starts, dtype=np.int32)
        lp.a_matrix_.index_ = np.array(index, dtype=np.int32)
        lp.a_matrix_.value_ = np.array(value)
        lp.a_matrix_.num_col_ = len(states)
        lp.a_matrix_.num_row_ = nb + 3
        h.passModel(lp)
        self.highs = h
        self.rows = np.arange(nb, nb + 3, dtype=np.int32)
        self.optimal = highspy.HighsModelStatus.kOptimal

    def feasible(self, target) -> bool:
        t = np.asarray(target, dtype=float)
        self.highs.changeRowsBounds(3, self.rows, t, t)
        self.highs.run()
        return self.highs.getModelStatus() == self.optimal


def _tfh_problem(data: PolytopeData) -> tuple[_MomentProblem, list]:
    M = data.M
    blocks, labels = [], []
    for (i, j), d in sorted(data.d_hat.items()):
        states = [(0.0, (i, 0, 0), ("t", i, j))]
        states += [(math.log(math.comb(j, k)), (0, k, j - k), ("f", i, j, k)) for k in range(1, j + 1)]
        blocks.append((float(d), states))
    blocks.append((float(data.h_ns), [(0.0, (0, 1, 0), ("h", "nsf")), (0.0, (0, 0, 1), ("h", "nsr"))]))
    return _pack(blocks)


def _clause_problem(data: PolytopeData) -> tuple[_MomentProblem, list]:
    blocks = []
    for k in range(4):
        states = [(math.log(2 / math.factorial(a.w)), (a.ps, a.nsf, a.nsr), ("c", a.key))
                  for a in clause_types() if a.tp == k]
        blocks.append((float(data.c_hat[k]), states))
    return _pack(blocks)


def _pack(blocks):
    nb = len(blocks)
    width = max(len(states) for _, states in blocks)
    logw = np.full((nb, width), -np.inf)
    feats = np.zeros((nb, width, 3))
    keys = []
    for b, (_, states) in enumerate(blocks):
        row = []
        for s, (lw, ph, key) in enumerate(states):
            logw[b, s] = lw
            feats[b, s] = ph
            row.append(key)
        keys.append(row)
    return _MomentProblem([m for m, _ in blocks], logw, feats), keys


@dataclass
class SliceResult:
    ell: tuple
    value: float  # restricted max of log F (an upper bound when not converged)
    feasible: bool
    converged: bool
    point: PolytopePoint | None = None


class SliceSolver:
    """Restricted maximiser for one polytope, reusable across many slices."""

    def __init__(self, sys: ConstraintSystem):
        self.sys = sys
        d = sys.data
        self.h_ps = float(d.h_ps)
        self.lambda_p = float(d.lambda_p)
        self.lambda_n = float(d.lambda_n)
        self.tfh, self.tfh_keys = _tfh_problem(d)
        self.cls, self.cls_keys = _clause_problem(d)
        self._feas: dict = {}

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_feas"] = {}
        return state

    def _lp_feasible(self, which: str, target) -> bool:
        lp = self._feas.get(which)
        if lp is None:
            lp = self._feas[which] = _FeasibilityLP(self.tfh if which == "tfh" else self.cls)
        return lp.feasible(target)

    def solve(self, ell, want_point: bool = False) -> SliceResult:
        ell = tuple(float(v) for v in ell)
        ps, pu, nsf, nsr, nu = ell
        tol = 1e-9 * max(1.0, self.lambda_p + self.lambda_n)
        if (min(ell) < 0 or abs(ps + pu - self.lambda_p) > tol or abs(nsf + nsr + nu - self.lambda_n) > tol
                or ps < self.h_ps):
            return SliceResult(ell, -math.inf, False, True)
        t1, t2 = (ps - self.h_ps, nsf, nsr), (ps, nsf, nsr)
        if not (self.tfh.in_box(t1) and self.cls.in_box(t2)):
            return SliceResult(ell, -math.inf, False, True)
        v1, c1, x1, _ = self.tfh.maximize(t1)
        v2, c2, x2, _ = self.cls.maximize(t2)
        converged = c1 and c2
        feasible = math.isfinite(v1) and math.isfinite(v2)
        if feasible and not converged:
            feasible = (self._lp_feasible("tfh", (ps - self.h_ps, nsf, nsr))
                        and self._lp_feasible("cls", (ps, nsf, nsr)))
        if not feasible:
            return SliceResult(ell, -math.inf, False, converged)
        value = sum(v * math.log(v) for v in ell if v > 0) + v1 + v2
        point = self._point(ell, x1, x2) if want_point and converged else None
        return SliceResult(ell, value, True, converged, point)

    def _point(self, ell, x1, x2) -> PolytopePoint:
        point = PolytopePoint(ell=dict(zip(LABELS, ell)))
        point.t = {k: 0.0 for k in light_degrees(self.sys.M)}
        point.f = {k: 0.0 for k in extended_degrees(self.sys.M)}
        point.c = {a.key: 0.0 for a in clause_types()}
        h = {"nsf": 0.0, "nsr": 0.0}
        for (prob, p, _), keys, full in ((x1, self.tfh_keys, self.tfh), (x2, self.cls_keys, self.cls)):
            live = [row for row, m in zip(keys, full.D) if m > 0]
            for b, row in enumerate(live):
                for s, key in enumerate(row):
                    v = float(prob.D[b] * p[b, s])
                    if key[0] == "t":
                        point.t[key[1:]] = v
                    elif key[0] == "f":
                        point.f[key[1:]] = v
                    elif key[0] == "h":
                        h[key[1]] = v
                    else:
                        point.c[key[1]] = v
        point.h = (h["nsf"], h["nsr"])
        return point


def restricted_maximize(sys: ConstraintSystem, ell_fixed, want_point: bool = True) -> SliceResult:
    """Maximum of log F over the slice with all five ell fixed (float64).

    ``ell_fixed`` is ordered (ps, pu, nsf, nsr, nu).  Slices that break the ell
    sums, or whose moment targets are unreachable, come back infeasible with
    value -inf.
    """
    return SliceSolver(sys).solve(ell_fixed, want_point)


# --- grid sweep ------------------------------------------------------------

class EllProjection:
    """Sandwich of the projection of P onto (ell_ps, ell_nsf, ell_nsr).

    ``outer`` are supporting half-spaces (every feasible point satisfies
    them), ``inner`` is the hull of support points (every point of it is
    feasible).  Points between the two are undecided.
    """

    def __init__(self, support_points: np.ndarray, outer: tuple, inner: tuple, support_calls: int):
        self.support_points = support_points
        self.outer = outer
        self.inner = inner
        self.support_calls = support_calls

    def box(self) -> dict[str, tuple[float, float]]:
        lo, hi = self.support_points.min(axis=0), self.support_points.max(axis=0)
        return {s: (float(lo[k]), float(hi[k])) for k, s in enumerate(("ps", "nsf", "nsr"))}

    def classify(self, point, band: float = 1e-7) -> int:
        """1 surely feasible, -1 surely infeasible, 0 undecided."""
        x = np.asarray(point, dtype=float)
        if float(np.max(self.outer[0] @ x - self.outer[1])) > band:
            return -1
        if float(np.max(self.inner[0] @ x - self.inner[1])) < -band:
            return 1
        return 0


class _SupportLP:
    """max u . (ell_ps, ell_nsf, ell_nsr) over P with a reusable HiGHS model."""

    def __init__(self, sys: ConstraintSystem):
        import highspy

        cols = sys.columns()
        b = np.array([float(v) for v in sys.rhs()])
        starts, index, value = [0], [], []
        for col in cols:
            for r, a in sorted(col.items()):
                index.append(r)
                value.append(float(a))
            starts.append(len(index))
        K, m = len(cols), sys.m
        lp = highspy.HighsLp()
        lp.num_col_, lp.num_row_ = K, m
        lp.col_cost_ = np.zeros(K)
        lp.col_lower_ = np.zeros(K)
        lp.col_upper_ = np.full(K, highspy.kHighsInf)
        lp.row_lower_, lp.row_upper_ = b, b.copy()
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = np.array(starts, dtype=np.int32)
        lp.a_matrix_.index_ = np.array(index, dtype=np.int32)
        lp.a_matrix_.value_ = np.array(value)
        lp.a_matrix_.num_col_, lp.a_matrix_.num_row_ = K, m
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("random_seed", 0)
        h.passModel(lp)
        self.h = h
        self.cols = np.array([sys.index[("ell", s)] for s in ("ps", "nsf", "nsr")], dtype=np.int32)
        self.optimal = highspy.HighsModelStatus.kOptimal
        self.calls = 0

    def __call__(self, u) -> np.ndarray:
        self.calls += 1
        self.h.changeColsCost(3, self.cols, -np.asarray(u, dtype=float))
        self.h.run()
        if self.h.getModelStatus() != self.optimal:
            raise ParameterError(f"support LP failed: {self.h.modelStatusToString(self.h.getModelStatus())}")
        x = np.asarray(self.h.getSolution().col_value)
        return x[self.cols]


def _sphere(count: int) -> np.ndarray:
    """Deterministic, roughly uniform unit vectors (Fibonacci lattice)."""
    k = np.arange(count) + 0.5
    z = 1 - 2 * k / count
    r = np.sqrt(1 - z * z)
    phi = k * math.pi * (3 - math.sqrt(5))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def ell_projection(sys: ConstraintSystem, directions: int = 256) -> EllProjection:
    """Outer and inner polyhedral bounds on the projection of P onto the
    three free ell coordinates, from support LPs in fixed directions."""
    from scipy.spatial import ConvexHull

    support = _SupportLP(sys)
    dirs = np.concatenate([np.eye(3), -np.eye(3), _sphere(directions)])
    pts = np.array([support(u) for u in dirs])
    outer = (dirs, np.einsum("dk,dk->d", dirs, pts))
    verts = np.unique(np.round(pts, 12), axis=0)
    try:
        hull = ConvexHull(verts)
        inner = (hull.equations[:, :3], -hull.equations[:, 3])
    except Exception:  # flat projection: nothing is surely inside
        inner = (np.zeros((1, 3)), np.full(1, -1.0))
    return EllProjection(pts, outer, inner, support.calls)


def ell_box(sys: ConstraintSystem) -> dict[str, tuple[float, float]]:
    """Ranges of ell_ps, ell_nsf, ell_nsr over the polytope."""
    return ell_projection(sys).box()


@dataclass
class SweepReport:
    grid: int
    box: dict
    rows: list  # (ell_ps, ell_nsf, ell_nsr, feasible, value)
    best: tuple | None
    best_value: float
    feasible_count: int
    unconverged_count: int

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["ell_ps", "ell_nsf", "ell_nsr", "feasible", "slice_max"])
            for ps, nsf, nsr, feas, val in self.rows:
                w.writerow([repr(ps), repr(nsf), repr(nsr), int(feas),
                            mp.nstr(mp.mpf(val), 30) if feas else ""])


def _grid_points(box: dict, grid: int):
    axes = []
    for s in ("ps", "nsf", "nsr"):
        lo, hi = box[s]
        axes.append([lo + (k + 0.5) * (hi - lo) / grid for k in range(grid)])
    for a in axes[0]:
        for b in axes[1]:
            for c in axes[2]:
                yield a, b, c


def _sweep_chunk(args):
    sys, points, proj = args
    solver = SliceSolver(sys)
    lp, ln = solver.lambda_p, solver.lambda_n
    out = []
    for ps, nsf, nsr in points:
        side = proj.classify((ps, nsf, nsr)) if proj is not None else 0
        if side < 0:
            out.append((ps, nsf, nsr, False, -math.inf, True))
            continue
        res = solver.solve((ps, lp - ps, nsf, nsr, ln - nsf - nsr))
        out.append((ps, nsf, nsr, res.feasible, res.value, res.converged))
    return out


def grid_sweep(sys: ConstraintSystem, grid_per_dim: int = 20, jobs: int = 1, box: dict | None = None) -> SweepReport:
    """Cell-centred grid over the ell box; one restricted maximisation per cell."""
    if grid_per_dim < 2:
        raise ValueError("grid_per_dim must be at least 2")
    proj = ell_projection(sys)
    box = proj.box() if box is None else box
    points = list(_grid_points(box, grid_per_dim))
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        size = math.ceil(len(points) / jobs)
        chunks = [(sys, points[k:k + size], proj) for k in range(0, len(points), size)]
        with ProcessPoolExecutor(jobs) as ex:
            results = [r for part in ex.map(_sweep_chunk, chunks) for r in part]
    else:
        results = _sweep_chunk((sys, points, proj))
    rows = [r[:5] for r in results]
    best, best_value = None, -math.inf
    for n, (ps, nsf, nsr, feas, val) in enumerate(rows):
        if feas and val > best_value:  # first index wins ties
            best, best_value = (ps, nsf, nsr), val
    return SweepReport(
        grid=grid_per_dim, box=box, rows=rows, best=best, best_value=best_value,
        feasible_count=sum(1 for r in rows if r[3]),
        unconverged_count=sum(1 for r in results if r[3] and not r[5]),
    )
