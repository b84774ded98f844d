"""Exact rational simplex for sparse equality-form LPs.

    minimize c.x  subject to  A x = b,  x >= 0

Columns are sparse dicts ``{row: coefficient}``.  Every row also owns an
artificial variable fixed to zero; the cold start uses those as the initial
basis.  A floating-point basis (from HiGHS) can be passed as a warm start; the
exact iterations then only repair what the float solve got wrong.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

ZERO = Fraction(0)


class SingularBasisError(ArithmeticError):
    pass


class LUFactor:
    """Sparse exact Gaussian elimination of a square basis matrix."""

    def __init__(self, cols: list[dict], m: int):
        if len(cols) != m:
            raise SingularBasisError(f"basis has {len(cols)} columns for {m} rows")
        rows: list[dict] = [{} for _ in range(m)]
        col_rows: list[set] = [set() for _ in range(m)]
        for pos, col in enumerate(cols):
            for r, v in col.items():
                if v:
                    rows[r][pos] = Fraction(v)
                    col_rows[pos].add(r)
        ops = []
        pivots = []
        remaining = set(range(m))
        for _ in range(m):
            pos = min(remaining, key=lambda p: (len(col_rows[p]), p))
            if not col_rows[pos]:
                raise SingularBasisError("singular basis")
            r = min(col_rows[pos], key=lambda q: (len(rows[q]), q))
            piv = rows[r][pos]
            prow = rows[r]
            for t in list(col_rows[pos]):
                if t == r:
                    continue
                mul = rows[t][pos] / piv
                trow = rows[t]
                for c, v in prow.items():
                    nv = trow.get(c, ZERO) - mul * v
                    if nv:
                        trow[c] = nv
                        col_rows[c].add(t)
                    else:
                        trow.pop(c, None)
                        col_rows[c].discard(t)
                ops.append((t, r, mul))
            for c in prow:
                col_rows[c].discard(r)
            remaining.discard(pos)
            pivots.append((r, pos))
        self.m = m
        self.rows = rows
        self.ops = ops
        self.pivots = pivots
        self.ucol: list[list] = [[] for _ in range(m)]
        for r, pos in pivots:
            for c in rows[r]:
                if c != pos:
                    self.ucol[c].append(r)

    def solve(self, rhs) -> list:
        """x with B x = rhs (rhs indexed by row, x by basis position)."""
        bb = list(rhs)
        for t, r, mul in self.ops:
            if bb[r]:
                bb[t] -= mul * bb[r]
        x = [ZERO] * self.m
        for r, pos in reversed(self.pivots):
            row = self.rows[r]
            s = bb[r]
            for c, v in row.items():
                if c != pos and x[c]:
                    s -= v * x[c]
            x[pos] = s / row[pos]
        return x

    def solve_transpose(self, rhs) -> list:
        """y with B^T y = rhs (rhs indexed by basis position, y by row)."""
        z = [ZERO] * self.m
        for r, pos in self.pivots:
            s = Fraction(rhs[pos])
            for q in self.ucol[pos]:
                if z[q]:
                    s -= self.rows[q][pos] * z[q]
            z[r] = s / self.rows[r][pos]
        for t, r, mul in reversed(self.ops):
            if z[t]:
                z[r] -= mul * z[t]
        return z


@dataclass
class LPResult:
    status: str  # "optimal", "infeasible" or "unbounded"
    value: Fraction | None
    x: dict = field(default_factory=dict)
    y: list = field(default_factory=list)
    basis: list = field(default_factory=list)
    iterations: int = 0
    certified: bool = False
    method: str = ""


class ExactLP:
    def __init__(self, columns: list[dict], b: list):
        self.columns = columns
        self.b = [Fraction(v) for v in b]
        self.m = len(b)
        self.n = len(columns)

    def column(self, j: int) -> dict:
        return self.columns[j] if j < self.n else {j - self.n: 1}

    def _reduced_costs(self, y, cost_of) -> list:
        out = []
        for j, col in enumerate(self.columns):
            s = cost_of(j)
            for r, v in col.items():
                if y[r]:
                    s -= y[r] * v
            out.append(s)
        return out

    def solve(self, cost: dict, basis: list | None = None, max_iter: int = 200_000,
              bland_after: int = 30) -> LPResult:
        """Minimise ``sum(cost[j] * x[j])``; ``basis`` lists basic variables
        (``j >= n`` is the artificial of row ``j - n``)."""
        cost = {j: Fraction(v) for j, v in cost.items() if v}
        basis = list(range(self.n, self.n + self.m)) if basis is None else list(basis)
        degenerate = 0
        for it in range(max_iter):
            lu = LUFactor([self.column(j) for j in basis], self.m)
            xb = lu.solve(self.b)
            art = [j >= self.n for j in basis]
            bad = [i for i in range(self.m) if xb[i] < 0 or (art[i] and xb[i] > 0)]
            phase1 = bool(bad)
            if phase1:
                badset = set(bad)
                cb = [(-1 if xb[i] < 0 else 1) if i in badset else 0 for i in range(self.m)]
                y = lu.solve_transpose(cb)
                d = self._reduced_costs(y, lambda j: ZERO)
            else:
                cb = [cost.get(j, ZERO) if j < self.n else ZERO for j in basis]
                y = lu.solve_transpose(cb)
                d = self._reduced_costs(y, lambda j: cost.get(j, ZERO))
            in_basis = set(basis)
            cands = [j for j in range(self.n) if d[j] < 0 and j not in in_basis]
            if not cands:
                if phase1:
                    return LPResult("infeasible", None, y=y, basis=basis, iterations=it)
                x = {j: v for j, v in zip(basis, xb) if j < self.n and v}
                value = sum((cost.get(j, ZERO) * v for j, v in x.items()), ZERO)
                return LPResult("optimal", value, x=x, y=y, basis=basis, iterations=it)
            if degenerate >= bland_after:
                q = cands[0]
            else:
                q = min(cands, key=lambda j: (d[j], j))
            w = lu.solve([self.column(q).get(r, 0) for r in range(self.m)])
            theta, leave = None, None
            for i in range(self.m):
                if not w[i]:
                    continue
                x_i, delta = xb[i], -w[i]
                upper = ZERO if art[i] else None
                lim = None
                if delta < 0:
                    if x_i >= 0:
                        lim = (x_i if upper is None or x_i <= upper else x_i - upper) / -delta
                else:
                    if x_i < 0:
                        lim = -x_i / delta
                    elif upper is not None and x_i <= upper:
                        lim = (upper - x_i) / delta
                if lim is None:
                    continue
                if theta is None or lim < theta or (lim == theta and basis[i] < basis[leave]):
                    theta, leave = lim, i
            if theta is None:
                if phase1:
                    raise ArithmeticError("phase 1 step without a limit")
                return LPResult("unbounded", None, y=y, basis=basis, iterations=it)
            degenerate = degenerate + 1 if theta == 0 else 0
            basis[leave] = q
        raise ArithmeticError(f"simplex iteration limit {max_iter} reached")


def verify_optimal(columns: list[dict], b: list, cost: dict, x: dict, y: list) -> bool:
    """Primal feasibility, dual feasibility and equal objectives, exactly."""
    m = len(b)
    ax = [ZERO] * m
    for j, v in x.items():
        if v < 0:
            return False
        for r, a in columns[j].items():
            ax[r] += a * v
    if any(ax[r] != b[r] for r in range(m)):
        return False
    for j, col in enumerate(columns):
        d = Fraction(cost.get(j, 0)) - sum((y[r] * a for r, a in col.items()), ZERO)
        if d < 0:
            return False
    primal = sum((Fraction(cost.get(j, 0)) * v for j, v in x.items()), ZERO)
    dual = sum((y[r] * b[r] for r in range(m)), ZERO)
    return primal == dual


def verify_farkas(columns: list[dict], b: list, y: list) -> bool:
    """y.A <= 0 and y.b > 0 proves A x = b, x >= 0 has no solution."""
    if sum((y[r] * Fraction(b[r]) for r in range(len(b))), ZERO) <= 0:
        return False
    return all(sum((y[r] * a for r, a in col.items()), ZERO) <= 0 for col in columns)


def highs_basis(columns: list[dict], b: list, cost: dict, m: int) -> tuple[list, str]:
    """Solve the LP in double precision with HiGHS and return its basis in the
    convention of :class:`ExactLP` together with the HiGHS model status."""
    import highspy

    n = len(columns)
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("random_seed", 0)
    lp = highspy.HighsLp()
    lp.num_col_ = n
    lp.num_row_ = m
    lp.col_cost_ = np.array([float(cost.get(j, 0)) for j in range(n)])
    lp.col_lower_ = np.zeros(n)
    lp.col_upper_ = np.full(n, highspy.kHighsInf)
    bf = np.array([float(v) for v in b])
    lp.row_lower_ = bf
    lp.row_upper_ = bf
    starts, index, value = [0], [], []
    for col in columns:
        for r, v in sorted(col.items()):
            index.append(r)
            value.append(float(v))
        starts.append(len(index))
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = np.array(starts, dtype=np.int32)
    lp.a_matrix_.index_ = np.array(index, dtype=np.int32)
    lp.a_matrix_.value_ = np.array(value)
    lp.a_matrix_.num_col_ = n
    lp.a_matrix_.num_row_ = m
    h.passModel(lp)
    h.run()
    status = h.modelStatusToString(h.getModelStatus())
    basis = h.getBasis()
    if not basis.valid:
        return [], status
    basic = highspy.HighsBasisStatus.kBasic
    out = [j for j, s in enumerate(basis.col_status) if s == basic]
    out += [n + r for r, s in enumerate(basis.row_status) if s == basic]
    return out, status


def solve_exact(columns: list[dict], b: list, cost: dict, warm_start: bool = True) -> LPResult:
    """Exact LP optimum with a checked certificate."""
    lp = ExactLP(columns, b)
    basis, method = None, "exact simplex (cold)"
    if warm_start:
        hb, status = highs_basis(columns, b, cost, lp.m)
        if len(hb) == lp.m:
            basis, method = hb, f"HiGHS basis ({status}) + exact simplex"
    try:
        res = lp.solve(cost, basis)
    except SingularBasisError:
        res = lp.solve(cost, None)
        method = "exact simplex (cold)"
    res.method = method
    if res.status == "optimal":
        res.certified = verify_optimal(columns, lp.b, cost, res.x, res.y)
    elif res.status == "infeasible":
        res.certified = verify_farkas(columns, lp.b, res.y)
    return res
