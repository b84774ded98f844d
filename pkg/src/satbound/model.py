"""Random 3-CNF formulas and configurations.

A configuration is a degree sequence with labelled copies of every literal,
partitioned into triples.  Copies are numbered canonically: variable by
variable, the positive copies of a variable first and then its negative ones.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

__all__ = [
    "CapacityError", "InconsistentDegreeError", "Formula", "Configuration", "DegreeSequence",
    "ClauseTypeSequence", "clause_count", "sample_uniform_formula", "degree_sequence",
    "scaled_clause_count", "sample_configuration", "configuration_from_degrees", "configuration_from_formula",
    "variable_degrees", "clause_count", "project",
    "is_simple", "clause_type_sequence", "literal_counts", "in_neighborhood",
    "realize_degree_sequence",
]


class CapacityError(ValueError):
    pass


class InconsistentDegreeError(ValueError):
    pass


def clause_count(n: int, gamma) -> int:
    """m = floor(gamma * n), computed exactly from the decimal form of gamma."""
    g = gamma if isinstance(gamma, Fraction) else Fraction(str(gamma))
    return math.floor(g * n)


@dataclass
class Formula:
    """Clauses are tuples of nonzero signed variable indices (DIMACS style).

    With ``strict`` the usual invariants are enforced: three distinct
    variables per clause and no repeated clause.  Projections of
    configurations are built with ``strict=False``.
    """

    n: int
    clauses: list
    strict: bool = True

    def __post_init__(self):
        self.clauses = [tuple(sorted(c, key=lambda l: (abs(l), l))) for c in self.clauses]
        for c in self.clauses:
            if len(c) != 3 or any(l == 0 or abs(l) > self.n for l in c):
                raise ValueError(f"bad clause {c} for n={self.n}")
        if self.strict:
            if any(len({abs(l) for l in c}) != 3 for c in self.clauses):
                raise ValueError("clause repeats a variable")
            if len(set(self.clauses)) != len(self.clauses):
                raise ValueError("repeated clause")

    @property
    def m(self) -> int:
        return len(self.clauses)

    def is_simple(self) -> bool:
        return (all(len({abs(l) for l in c}) == 3 for c in self.clauses)
                and len(set(self.clauses)) == len(self.clauses))

    def to_dimacs(self) -> str:
        lines = [f"p cnf {self.n} {self.m}"]
        lines += [" ".join(map(str, c)) + " 0" for c in self.clauses]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_dimacs(cls, text: str, strict: bool = True) -> "Formula":
        n = None
        clauses, cur = [], []
        for line in text.splitlines():
            line = line.strip()
            if not line or line[0] in "c%":
                continue
            if line.startswith("p"):
                parts = line.split()
                if len(parts) != 4 or parts[1] != "cnf":
                    raise ValueError(f"bad problem line: {line}")
                n = int(parts[2])
                continue
            for tok in line.split():
                v = int(tok)
                if v == 0:
                    clauses.append(tuple(cur))
                    cur = []
                else:
                    cur.append(v)
        if cur:
            clauses.append(tuple(cur))
        if n is None:
            raise ValueError("missing problem line")
        return cls(n, clauses, strict)

    def write(self, path) -> None:
        Path(path).write_text(self.to_dimacs())

    @classmethod
    def read(cls, path, strict: bool = True) -> "Formula":
        return cls.from_dimacs(Path(path).read_text(), strict)


@dataclass
class DegreeSequence:
    """Scaled counts d[(i, j)] = #{variables with degree (i, j)} / n."""

    entries: dict
    n: int

    def __post_init__(self):
        self.entries = {k: Fraction(v) for k, v in self.entries.items() if v}
        if any(v < 0 for v in self.entries.values()):
            raise ValueError("negative degree-sequence entry")

    def __getitem__(self, key) -> Fraction:
        return self.entries.get(key, Fraction(0))

    def items(self):
        return self.entries.items()

    def total(self) -> Fraction:
        return sum(self.entries.values(), Fraction(0))

    def counts(self) -> dict:
        """Unscaled counts; raises if some n * d is not an integer."""
        out = {}
        for k, v in self.entries.items():
            c = v * self.n
            if c.denominator != 1:
                raise InconsistentDegreeError(f"n*d{k} = {c} is not an integer")
            out[k] = int(c)
        return out

    def as_float(self) -> dict:
        return {k: float(v) for k, v in self.entries.items()}


@dataclass(frozen=True)
class ClauseTypeSequence:
    c: tuple  # c0..c3 as Fractions

    def __getitem__(self, k: int) -> Fraction:
        return self.c[k]

    def total(self) -> Fraction:
        return sum(self.c, Fraction(0))


@dataclass
class Configuration:
    """Labelled-copy configuration.

    ``degrees[v] = (i, j)`` for variable v (0-based); ``clauses`` is an (m, 3)
    array of copy ids in the canonical numbering.
    """

    n: int
    degrees: np.ndarray
    clauses: np.ndarray
    _offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.degrees = np.asarray(self.degrees, dtype=np.int64).reshape(self.n, 2)
        self.clauses = np.asarray(self.clauses, dtype=np.int64).reshape(-1, 3)
        per_var = self.degrees.sum(axis=1)
        self._offsets = np.concatenate([[0], np.cumsum(per_var)])

    @property
    def copy_count(self) -> int:
        return int(self._offsets[-1])

    @property
    def m(self) -> int:
        return len(self.clauses)

    def copy_variable(self) -> np.ndarray:
        """Variable (0-based) owning each copy id."""
        return np.repeat(np.arange(self.n), self.degrees.sum(axis=1))

    def copy_sign(self) -> np.ndarray:
        """+1 for positive copies, -1 for negative ones, by copy id."""
        var = self.copy_variable()
        pos_in_var = np.arange(self.copy_count) - self._offsets[var]
        return np.where(pos_in_var < self.degrees[var, 0], 1, -1)

    def copy_label(self, cid: int) -> tuple[int, int, int]:
        """(variable, sign, ordinal) of a copy id."""
        v = int(np.searchsorted(self._offsets, cid, side="right") - 1)
        k = cid - int(self._offsets[v])
        i = int(self.degrees[v, 0])
        return (v + 1, 1, k) if k < i else (v + 1, -1, k - i)

    def literal_array(self) -> np.ndarray:
        """(m, 3) signed DIMACS literals of the clauses."""
        lit = (self.copy_variable() + 1) * self.copy_sign()
        return lit[self.clauses]

    def validate(self) -> None:
        if self.copy_count % 3:
            raise InconsistentDegreeError("copy count not divisible by 3")
        flat = np.sort(self.clauses.ravel())
        if len(flat) != self.copy_count or not np.array_equal(flat, np.arange(self.copy_count)):
            raise ValueError("clauses do not partition the copies")

    def canonical(self) -> tuple:
        """Order-independent form for structural comparison."""
        return (self.n, tuple(map(tuple, self.degrees.tolist())),
                tuple(sorted(tuple(sorted(c)) for c in self.clauses.tolist())))

    def __eq__(self, other) -> bool:
        return isinstance(other, Configuration) and self.canonical() == other.canonical()

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "copies": self.degrees.tolist(), "clauses": self.clauses.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "Configuration":
        obj = json.loads(text)
        conf = cls(obj["n"], obj["copies"], obj["clauses"])
        conf.validate()
        return conf


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def sample_uniform_formula(n: int, gamma, seed=None) -> Formula:
    """Uniform member of F_{n,m}, m = floor(gamma n), by rejecting repeats."""
    if n < 3:
        raise CapacityError("need at least 3 variables")
    m = clause_count(n, gamma)
    if m > 8 * math.comb(n, 3):
        raise CapacityError(f"{m} distinct clauses do not fit on {n} variables")
    rng = _rng(seed)
    seen: set = set()
    rows = []
    while len(rows) < m:
        k = max(16, int(1.2 * (m - len(rows))) + 8)
        v = rng.integers(1, n + 1, size=(k, 3))
        s = rng.integers(0, 2, size=(k, 3)) * 2 - 1
        for vv, ss in zip(v.tolist(), s.tolist()):
            if vv[0] == vv[1] or vv[0] == vv[2] or vv[1] == vv[2]:
                continue
            clause = tuple(sorted(a * b for a, b in zip(vv, ss)))
            if clause in seen:
                continue
            seen.add(clause)
            rows.append(clause)
            if len(rows) == m:
                break
    return Formula(n, rows)


def _literal_matrix(x) -> tuple[int, np.ndarray]:
    if isinstance(x, Configuration):
        return x.n, x.literal_array()
    return x.n, np.array(x.clauses, dtype=np.int64).reshape(-1, 3)


def variable_degrees(x) -> np.ndarray:
    """(n, 2) array of positive and negative occurrence counts."""
    if isinstance(x, Configuration):
        return x.degrees.copy()
    n, lits = _literal_matrix(x)
    deg = np.zeros((n, 2), dtype=np.int64)
    flat = lits.ravel()
    np.add.at(deg, (np.abs(flat) - 1, (flat < 0).astype(np.int64)), 1)
    return deg


def degree_sequence(x) -> DegreeSequence:
    deg = variable_degrees(x)
    cnt = Counter(map(tuple, deg.tolist()))
    return DegreeSequence({k: Fraction(v, x.n) for k, v in cnt.items()}, x.n)


def scaled_clause_count(d) -> Fraction:
    """(1/3) sum (i+j) d_ij; exact for concrete sequences."""
    if isinstance(d, DegreeSequence):
        copies = sum(((i + j) * c for (i, j), c in d.counts().items()), 0)
        if copies % 3:
            raise InconsistentDegreeError(f"{copies} copies cannot be split into triples")
        return Fraction(copies, 3 * d.n)
    return sum((i + j) * v for (i, j), v in d.items()) / 3


def literal_counts(d) -> tuple:
    """(ell_plus, ell_minus) = (sum i d_ij, sum j d_ij)."""
    zero = Fraction(0) if isinstance(d, DegreeSequence) else 0
    return (sum((i * v for (i, j), v in d.items()), zero), sum((j * v for (i, j), v in d.items()), zero))


def configuration_from_degrees(degrees, seed=None) -> Configuration:
    """Uniform random partition of the copies of the given per-variable degrees."""
    degrees = np.asarray(degrees, dtype=np.int64).reshape(-1, 2)
    total = int(degrees.sum())
    if total % 3:
        raise InconsistentDegreeError(f"{total} copies cannot be split into triples")
    perm = _rng(seed).permutation(total)
    return Configuration(len(degrees), degrees, perm.reshape(-1, 3))


def sample_configuration(d: DegreeSequence, seed=None, shuffle_variables: bool = True) -> Configuration:
    """Uniform configuration with degree sequence d.

    Degrees are handed to variables in a uniformly random order (or sorted by
    degree when ``shuffle_variables`` is false); copies are then matched by a
    uniform random permutation cut into consecutive triples.
    """
    counts = d.counts()
    if sum(counts.values()) != d.n:
        raise InconsistentDegreeError(f"degree counts sum to {sum(counts.values())}, not n={d.n}")
    scaled_clause_count(d)
    rng = _rng(seed)
    degrees = np.array([k for k in sorted(counts) for _ in range(counts[k])], dtype=np.int64).reshape(-1, 2)
    if shuffle_variables:
        degrees = degrees[rng.permutation(len(degrees))]
    return configuration_from_degrees(degrees, rng)


def configuration_from_formula(f: Formula) -> Configuration:
    """The configuration whose copies are used in clause order; projecting
    it gives back ``f``."""
    deg = variable_degrees(f)
    offsets = np.concatenate([[0], np.cumsum(deg.sum(axis=1))])
    used_pos = np.zeros(f.n, dtype=np.int64)
    used_neg = np.zeros(f.n, dtype=np.int64)
    rows = []
    for clause in f.clauses:
        row = []
        for lit in clause:
            v = abs(lit) - 1
            if lit > 0:
                row.append(offsets[v] + used_pos[v])
                used_pos[v] += 1
            else:
                row.append(offsets[v] + deg[v, 0] + used_neg[v])
                used_neg[v] += 1
        rows.append(row)
    return Configuration(f.n, deg, np.array(rows, dtype=np.int64).reshape(-1, 3))


def project(c: Configuration) -> Formula:
    """Forget copy labels; the result may repeat variables or clauses."""
    return Formula(c.n, [tuple(row) for row in c.literal_array().tolist()], strict=False)


def is_simple(c: Configuration) -> bool:
    lits = np.sort(c.literal_array(), axis=1)
    var = np.sort(np.abs(lits), axis=1)
    if np.any(var[:, 0] == var[:, 1]) or np.any(var[:, 1] == var[:, 2]):
        return False
    return len(np.unique(lits, axis=0)) == len(lits)


def clause_type_sequence(c) -> ClauseTypeSequence:
    """Scaled counts of clauses by their number of positive copies."""
    n, lits = _literal_matrix(c)
    pos = (lits > 0).sum(axis=1)
    hist = np.bincount(pos, minlength=4)
    return ClauseTypeSequence(tuple(Fraction(int(h), n) for h in hist[:4]))


def in_neighborhood(d: DegreeSequence, xi, eps, n: int | None = None) -> bool:
    """Membership of d in the epsilon-neighbourhood of the ideal xi."""
    n = d.n if n is None else n
    if d.total() != 1:
        return False
    copies = sum(((i + j) * v for (i, j), v in d.items()), Fraction(0)) * n
    if copies.denominator != 1 or copies.numerator % 3:
        return False
    cut = n ** (1 / 6)
    if any(v and (i > cut or j > cut) for (i, j), v in d.items()):
        return False
    keys = set(d.entries) | {k for k, _ in xi.items()}
    return all(abs(float(d[k]) - float(xi[k])) <= eps for k in keys)


def realize_degree_sequence(ideal, n: int, max_degree: int = 40) -> DegreeSequence:
    """Integer counts close to n * ideal (largest remainders), adjusted so the
    copies split into triples."""
    items = [(k, float(v)) for k, v in ideal.items() if k[0] <= max_degree and k[1] <= max_degree and v > 0]
    total = sum(v for _, v in items)
    raw = [(k, n * v / total) for k, v in items]
    counts = {k: int(math.floor(x)) for k, x in raw}
    short = n - sum(counts.values())
    for k, x in sorted(raw, key=lambda kx: (-(kx[1] - math.floor(kx[1])), kx[0]))[:short]:
        counts[k] += 1
    copies = sum((i + j) * c for (i, j), c in counts.items())
    # move variables from (i, j) to (i + 1, j) until the copies split into triples
    while copies % 3:
        k = max(counts, key=lambda q: (counts[q], q))
        counts[k] -= 1
        up = (k[0] + 1, k[1])
        counts[up] = counts.get(up, 0) + 1
        copies += 1
    return DegreeSequence({k: Fraction(c, n) for k, c in counts.items() if c}, n)
