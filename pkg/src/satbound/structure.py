"""Coordinates of the counting polytope: degree sets, extended clause types,
points and the entropy-like function F whose maximum controls E[X]."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import product

import mpmath as mp

# Copy labels: positive-satisfied, positive-unsatisfied, negative-satisfied in a
# blocking clause, negative-satisfied elsewhere, negative-unsatisfied.
LABELS = ("ps", "pu", "nsf", "nsr", "nu")


@dataclass(frozen=True)
class ExtendedType:
    """Clause type ``alpha``: how many copies of each coarse label it holds."""

    ps: int
    ns: int
    pu: int
    nu: int

    @property
    def key(self) -> tuple[int, int, int, int]:
        return (self.ps, self.ns, self.pu, self.nu)

    @property
    def blocking(self) -> bool:
        # one satisfied copy, negative, next to two unsatisfied ones
        return self.ps == 0 and self.ns == 1

    @property
    def nsf(self) -> int:
        return self.ns if self.blocking else 0

    @property
    def nsr(self) -> int:
        return 0 if self.blocking else self.ns

    @property
    def tp(self) -> int:
        """Syntactic type: number of positive copies."""
        return self.ps + self.pu

    @property
    def w(self) -> int:
        """Number of zero entries of the 2x2 matrix."""
        return self.key.count(0)

    def count(self, label: str) -> int:
        return getattr(self, label)

    def __str__(self) -> str:
        return "[{} {}; {} {}]".format(*self.key)


@lru_cache(maxsize=None)
def clause_types() -> tuple[ExtendedType, ...]:
    """The 16 extended types: 2x2 nonnegative matrices summing to 3 with a
    satisfied copy (``ps + ns > 0``)."""
    out = [ExtendedType(*m) for m in product(range(4), repeat=4)
           if sum(m) == 3 and m[0] + m[1] > 0]
    return tuple(out)


def light_degrees(M: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(M + 1) for j in range(M + 1)]


def extended_degrees(M: int) -> list[tuple[int, int, int]]:
    return [(i, j, k) for i in range(M + 1) for j in range(1, M + 1) for k in range(1, j + 1)]


def dimension(M: int) -> int:
    """K = |L| + |L'| + 2 + |A| + |S|."""
    return len(light_degrees(M)) + len(extended_degrees(M)) + 2 + len(clause_types()) + len(LABELS)


class CoordinateIndex:
    """Fixed ordering of the K coordinates ``(t, f, h, c, ell)``."""

    def __init__(self, M: int):
        self.M = M
        keys: list[tuple] = [("t", i, j) for i, j in light_degrees(M)]
        keys += [("f", i, j, k) for i, j, k in extended_degrees(M)]
        keys += [("h", "nsf"), ("h", "nsr")]
        keys += [("c", a.key) for a in clause_types()]
        keys += [("ell", s) for s in LABELS]
        self.keys = keys
        self.position = {k: n for n, k in enumerate(keys)}

    def __len__(self) -> int:
        return len(self.keys)

    def __getitem__(self, key: tuple) -> int:
        return self.position[key]

    def forced(self) -> set[tuple]:
        """Coordinates that must vanish whenever ``ell_nsr = 0``."""
        out = {("h", "nsr")}
        out |= {("c", a.key) for a in clause_types() if a.nsr > 0}
        out |= {("f", i, j, k) for (_, i, j, k) in (x for x in self.keys if x[0] == "f") if j > k}
        return out

    def to_vector(self, point: "PolytopePoint", zero=0) -> list:
        vec = [zero] * len(self.keys)
        for (i, j), v in point.t.items():
            vec[self.position[("t", i, j)]] = v
        for (i, j, k), v in point.f.items():
            vec[self.position[("f", i, j, k)]] = v
        vec[self.position[("h", "nsf")]] = point.h[0]
        vec[self.position[("h", "nsr")]] = point.h[1]
        for a, v in point.c.items():
            vec[self.position[("c", a)]] = v
        for s, v in point.ell.items():
            vec[self.position[("ell", s)]] = v
        return vec

    def from_vector(self, vec) -> "PolytopePoint":
        point = PolytopePoint()
        for key, v in zip(self.keys, vec):
            kind = key[0]
            if kind == "t":
                point.t[key[1:]] = v
            elif kind == "f":
                point.f[key[1:]] = v
            elif kind == "c":
                point.c[key[1]] = v
            elif kind == "ell":
                point.ell[key[1]] = v
        point.h = (vec[self.position[("h", "nsf")]], vec[self.position[("h", "nsr")]])
        return point


@dataclass
class PolytopePoint:
    """x = (t, f, h, c, ell); values may be Fractions, mpf or floats.

    ``c`` is keyed by the ``(ps, ns, pu, nu)`` tuple of an extended type.
    """

    t: dict = field(default_factory=dict)
    f: dict = field(default_factory=dict)
    h: tuple = (0, 0)
    c: dict = field(default_factory=dict)
    ell: dict = field(default_factory=dict)

    def values(self):
        yield from self.t.values()
        yield from self.f.values()
        yield from self.h
        yield from self.c.values()
        yield from self.ell.values()

    def scaled(self, factor) -> "PolytopePoint":
        return PolytopePoint(
            t={k: factor * v for k, v in self.t.items()},
            f={k: factor * v for k, v in self.f.items()},
            h=(factor * self.h[0], factor * self.h[1]),
            c={k: factor * v for k, v in self.c.items()},
            ell={k: factor * v for k, v in self.ell.items()},
        )


_TYPE_BY_KEY = {a.key: a for a in clause_types()}


def type_of(key: tuple[int, int, int, int]) -> ExtendedType:
    return _TYPE_BY_KEY[key]


def to_mpf(v) -> mp.mpf:
    if isinstance(v, Fraction):
        return mp.mpf(v.numerator) / v.denominator
    return mp.mpf(v)


def log_F(x: PolytopePoint):
    """log F(x) with the convention 0 log 0 = 0.

    Floats are evaluated in double precision, everything else (mpf, Fraction,
    int) with mpmath at the current working precision.
    """
    floats = all(isinstance(v, float) for v in x.values())
    log = math.log if floats else mp.log
    conv = float if floats else to_mpf

    def xl(v, weight=1):
        v = conv(v)
        if v < 0:
            raise ValueError(f"negative coordinate {v}")
        return 0 if v == 0 else v * log(v / conv(weight))

    total = sum(xl(v) for v in x.ell.values())
    total -= sum(xl(v) for v in x.t.values())
    total -= sum(xl(v, math.comb(j, k)) for (i, j, k), v in x.f.items())
    total -= xl(x.h[0]) + xl(x.h[1])
    total -= sum(xl(v, Fraction(2, math.factorial(_TYPE_BY_KEY[a].w))) for a, v in x.c.items())
    return total
