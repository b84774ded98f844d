import math
from fractions import Fraction
from itertools import product

import mpmath as mp
from hypothesis import given, settings, strategies as st

from satbound.structure import (
    LABELS, CoordinateIndex, PolytopePoint, clause_types, dimension, extended_degrees, light_degrees, log_F,
    type_of,
)


def test_sixteen_clause_types():
    mats = [m for m in product(range(4), repeat=4) if sum(m) == 3 and m[0] + m[1] > 0]
    assert len(mats) == math.comb(6, 3) - 4 == 16
    assert sorted(a.key for a in clause_types()) == sorted(mats)


def test_blocking_types():
    blocking = {a.key for a in clause_types() if a.blocking}
    assert blocking == {(0, 1, 2, 0), (0, 1, 1, 1), (0, 1, 0, 2)}
    a = type_of((0, 1, 1, 1))
    assert (a.nsf, a.nsr, a.tp, a.w) == (1, 0, 1, 1)
    b = type_of((1, 2, 0, 0))
    assert (b.nsf, b.nsr, b.tp, b.w) == (0, 2, 1, 2)
    assert str(type_of((3, 0, 0, 0))) == "[3 0; 0 0]"


def test_dimensions_at_default_cutoff():
    assert len(extended_degrees(23)) == 24 * 23 * 24 // 2 == 6624
    assert dimension(23) == 24 ** 2 * (1 + 23 / 2) + 23 == 7223
    assert len(CoordinateIndex(23)) == 7223


def test_forced_coordinates():
    ix = CoordinateIndex(2)
    forced = ix.forced()
    assert ("h", "nsr") in forced and ("h", "nsf") not in forced
    assert ("f", 0, 2, 1) in forced and ("f", 0, 2, 2) not in forced
    assert ("c", (1, 2, 0, 0)) in forced and ("c", (0, 1, 1, 1)) not in forced


def test_log_F_zero_point():
    ix = CoordinateIndex(1)
    assert log_F(ix.from_vector([Fraction(0)] * len(ix))) == 0
    assert log_F(ix.from_vector([0.0] * len(ix))) == 0


def test_log_F_small_point_by_hand():
    x = PolytopePoint(t={(1, 0): 0.5}, f={(0, 2, 1): 0.25}, h=(0.0, 0.0), c={(0, 1, 2, 0): 0.5},
                      ell={"ps": 1.0})
    # sum ell log ell - sum t log t - sum f log(f / C(j,k)) - sum c log(c / (2/w!)), w(0,1,2,0) = 2
    ref = 0 - 0.5 * math.log(0.5) - 0.25 * math.log(0.25 / 2) - 0.5 * math.log(0.5 / 1)
    assert math.isclose(log_F(x), ref, rel_tol=1e-14)


coords = st.lists(st.fractions(min_value=0, max_value=5, max_denominator=50), min_size=len(CoordinateIndex(1)),
                  max_size=len(CoordinateIndex(1)))


@given(coords)
@settings(max_examples=40, deadline=None)
def test_vector_round_trip_and_scaling(vec):
    ix = CoordinateIndex(1)
    p = ix.from_vector(vec)
    assert ix.to_vector(p) == vec
    with mp.workdps(30):
        # F is homogeneous up to a linear term: log F(2x) = 2 log F(x) + 2 log 2 * (sum ell - sum t - sum f - h - sum c)
        lhs = log_F(p.scaled(2))
        mass = sum(p.ell.values()) - sum(p.t.values()) - sum(p.f.values()) - sum(p.h) - sum(p.c.values())
        rhs = 2 * log_F(p) + 2 * mp.log(2) * mp.mpf(mass.numerator) / mass.denominator
        assert abs(lhs - rhs) < mp.mpf(10) ** -25


def test_labels():
    assert LABELS == ("ps", "pu", "nsf", "nsr", "nu")
    assert all(len(light_degrees(M)) == (M + 1) ** 2 for M in range(5))
