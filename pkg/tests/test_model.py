import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from satbound.model import (
    CapacityError, Configuration, DegreeSequence, Formula, InconsistentDegreeError, clause_count,
    clause_type_sequence, configuration_from_degrees, configuration_from_formula, degree_sequence,
    in_neighborhood, is_simple, literal_counts, project, realize_degree_sequence, sample_configuration,
    sample_uniform_formula, scaled_clause_count, variable_degrees,
)


def test_clause_count_is_exact():
    assert clause_count(1000, 4.4898) == 4489
    assert clause_count(1000, "4.4898") == 4489
    assert clause_count(10, Fraction(7, 2)) == 35
    assert clause_count(3, "0.1") == 0


def test_formula_rejects_bad_clauses():
    with pytest.raises(ValueError):
        Formula(3, [(1, 2)])
    with pytest.raises(ValueError):
        Formula(3, [(1, 2, 4)])
    with pytest.raises(ValueError):
        Formula(3, [(1, 1, 2)])
    with pytest.raises(ValueError):
        Formula(3, [(1, 2, 3), (3, 2, 1)])
    assert Formula(3, [(1, 1, 2)], strict=False).m == 1


def test_dimacs_round_trip(tmp_path):
    f = sample_uniform_formula(20, "4.2", seed=3)
    g = Formula.from_dimacs("c comment\n" + f.to_dimacs())
    assert g == f
    f.write(tmp_path / "f.cnf")
    assert Formula.read(tmp_path / "f.cnf") == f
    with pytest.raises(ValueError):
        Formula.from_dimacs("1 2 3 0\n")


def test_uniform_formula_shape_and_determinism():
    f = sample_uniform_formula(50, "4.4898", seed=1)
    assert f.m == clause_count(50, "4.4898") and f.is_simple()
    assert f == sample_uniform_formula(50, "4.4898", seed=1)
    assert f != sample_uniform_formula(50, "4.4898", seed=2)


def test_uniform_formula_capacity():
    # 4 variables admit 8 * C(4,3) = 32 distinct clauses
    assert sample_uniform_formula(4, 8, seed=0).m == 32
    with pytest.raises(CapacityError):
        sample_uniform_formula(4, "8.25", seed=0)


def test_degree_sequence_of_small_formula():
    f = Formula(4, [(1, 2, 3), (-1, 2, -4)])
    assert variable_degrees(f).tolist() == [[1, 1], [2, 0], [1, 0], [0, 1]]
    d = degree_sequence(f)
    assert d[(1, 1)] == Fraction(1, 4) and d[(2, 0)] == Fraction(1, 4)
    assert d.total() == 1
    assert scaled_clause_count(d) == Fraction(1, 2)
    assert literal_counts(d) == (Fraction(4, 4), Fraction(2, 4))


def test_degree_sequence_counts_need_integers():
    with pytest.raises(InconsistentDegreeError):
        DegreeSequence({(1, 0): Fraction(1, 2)}, 3).counts()
    with pytest.raises(ValueError):
        DegreeSequence({(1, 0): -1}, 3)


def test_scaled_clause_count_rejects_bad_copy_total():
    with pytest.raises(InconsistentDegreeError):
        scaled_clause_count(DegreeSequence({(1, 0): 1}, 2))


def test_configuration_from_formula_projects_back():
    f = sample_uniform_formula(30, "4", seed=5)
    c = configuration_from_formula(f)
    c.validate()
    assert project(c) == Formula(f.n, f.clauses, strict=False)
    assert is_simple(c)
    assert degree_sequence(c).entries == degree_sequence(f).entries


def test_copy_labels_are_canonical():
    c = Configuration(2, [[2, 1], [0, 3]], [[0, 1, 3], [2, 4, 5]])
    assert c.copy_sign().tolist() == [1, 1, -1, -1, -1, -1]
    assert c.copy_label(0) == (1, 1, 0)
    assert c.copy_label(2) == (1, -1, 0)
    assert c.copy_label(5) == (2, -1, 2)
    assert c.literal_array().tolist() == [[1, 1, -2], [-1, -2, -2]]
    assert not is_simple(c)


def test_configuration_json_round_trip():
    c = sample_configuration(degree_sequence(sample_uniform_formula(12, "3", seed=0)), seed=0)
    assert Configuration.from_json(c.to_json()) == c


def test_configuration_validate():
    with pytest.raises(InconsistentDegreeError):
        Configuration(1, [[2, 0]], np.zeros((0, 3))).validate()
    with pytest.raises(ValueError):
        Configuration(1, [[3, 0]], [[0, 0, 1]]).validate()


def test_clause_type_sequence():
    f = Formula(4, [(1, 2, 3), (-1, 2, -4), (-1, -2, -3)])
    assert clause_type_sequence(f).c == (Fraction(1, 4), Fraction(1, 4), 0, Fraction(1, 4))
    assert clause_type_sequence(configuration_from_formula(f)) == clause_type_sequence(f)


def test_in_neighborhood():
    d = DegreeSequence({(1, 0): Fraction(1, 3), (0, 1): Fraction(2, 3)}, 3)
    xi = {(1, 0): 1 / 3, (0, 1): 2 / 3}
    assert in_neighborhood(d, xi, 0.01)
    assert not in_neighborhood(d, {(1, 0): 0.5, (0, 1): 0.5}, 0.01)
    # two copies cannot be cut into triples
    assert not in_neighborhood(DegreeSequence({(1, 0): Fraction(1, 2), (0, 1): Fraction(1, 2)}, 2), xi, 1)
    # a degree above n^(1/6) is excluded
    assert not in_neighborhood(DegreeSequence({(3, 0): Fraction(1, 3), (0, 0): Fraction(2, 3)}, 3),
                               {(3, 0): 1 / 3, (0, 0): 2 / 3}, 0.01)


def test_realize_degree_sequence_matches_ideal():
    ideal = {(1, 0): 0.5, (0, 1): 0.25, (1, 1): 0.25}
    d = realize_degree_sequence(ideal, 400)
    counts = d.counts()
    assert sum(counts.values()) == 400
    assert sum((i + j) * v for (i, j), v in counts.items()) % 3 == 0
    assert all(abs(float(d[k]) - v) < 0.01 for k, v in ideal.items())


degree_rows = st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=8)


@given(degree_rows, st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_configuration_partitions_copies(rows, seed):
    total = sum(i + j for i, j in rows)
    rows = rows + [(3 - total % 3, 0)] if total % 3 else rows
    c = configuration_from_degrees(np.array(rows), seed=seed)
    c.validate()
    assert c.copy_count == 3 * c.m
    assert (c.degrees == np.array(rows)).all()
    lit = c.literal_array()
    pos = (lit > 0).sum()
    assert pos == sum(i for i, _ in rows)


@given(st.integers(3, 40), st.sampled_from(["1", "2.5", "4.4898"]), st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_sampled_formula_invariants(n, gamma, seed):
    try:
        f = sample_uniform_formula(n, gamma, seed)
    except CapacityError:
        assert clause_count(n, gamma) > 8 * math.comb(n, 3)
        return
    assert f.m == clause_count(n, gamma)
    assert f.is_simple()
    d = degree_sequence(f)
    assert d.total() == 1
    assert scaled_clause_count(d) * n == f.m
