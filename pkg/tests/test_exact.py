"""Tests for the exact enumeration engine."""

import itertools
import random
from fractions import Fraction
from math import comb

import networkx as nx
import pytest

from opl.asymptotics import main_formula
from opl.exact import (
    CountsTable,
    check_budget,
    consistency_table,
    cov_exact,
    enumerate_counts,
    percolation_counts,
    percolation_prob,
    prob_from_counts,
    required_budget,
)
from opl.graph import (
    A,
    B,
    S,
    BudgetExceededError,
    OrientedConfiguration,
    ParameterError,
    num_pairs,
)
from opl.pairs import expected_path_bound, expected_paths


@pytest.fixture(scope="module")
def tables():
    """Counts for n = 3..5, computed once."""
    return {n: enumerate_counts(n) for n in (3, 4, 5)}


def brute_counts(n):
    """Per-configuration reference census, reachability by networkx."""
    m = num_pairs(n)
    n_a, n_ab = [0] * (m + 1), [0] * (m + 1)
    for index in range(3**m):
        config = OrientedConfiguration.from_index(n, index)
        k = config.num_present
        digraph = nx.DiGraph()
        digraph.add_nodes_from(range(n))
        digraph.add_edges_from((u, v) for u in range(n) for v in range(n) if u != v and config.has_arc(u, v))
        a = nx.has_path(digraph, A, S)
        b = nx.has_path(digraph, S, B)
        n_a[k] += a
        n_ab[k] += a and b
    return n_a, n_ab


class TestEnumerateCounts:
    def test_triangle(self, tables):
        table = tables[3]
        assert list(table.N_A) == [0, 1, 5, 5]
        assert list(table.N_B) == [0, 1, 5, 5]
        assert list(table.N_AB) == [0, 0, 1, 3]

    @pytest.mark.parametrize("n", [3, 4])
    def test_matches_per_configuration_reference(self, tables, n):
        n_a, n_ab = brute_counts(n)
        assert list(tables[n].N_A) == n_a
        assert list(tables[n].N_AB) == n_ab

    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_invariants(self, tables, n):
        assert tables[n].problems() == []
        assert sum(tables[n].totals) == 3 ** num_pairs(n)

    def test_problems_detected(self, tables):
        good = tables[3]
        broken = CountsTable(n=3, N_A=(0, 1, 5, 5), N_B=(0, 1, 5, 4), N_AB=(1, 0, 1, 2), totals=good.totals)
        found = broken.problems()
        assert any("zero present edges" in x for x in found)
        assert any("N_A[3] != N_B[3]" in x for x in found)

    def test_thread_count_does_not_change_result(self, tables):
        assert enumerate_counts(5, threads=3) == tables[5]

    def test_merge_is_entrywise(self, tables):
        table = tables[3]
        doubled = table.merge(table)
        assert doubled.N_A == tuple(2 * x for x in table.N_A)

    def test_budget_refusal_reports_required(self):
        with pytest.raises(BudgetExceededError) as info:
            enumerate_counts(9)
        assert info.value.required == 3**36
        assert "3^36" in str(info.value)

    def test_default_budget_refuses_seven(self):
        with pytest.raises(BudgetExceededError):
            check_budget(7, 3**15)
        assert check_budget(7, 3**21) == 3**21

    def test_too_small(self):
        with pytest.raises(ParameterError):
            enumerate_counts(2)

    def test_required_budget(self):
        assert required_budget(4) == 3**6
        assert required_budget(4, radix=2) == 2**6

    def test_json_document(self, tables):
        doc = tables[4].to_dict()
        assert doc["m"] == 6
        assert all(isinstance(x, str) for x in doc["N_AB"])
        assert CountsTable.from_dict(doc) == tables[4]


class TestProbabilities:
    def test_full_triangle(self, tables):
        p_a, p_b, p_ab = prob_from_counts(tables[3], 1)
        assert p_a == Fraction(5, 8)
        assert p_b == Fraction(5, 8)
        assert p_ab == Fraction(3, 8)

    def test_p_zero(self, tables):
        for table in tables.values():
            assert prob_from_counts(table, 0) == (0, 0, 0)

    def test_invalid_p(self, tables):
        with pytest.raises(ParameterError):
            prob_from_counts(tables[3], Fraction(3, 2))

    def test_cov_triangle(self, tables):
        assert cov_exact(3, 1, counts=tables[3]) == Fraction(-1, 64)

    def test_cov_zero_at_p_zero(self, tables):
        assert cov_exact(4, 0, counts=tables[4]) == 0

    def test_counts_mismatch(self, tables):
        with pytest.raises(ParameterError):
            cov_exact(4, Fraction(1, 2), counts=tables[3])

    def test_symmetry(self, tables):
        rng = random.Random(5)
        for table in tables.values():
            for _ in range(5):
                p = Fraction(rng.randint(0, 100), 100)
                p_a, p_b, _ = prob_from_counts(table, p)
                assert p_a == p_b

    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_small_p_negative(self, tables, n):
        assert cov_exact(n, Fraction(1, 100), counts=tables[n]) < 0

    @pytest.mark.slow
    def test_small_p_negative_six(self):
        assert cov_exact(6, Fraction(1, 100), threads=4) < 0


class TestPercolation:
    def test_triangle(self):
        assert percolation_prob(3, Fraction(1, 2), A, S) == Fraction(5, 8)

    def test_endpoints(self):
        assert percolation_prob(4, 0) == 0
        assert percolation_prob(4, 1) == 1

    def test_subset_totals(self):
        counts = percolation_counts(4)
        assert list(counts.totals) == [comb(6, k) for k in range(7)]

    def test_direct_subset_reference(self):
        """2^3 edge subsets of the triangle, checked by hand rule q + (1-q) q^2."""
        q = Fraction(1, 3)
        assert percolation_prob(3, q) == q + (1 - q) * q**2

    @pytest.mark.parametrize("n", [3, 4, 5])
    @pytest.mark.parametrize("p", [Fraction(1, 10), Fraction(1, 2), Fraction(9, 10)])
    def test_orientation_equals_half_percolation(self, tables, n, p):
        p_a, _, _ = prob_from_counts(tables[n], p)
        assert p_a == percolation_prob(n, p / 2, A, S)

    def test_invalid_vertices(self):
        with pytest.raises(ParameterError):
            percolation_counts(3, 0, 3)


class TestExpectedPaths:
    def test_bound_holds(self):
        for n in (3, 4, 5, 8, 20):
            for c in (Fraction(1, 10), Fraction(1, 2), Fraction(9, 10)):
                p = c * 2 / n
                assert expected_paths(n, p, n) <= expected_path_bound(c, n, n)

    def test_path_count_average_over_triangle(self):
        """E[X'_A] at p=1 on the triangle equals the mean number of realized a->s paths."""
        total = 0
        for states in itertools.product((1, 2), repeat=3):
            config = OrientedConfiguration(n=3, states=states)
            total += config.has_arc(A, S)
            total += config.has_arc(A, B) and config.has_arc(B, S)
        assert expected_paths(3, 1, 2) == Fraction(total, 8) == Fraction(3, 4)


class TestConsistency:
    def test_rows_and_limit(self, tables):
        rows, limit = consistency_table(Fraction(1, 10), [4, 5], counts_for=tables.get)
        assert [row.n for row in rows] == [4, 5]
        assert rows[0].p == Fraction(1, 20)
        assert limit == pytest.approx(main_formula(0.1, 1).value)
        assert all(row.scaled < 0 for row in rows)
        assert limit < 0

    @pytest.mark.slow
    def test_sign_agreement_to_six(self):
        rows, limit = consistency_table(Fraction(1, 10), [4, 5, 6], threads=4)
        assert all((row.scaled < 0) == (limit < 0) for row in rows)
