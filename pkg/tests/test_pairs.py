"""Tests for path-pair enumeration, classification and pair sums."""

import io
import itertools
import random
from fractions import Fraction

import networkx as nx
import pytest

from opl.asymptotics import type1_limit
from opl.graph import (
    A,
    B,
    S,
    BudgetExceededError,
    ContractError,
    OrientedConfiguration,
    ParameterError,
    Path,
    num_pairs,
)
from opl.pairs import (
    CutOff,
    PairVariant,
    classify_pair,
    count_type1,
    count_type2,
    cov_pairsum,
    default_cutoff,
    enum_paths,
    expected_paths,
    falling,
    pair_census,
    pair_cov,
    path_count,
    truncation_tail_bound,
    type1_subtotal,
    type2_subtotal,
)


def kernel_by_configurations(ga, gb, p):
    """E[I_a I_b] - E[I_a] E[I_b] over every state of the pairs both paths touch."""
    p = Fraction(p)
    q = p / 2
    union = sorted({tuple(sorted(arc)) for arc in ga.arcs() + gb.arcs()})
    e_a = e_b = e_ab = Fraction(0)
    for states in itertools.product((0, 1, 2), repeat=len(union)):
        weight = Fraction(1)
        arcs = set()
        for (i, j), state in zip(union, states):
            if state == 0:
                weight *= 1 - p
            else:
                weight *= q
                arcs.add((i, j) if state == 1 else (j, i))
        hit_a = all(arc in arcs for arc in ga.arcs())
        hit_b = all(arc in arcs for arc in gb.arcs())
        e_a += weight * hit_a
        e_b += weight * hit_b
        e_ab += weight * (hit_a and hit_b)
    return e_ab - e_a * e_b


def truncated_count_cov(n, L, p):
    """Cov(X'_A, X'_B) by averaging realized path counts over all 3^m configurations."""
    p = Fraction(p)
    q = p / 2
    gammas_a = enum_paths(n, A, S, L)
    gammas_b = enum_paths(n, S, B, L)
    m = num_pairs(n)
    e_a = e_b = e_ab = Fraction(0)
    for index in range(3**m):
        config = OrientedConfiguration.from_index(n, index)
        k = config.num_present
        weight = q**k * (1 - p) ** (m - k)
        if not weight:
            continue
        x_a = sum(1 for g in gammas_a if g.is_realized(config))
        x_b = sum(1 for g in gammas_b if g.is_realized(config))
        e_a += weight * x_a
        e_b += weight * x_b
        e_ab += weight * x_a * x_b
    return e_ab - e_a * e_b


class TestEnumPaths:
    def test_triangle(self):
        paths = enum_paths(3, A, S, 2)
        assert [p.vertices for p in paths] == [(A, S), (A, B, S)]

    def test_counts_by_length(self):
        paths = enum_paths(5, A, S, 3)
        by_length = [sum(1 for p in paths if p.length == ell) for ell in (1, 2, 3)]
        assert by_length == [1, 3, 6]
        assert by_length == [falling(3, ell - 1) for ell in (1, 2, 3)]

    def test_direct_only(self):
        assert len(enum_paths(4, A, S, CutOff(1))) == 1

    def test_path_count_formula(self):
        for n in (4, 5, 6):
            assert len(enum_paths(n, S, B, 4)) == path_count(n, 4)

    @pytest.mark.parametrize("n,L", [(4, 3), (5, 2), (6, 4)])
    def test_matches_networkx_simple_paths(self, n, L):
        complete = nx.complete_graph(n, create_using=nx.DiGraph)
        for u, v in ((A, S), (S, B)):
            ours = {p.vertices for p in enum_paths(n, u, v, L)}
            theirs = {tuple(p) for p in nx.all_simple_paths(complete, u, v, cutoff=L)}
            assert ours == theirs

    def test_guard(self):
        with pytest.raises(BudgetExceededError) as info:
            enum_paths(13, A, S, 3)
        assert info.value.required == path_count(13, 3)

    def test_same_endpoints(self):
        with pytest.raises(ParameterError):
            enum_paths(4, A, A, 2)

    def test_bad_cutoff(self):
        with pytest.raises(ParameterError):
            CutOff(0)

    def test_default_cutoff(self):
        assert default_cutoff(10).L == 6
        assert default_cutoff(3).L == 2


class TestClassify:
    def test_disjoint(self):
        cls = classify_pair(Path((A, S)), Path((S, B)))
        assert cls.variant == PairVariant.DISJOINT
        assert cls.overlap.lambda_ab == 0

    def test_type1(self):
        cls = classify_pair(Path((A, S)), Path((S, A, B)))
        assert cls.variant == PairVariant.TYPE1
        assert cls.indices == (0, 1)
        assert cls.overlap.lambda_ab == 1

    def test_type2(self):
        cls = classify_pair(Path((A, B, S)), Path((S, A, B)))
        assert cls.variant == PairVariant.TYPE2
        assert cls.indices == (0, 0, 1, 1, 1)

    def test_type2_with_interior_junction(self):
        cls = classify_pair(Path((A, 3, 4, S)), Path((S, 5, 3, 4, B)))
        assert cls.variant == PairVariant.TYPE2
        assert cls.indices == (1, 1, 1, 1, 2)

    def test_run_with_detour_through_gamma_a(self):
        # single shared run 3->4, but gamma_b reaches it through 7, which lies on gamma_a
        cls = classify_pair(Path((A, 3, 4, 7, S)), Path((S, 5, 7, 6, 3, 4, B)))
        assert cls.variant == PairVariant.OTHER_SAME
        assert cls.overlap.delta == 5

    def test_tail_revisits_gamma_a(self):
        # after the shared run a->3, gamma_b runs on to 5, which lies on gamma_a
        cls = classify_pair(Path((A, 3, 5, S)), Path((S, A, 3, 4, 5, B)))
        assert cls.variant == PairVariant.OTHER_SAME

    def test_detour_keeps_kernel(self):
        ga, gb = Path((A, 3, 4, 7, S)), Path((S, 5, 7, 6, 3, 4, B))
        p = Fraction(1, 3)
        assert pair_cov(ga, gb, p) == kernel_by_configurations(ga, gb, p)

    def test_opposite_with_extra_shared_edge(self):
        # shares {s,3} reversed and {3,4} reversed
        cls = classify_pair(Path((A, 4, 3, S)), Path((S, 3, 4, B)))
        assert cls.variant == PairVariant.OTHER_OPPOSITE

    def test_two_same_direction_runs(self):
        # shares a->3 and 4->5 in the same direction, separated on gamma_b
        cls = classify_pair(Path((A, 3, 4, 5, S)), Path((S, A, 3, 6, 4, 5, B)))
        assert cls.variant == PairVariant.OTHER_SAME
        assert cls.overlap.delta == 4

    def test_overlap_mu(self):
        cls = classify_pair(Path((A, 3, S)), Path((S, 4, A, 5, B)))
        assert cls.variant == PairVariant.DISJOINT
        # s-4-a meets gamma_a only at its ends, then a-5-b
        assert cls.overlap.mu == 2

    def test_endpoint_contract(self):
        with pytest.raises(ContractError):
            classify_pair(Path((S, A)), Path((S, B)))
        with pytest.raises(ContractError):
            classify_pair(Path((A, S)), Path((A, B)))


class TestKernel:
    def test_examples(self):
        p = Fraction(1, 3)
        q = p / 2
        assert pair_cov(Path((A, S)), Path((S, B)), p) == 0
        assert pair_cov(Path((A, S)), Path((S, A, B)), p) == -(q**3)
        assert pair_cov(Path((A, B, S)), Path((S, A, B)), p) == q**3 - q**4

    def test_every_pair_matches_configuration_average(self):
        """n=4, L=3: kernel equals the covariance over the touched pairs, all pairs."""
        p = Fraction(2, 5)
        for ga in enum_paths(4, A, S, 3):
            for gb in enum_paths(4, S, B, 3):
                assert pair_cov(ga, gb, p) == kernel_by_configurations(ga, gb, p)

    def test_vertex_outside_graph(self):
        with pytest.raises(ParameterError):
            pair_cov(Path((A, 5, S)), Path((S, B)), Fraction(1, 2), n=4)


class TestCensus:
    @pytest.mark.parametrize("n,L", [(3, 2), (4, 3), (5, 2), (5, 4), (6, 3)])
    def test_pattern_route_matches_concrete(self, n, L):
        assert pair_census(n, L, method="pattern") == pair_census(n, L, method="concrete")

    def test_total_and_exclusive(self):
        for n, L in ((5, 4), (9, 3)):
            census = pair_census(n, L)
            assert sum(census.values()) == path_count(n, L) ** 2

    def test_unknown_method(self):
        with pytest.raises(ParameterError):
            pair_census(4, 2, method="guess")


class TestPairSum:
    def test_p_zero(self):
        result = cov_pairsum(4, 3, 0)
        assert result.total == 0
        assert all(v == 0 for v in result.by_class.values())

    @pytest.mark.parametrize("p", [Fraction(1, 4), Fraction(1, 2)])
    def test_matches_configuration_oracle(self, p):
        assert cov_pairsum(4, 3, p).total == truncated_count_cov(4, 3, p)

    def test_classes_partition_total(self):
        result = cov_pairsum(6, 4, Fraction(1, 7))
        assert sum(result.by_class.values()) == result.total
        assert result.by_class[PairVariant.DISJOINT] == 0

    def test_concrete_and_pattern_agree(self):
        p = Fraction(3, 10)
        assert cov_pairsum(5, 3, p, method="pattern").total == cov_pairsum(5, 3, p, method="concrete").total

    def test_csv(self):
        handle = io.StringIO()
        cov_pairsum(3, 2, Fraction(1, 2)).write_csv(handle)
        lines = handle.getvalue().splitlines()
        assert lines[0] == "variant,parameters,pairs,subtotal"
        assert "Type2,0 0 1 1 1,1,3/256" in lines

    def test_document(self):
        doc = cov_pairsum(3, 2, 1).to_dict()
        assert doc["p"] == "1/1"
        assert set(doc["by_class"]) == {v.value for v in PairVariant}


class TestTypeCounts:
    def test_type1_minimal(self):
        assert count_type1(5, 0, 1) == 1
        assert count_type1(5, 1, 0) == 1

    def test_type1_against_enumeration(self):
        census = pair_census(5, 4, method="concrete")
        for i, j in ((1, 1), (2, 0), (0, 2), (1, 2)):
            assert count_type1(5, i, j) == census.get((PairVariant.TYPE1, (i, j)), 0)

    def test_type1_zero_index_error(self):
        with pytest.raises(ParameterError):
            count_type1(5, 0, 0)

    def test_type1_too_long(self):
        assert count_type1(4, 3, 0) == 0

    def test_type2_triangle(self):
        assert count_type2(3, 0, 0, 1, 1, 1) == 1

    def test_type2_against_enumeration(self):
        census = pair_census(5, 4, method="concrete")
        for indices in ((1, 0, 1, 1, 1), (0, 1, 1, 1, 1), (0, 0, 2, 1, 1), (1, 1, 1, 1, 1)):
            assert count_type2(5, *indices) == census.get((PairVariant.TYPE2, indices), 0)

    @pytest.mark.parametrize("indices", [(0, 0, 0, 1, 1), (0, 0, 1, 0, 1), (0, 0, 1, 1, 0)])
    def test_type2_zero_index_error(self, indices):
        with pytest.raises(ParameterError):
            count_type2(5, *indices)

    def test_type2_subtotal_positive(self):
        assert type2_subtotal(5, 3, Fraction(1, 10)) > 0

    @pytest.mark.slow
    def test_type1_subtotal_near_closed_form(self):
        n, c = 12, Fraction(1, 10)
        subtotal = type1_subtotal(n, 6, c * 2 / n)
        closed = -type1_limit(0.1) / n**3
        assert abs(float(subtotal) - closed) <= (5 / n) * abs(closed)


class TestExpectations:
    def test_triangle_full(self):
        assert expected_paths(3, 1, 2) == Fraction(3, 4)

    def test_zero(self):
        assert expected_paths(6, 0, 5) == 0

    def test_direct_edge(self):
        p = Fraction(2, 7)
        assert expected_paths(4, p, 1) == p / 2

    def test_single_path_indicator(self):
        """E[I_gamma] over the touched pairs is (p/2)^length for random self-avoiding paths."""
        rng = random.Random(20240611)
        p = Fraction(3, 7)
        q = p / 2
        n = 7
        for _ in range(50):
            length = rng.randint(1, 5)
            inner = rng.sample(range(3, n), length - 1)
            start, end = rng.choice([(A, S), (S, B)])
            path = Path((start, *inner, end))
            touched = sorted({tuple(sorted(arc)) for arc in path.arcs()})
            expected = Fraction(0)
            for states in itertools.product((0, 1, 2), repeat=len(touched)):
                weight = Fraction(1)
                arcs = set()
                for (i, j), state in zip(touched, states):
                    weight *= (1 - p) if state == 0 else q
                    if state:
                        arcs.add((i, j) if state == 1 else (j, i))
                config = OrientedConfiguration.from_arcs(n, arcs)
                expected += weight * path.is_realized(config)
            assert expected == q**path.length

    def test_tail_bound(self):
        assert truncation_tail_bound(0.5, 3) == pytest.approx(0.0625 * 2)
        with pytest.raises(ParameterError):
            truncation_tail_bound(1.0, 3)

