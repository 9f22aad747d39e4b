"""Poset construction, closures, antichain enumeration, width and height."""
import itertools

import numpy as np
import pytest

from dpiso.core import CapExceeded, ValidationError
from dpiso.posets import (
    AntichainSet,
    Poset,
    antichain_poset,
    chain_partition,
    chain_poset,
    closures,
    disjoint_chains_poset,
    enumerate_antichains,
    grid_element_label,
    grid_poset,
    height,
    width,
)


def random_poset(rng, n):
    perm = rng.permutation(n)
    adj = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.35:
                adj[perm[i], perm[j]] = True
    reach = adj.copy()
    np.fill_diagonal(reach, True)
    for k in range(n):
        reach |= np.outer(reach[:, k], reach[k, :])
    return Poset(reach)


def brute_antichain_count(poset):
    n = poset.size
    count = 0
    for bits in range(1 << n):
        elems = [e for e in range(n) if bits >> e & 1]
        if all(not poset.comparable(a, b)
               for a, b in itertools.combinations(elems, 2)):
            count += 1
    return count


class TestConstruction:
    def test_chain_order(self):
        p = chain_poset(3)
        assert p.leq(0, 2) and p.leq(0, 0)
        assert not p.leq(2, 0)
        assert p.comparable(1, 2)

    def test_antichain_order(self):
        p = antichain_poset(3)
        assert not p.comparable(0, 1)
        assert p.leq(1, 1)

    def test_reflexivity_required(self):
        mat = np.eye(2, dtype=bool)
        mat[0, 0] = False
        with pytest.raises(ValidationError):
            Poset(mat)

    def test_antisymmetry_required(self):
        mat = np.ones((2, 2), dtype=bool)
        with pytest.raises(ValidationError):
            Poset(mat)

    def test_transitivity_required(self):
        mat = np.eye(3, dtype=bool)
        mat[0, 1] = mat[1, 2] = True
        with pytest.raises(ValidationError):
            Poset(mat)

    def test_from_cover_edges(self):
        p = Poset.from_cover_edges(3, [(1, 2), (2, 3)])
        assert p.leq(0, 2)

    def test_cover_edge_cycle_rejected(self):
        with pytest.raises(ValidationError, match="cycle"):
            Poset.from_cover_edges(3, [(1, 2), (2, 3), (3, 1)])

    def test_cover_edge_self_loop_rejected(self):
        with pytest.raises(ValidationError):
            Poset.from_cover_edges(2, [(1, 1)])

    def test_cover_edge_label_range(self):
        with pytest.raises(ValidationError):
            Poset.from_cover_edges(2, [(1, 3)])

    def test_redundant_edges_tolerated(self):
        a = Poset.from_cover_edges(3, [(1, 2), (2, 3)])
        b = Poset.from_cover_edges(3, [(1, 2), (2, 3), (1, 3)])
        assert np.array_equal(a.leq_matrix, b.leq_matrix)

    def test_matrix_read_only(self):
        p = chain_poset(2)
        with pytest.raises(ValueError):
            p.leq_matrix[0, 1] = False


class TestAntichainSet:
    def test_sorted_and_iterable(self):
        ac = AntichainSet([2, 0])
        assert list(ac) == [0, 2]
        assert len(ac) == 2

    def test_comparable_pair_rejected(self):
        with pytest.raises(ValidationError):
            AntichainSet([0, 1], poset=chain_poset(2))

    def test_duplicates_rejected(self):
        with pytest.raises(ValidationError):
            AntichainSet([1, 1])

    def test_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            AntichainSet([5], poset=chain_poset(2))


class TestClosures:
    def test_chain_middle_element(self):
        lower, upper = closures(chain_poset(3), [1])
        assert lower == (0, 1)
        assert upper == (2,)

    def test_empty_antichain(self):
        lower, upper = closures(chain_poset(3), [])
        assert lower == ()
        assert upper == (0, 1, 2)

    def test_grid_diagonal(self):
        # The two middle points of a 2x2 grid pull in everything but the top.
        p = grid_poset(2, 2)
        mid = [grid_element_label(2, 2, 1, 2) - 1,
               grid_element_label(2, 2, 2, 1) - 1]
        top = grid_element_label(2, 2, 2, 2) - 1
        lower, upper = closures(p, mid)
        assert set(lower) == set(range(4)) - {top}
        assert upper == (top,)

    def test_partition_property(self):
        rng = np.random.default_rng(3)
        for _ in range(15):
            p = random_poset(rng, int(rng.integers(1, 9)))
            for ac in enumerate_antichains(p)[:20]:
                lower, upper = closures(p, ac)
                assert sorted(lower + upper) == list(range(p.size))
                for e in lower:
                    assert any(p.leq(e, a) for a in ac)
                for e in upper:
                    assert not any(p.leq(e, a) for a in ac)

    def test_within_restriction(self):
        p = chain_poset(4)
        lower, upper = closures(p, [1], within=[1, 3])
        assert lower == (1,)
        assert upper == (3,)


class TestEnumerateAntichains:
    def test_chain_counts(self):
        assert len(enumerate_antichains(chain_poset(3))) == 4

    def test_antichain_counts(self):
        assert len(enumerate_antichains(antichain_poset(2))) == 4

    def test_grid_counts(self):
        assert len(enumerate_antichains(grid_poset(2, 2))) == 6

    def test_empty_first(self):
        out = enumerate_antichains(grid_poset(2, 2))
        assert len(out[0]) == 0

    def test_matches_independent_set_count(self):
        rng = np.random.default_rng(44)
        for _ in range(12):
            p = random_poset(rng, int(rng.integers(1, 13)))
            got = enumerate_antichains(p)
            assert len(got) == brute_antichain_count(p)
            as_sets = {ac.elements for ac in got}
            assert len(as_sets) == len(got)
            for ac in got:
                for a, b in itertools.combinations(ac, 2):
                    assert not p.comparable(a, b)

    def test_subposet_restriction(self):
        p = chain_poset(4)
        out = enumerate_antichains(p, sub=[0, 2])
        assert {ac.elements for ac in out} == {(), (0,), (2,)}

    def test_cap(self):
        with pytest.raises(CapExceeded):
            enumerate_antichains(antichain_poset(10), cap=100)


class TestWidthHeightChains:
    def test_grid_width_is_short_side_count(self):
        for w, h in ((2, 2), (3, 5), (4, 3)):
            assert width(grid_poset(w, h)) == min(w, h)

    def test_disjoint_builder_shape(self):
        p = disjoint_chains_poset(4, 6)
        assert width(p) == 4
        assert height(p) == 6

    def test_chain_extremes(self):
        assert width(chain_poset(5)) == 1
        assert height(chain_poset(5)) == 5
        assert width(antichain_poset(5)) == 5
        assert height(antichain_poset(5)) == 1

    def test_grid_height(self):
        assert height(grid_poset(3, 4)) == 6

    def test_chain_partition_is_partition_of_chains(self):
        rng = np.random.default_rng(7)
        for _ in range(15):
            p = random_poset(rng, int(rng.integers(1, 12)))
            chains = chain_partition(p)
            flat = sorted(e for c in chains for e in c)
            assert flat == list(range(p.size))
            for c in chains:
                for a, b in zip(c, c[1:]):
                    assert p.leq(a, b) and a != b

    def test_width_equals_max_antichain(self):
        rng = np.random.default_rng(8)
        for _ in range(12):
            p = random_poset(rng, int(rng.integers(1, 11)))
            biggest = max(len(ac) for ac in enumerate_antichains(p))
            assert width(p) == biggest

    def test_height_at_least_size_over_width(self):
        rng = np.random.default_rng(9)
        for _ in range(12):
            p = random_poset(rng, int(rng.integers(1, 12)))
            assert height(p) * width(p) >= p.size


class TestGridLabels:
    def test_row_major(self):
        assert grid_element_label(2, 3, 1, 1) == 1
        assert grid_element_label(2, 3, 1, 3) == 3
        assert grid_element_label(2, 3, 2, 1) == 4

    def test_bounds(self):
        with pytest.raises(ValidationError):
            grid_element_label(2, 3, 3, 1)

    def test_componentwise_order(self):
        p = grid_poset(3, 3)
        a = grid_element_label(3, 3, 1, 2) - 1
        b = grid_element_label(3, 3, 2, 2) - 1
        c = grid_element_label(3, 3, 2, 1) - 1
        assert p.leq(a, b)
        assert not p.comparable(a, c)
