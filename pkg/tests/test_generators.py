"""Dataset generators: random monotone, packing, antichain and grid payloads."""
import numpy as np
import pytest

from dpiso.core import Dataset, ValidationError, l1_loss, l2sq_loss
from dpiso.generators import (
    decode_antichain_hard,
    decode_grid_hard,
    gen_antichain_hard,
    gen_grid_hard,
    gen_packing_hard,
    gen_random_monotone,
    grid_payload_positions,
    packing_neighbors,
)
from dpiso.isotonic import isotonic_fit
from dpiso.core import risk


def points(data):
    return sorted(zip(data.xs.tolist(), data.ys.tolist()))


def map_risk(values, data, loss):
    per = loss.evaluate(np.array([values[int(x)] for x in data.xs]), data.ys)
    return float(np.mean(per))


class TestRandomMonotone:
    def test_same_seed_same_dataset(self):
        a = gen_random_monotone(10, 50, 0.2, seed=42)
        b = gen_random_monotone(10, 50, 0.2, seed=42)
        assert np.array_equal(a.xs, b.xs) and np.array_equal(a.ys, b.ys)
        c = gen_random_monotone(10, 50, 0.2, seed=43)
        assert points(a) != points(c)

    def test_zero_noise_fits_exactly(self):
        d = gen_random_monotone(12, 80, 0.0, seed=3)
        f = isotonic_fit(d, 12, l2sq_loss())
        assert risk(f, d, l2sq_loss()) < 1e-12

    def test_noise_bounds_optimal_risk(self):
        noise = 0.25
        d = gen_random_monotone(100, 1000, noise, seed=11)
        opt = risk(isotonic_fit(d, 100, l2sq_loss()), d, l2sq_loss())
        assert opt <= noise ** 2 / 3 + 0.01

    def test_ranges(self):
        d = gen_random_monotone(7, 200, 0.5, seed=1)
        assert d.xs.min() >= 1 and d.xs.max() <= 7
        assert d.ys.min() >= 0.0 and d.ys.max() <= 1.0

    def test_validation(self):
        with pytest.raises(ValidationError):
            gen_random_monotone(0, 5, 0.1, seed=0)
        with pytest.raises(ValidationError):
            gen_random_monotone(3, 0, 0.1, seed=0)
        with pytest.raises(ValidationError):
            gen_random_monotone(3, 5, 0.6, seed=0)


class TestPackingHard:
    def test_interior_threshold_contents(self):
        d = gen_packing_hard(4, 6, 2, 2)
        assert points(d) == [(1, 0.0), (1, 0.0), (2, 0.0), (2, 0.0),
                             (3, 1.0), (3, 1.0)]

    def test_last_threshold_contents(self):
        d = gen_packing_hard(4, 6, 2, 4)
        assert points(d) == [(1, 0.0)] * 4 + [(4, 0.0)] * 2

    def test_every_member_has_zero_optimal_risk(self):
        for j in range(1, 5):
            d = gen_packing_hard(4, 8, 2, j)
            for loss in (l1_loss(), l2sq_loss()):
                assert risk(isotonic_fit(d, 4, loss), d, loss) < 1e-12

    def test_validation(self):
        with pytest.raises(ValidationError):
            gen_packing_hard(4, 6, 2, 0)
        with pytest.raises(ValidationError):
            gen_packing_hard(4, 6, 2, 5)
        with pytest.raises(ValidationError):
            gen_packing_hard(4, 3, 2, 1)
        with pytest.raises(ValidationError):
            gen_packing_hard(4, 6, 0, 1)


class TestPackingNeighbors:
    def test_interior_pair_differs_in_one_witness(self):
        base, nb = packing_neighbors(4, 8, 2, 2)
        assert points(base) == points(gen_packing_hard(4, 8, 2, 2))
        pa, pb = points(base), points(nb)
        diff = [(a, b) for a, b in zip(pa, pb) if a != b]
        assert len(diff) == 1
        assert diff[0][0] == (3, 1.0) and diff[0][1] == (3, 0.0)

    def test_last_pair_flips_up(self):
        base, nb = packing_neighbors(3, 6, 1, 3)
        pa, pb = points(base), points(nb)
        diff = [(a, b) for a, b in zip(pa, pb) if a != b]
        assert len(diff) == 1
        assert diff[0][0] == (3, 0.0) and diff[0][1] == (3, 1.0)


class TestAntichainHard:
    def test_small_example_contents(self):
        poset, d = gen_antichain_hard(3, 3, (1, 0), 1)
        assert poset.size == 3
        assert not poset.comparable(0, 1)
        assert points(d) == [(1, 1.0), (2, 0.0), (3, 0.0)]

    def test_repetition_triples_points(self):
        _, d = gen_antichain_hard(4, 10, (1, 0, 1), 3)
        assert points(d) == ([(1, 1.0)] * 3 + [(2, 0.0)] * 3 + [(3, 1.0)] * 3
                             + [(4, 0.0)])

    def test_payload_fits_with_zero_risk_and_decodes(self):
        bits = (1, 0, 1, 1)
        poset, d = gen_antichain_hard(6, 12, bits, 2)
        values = {i: float(bits[i - 1]) for i in range(1, 5)}
        values[5] = 0.0
        values[6] = 0.0
        for loss in (l1_loss(), l2sq_loss()):
            assert map_risk(values, d, loss) == 0.0
        assert tuple(decode_antichain_hard(values, 4)) == bits

    def test_decode_thresholds_at_half(self):
        vals = {1: 0.5, 2: 0.49, 3: 1.0}
        assert list(decode_antichain_hard(vals, 3)) == [1, 0, 1]

    def test_validation(self):
        with pytest.raises(ValidationError):
            gen_antichain_hard(3, 5, (1, 0, 1), 1)
        with pytest.raises(ValidationError):
            gen_antichain_hard(3, 1, (1, 0), 1)
        with pytest.raises(ValidationError):
            gen_antichain_hard(3, 5, (), 1)
        with pytest.raises(ValidationError):
            gen_antichain_hard(3, 5, (2, 0), 1)
        with pytest.raises(ValidationError):
            gen_antichain_hard(3, 5, (1, 0), 0)


class TestGridHard:
    def test_alphabet_size(self):
        assert grid_payload_positions(2, 6, 1) == (3, 2)
        assert grid_payload_positions(2, 6, 2) == (0, 2)
        assert grid_payload_positions(3, 12, 1) == (8, 3)

    def test_small_example_contents(self):
        poset, d = gen_grid_hard(2, 6, (2, 1), 1)
        assert poset.size == 12
        assert points(d) == [(5, 0.0), (6, 1.0), (7, 0.0), (8, 1.0)]

    def test_filler_points_at_corner(self):
        _, d = gen_grid_hard(2, 6, (1, 2), 1, n=7)
        assert points(d).count((1, 0.0)) == 3

    def test_labels_are_monotone_consistent(self):
        for w, h, z in ((2, 6, (2, 1)), (2, 8, (3, 2)), (3, 12, (1, 3, 2))):
            poset, d = gen_grid_hard(w, h, z, 2)
            zeros = np.unique(d.xs[d.ys == 0.0]) - 1
            ones = np.unique(d.xs[d.ys == 1.0]) - 1
            for o in ones:
                for zr in zeros:
                    assert not poset.leq(int(o), int(zr))

    def test_zero_risk_fit_decodes_payload(self):
        for w, h, z in ((2, 6, (2, 1)), (3, 12, (1, 3, 2))):
            poset, d = gen_grid_hard(w, h, z, 1)
            ones = np.unique(d.xs[d.ys == 1.0]) - 1
            values = {}
            for e in range(poset.size):
                above = any(poset.leq(int(o), e) for o in ones)
                values[e + 1] = 1.0 if above else 0.0
            assert map_risk(values, d, l2sq_loss()) == 0.0
            assert tuple(decode_grid_hard(values, w, h)) == z

    def test_validation(self):
        with pytest.raises(ValidationError):
            gen_grid_hard(2, 4, (1, 1), 1)
        with pytest.raises(ValidationError):
            gen_grid_hard(2, 6, (1,), 1)
        with pytest.raises(ValidationError):
            gen_grid_hard(2, 6, (3, 1), 1)
        with pytest.raises(ValidationError):
            gen_grid_hard(2, 6, (1, 1), 1, n=3)
        with pytest.raises(ValidationError):
            gen_grid_hard(2, 6, (1, 1), 0)
