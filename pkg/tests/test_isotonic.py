"""Exact isotonic solvers: full fit, prefix state, clipped variants, brute force."""
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpiso.core import (
    Dataset,
    StepFunction,
    ValidationError,
    l1_loss,
    l2sq_loss,
    total_risk,
)
from dpiso.isotonic import (
    BlockDecomposition,
    brute_force_isotonic,
    clip_solution,
    isotonic_fit,
    prefix_clipped_isotonic,
    prefix_isotonic,
)


def grid_functions(m, grid):
    """All monotone maps 1..m -> grid, as value tuples."""
    return itertools.combinations_with_replacement(sorted(grid), m)


def best_monotone_on_grid(data, m, loss, grid):
    grid = np.sort(np.asarray(grid, dtype=np.float64))
    # cost[p, g] = total loss of value grid[g] over the points at position p+1
    cost = np.zeros((m, grid.size))
    for p in range(m):
        ys = data.ys[data.xs == p + 1]
        if ys.size:
            cost[p] = loss.evaluate(grid[:, None], ys[None, :]).sum(axis=1)
    combos = np.array(list(itertools.combinations_with_replacement(
        range(grid.size), m)), dtype=np.int64)
    totals = cost[np.arange(m)[None, :], combos].sum(axis=1)
    return float(totals.min())


class TestIsotonicFit:
    def test_already_monotone_is_interpolated(self):
        ds = Dataset.from_pairs([(1, 0.2), (2, 0.8)])
        f = isotonic_fit(ds, 2, l2sq_loss())
        assert total_risk(f, ds, l2sq_loss()) == pytest.approx(0.0, abs=1e-12)
        assert f(1) == pytest.approx(0.2) and f(2) == pytest.approx(0.8)

    def test_decreasing_pair_pools_to_mean(self):
        ds = Dataset.from_pairs([(1, 0.8), (2, 0.2)])
        f = isotonic_fit(ds, 2, l2sq_loss())
        np.testing.assert_allclose(f.values_on(2), [0.5, 0.5])
        assert total_risk(f, ds, l2sq_loss()) == pytest.approx(0.18, abs=1e-12)

    def test_l1_zigzag(self):
        ds = Dataset.from_pairs([(1, 1.0), (2, 0.0), (3, 1.0)])
        f = isotonic_fit(ds, 3, l1_loss())
        assert total_risk(f, ds, l1_loss()) == pytest.approx(1.0, abs=1e-12)

    def test_l1_even_block_takes_lower_median(self):
        ds = Dataset.from_pairs([(1, 0.9), (2, 0.1)])
        f = isotonic_fit(ds, 2, l1_loss())
        np.testing.assert_allclose(f.values_on(2), [0.1, 0.1])

    def test_output_monotone_and_covers_domain(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            n, m = int(rng.integers(1, 12)), int(rng.integers(1, 9))
            ds = Dataset(rng.integers(1, m + 1, n), rng.uniform(0, 1, n))
            for loss in (l1_loss(), l2sq_loss()):
                f = isotonic_fit(ds, m, loss)
                vals = f.values_on(m)
                assert np.all(np.diff(vals) >= -1e-12)
                assert vals.min() >= -1e-12 and vals.max() <= 1 + 1e-12

    def test_empty_data_fits_smallest_value(self):
        empty = Dataset(np.array([], dtype=np.int64), np.array([]))
        f = isotonic_fit(empty, 3, l2sq_loss())
        np.testing.assert_allclose(f.values_on(3), 0.0)

    def test_grid_restriction_respected(self):
        ds = Dataset.from_pairs([(1, 0.3), (2, 0.6)])
        grid = np.array([0.0, 0.5, 1.0])
        f = isotonic_fit(ds, 2, l2sq_loss(), value_grid=grid)
        assert set(np.round(f.values_on(2), 12)) <= {0.0, 0.5, 1.0}

    def test_point_outside_domain_rejected(self):
        with pytest.raises(ValidationError):
            isotonic_fit(Dataset.from_pairs([(3, 0.5)]), 2, l1_loss())

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(99)
        grid = np.linspace(0, 1, 9)
        for _ in range(60):
            m = int(rng.integers(1, 6))
            n = int(rng.integers(1, 6))
            ds = Dataset(rng.integers(1, m + 1, n),
                         rng.choice(grid, n))
            for loss in (l1_loss(), l2sq_loss()):
                f = isotonic_fit(ds, m, loss, value_grid=grid)
                got = total_risk(f, ds, loss)
                want = best_monotone_on_grid(ds, m, loss, grid)
                assert got == pytest.approx(want, abs=1e-9)


class TestBruteForce:
    def test_candidate_count(self):
        # Monotone maps from a 2-chain into 3 values: C(4, 2) = 6 of them.
        grid = np.array([0.0, 0.5, 1.0])
        assert len(list(grid_functions(2, grid))) == 6
        ds = Dataset.from_pairs([(1, 0.4), (2, 0.6)])
        fn, cost = brute_force_isotonic(ds, 2, l2sq_loss(), value_grid=grid)
        best = min(total_risk(StepFunction(np.array([1, 2]), np.array(v)), ds,
                              l2sq_loss())
                   for v in grid_functions(2, grid))
        assert cost == pytest.approx(best, abs=1e-12)

    def test_cap_exceeded(self):
        from dpiso.core import CapExceeded
        ds = Dataset.from_pairs([(1, 0.5)])
        with pytest.raises(CapExceeded):
            brute_force_isotonic(ds, 40, l2sq_loss(),
                                 value_grid=np.linspace(0, 1, 257))

    def test_agrees_with_fit(self):
        rng = np.random.default_rng(2)
        grid = np.linspace(0, 1, 5)
        for _ in range(25):
            m = int(rng.integers(1, 5))
            ds = Dataset(rng.integers(1, m + 1, 4), rng.uniform(0, 1, 4))
            bf, _ = brute_force_isotonic(ds, m, l2sq_loss(), value_grid=grid)
            f = isotonic_fit(ds, m, l2sq_loss(), value_grid=grid)
            assert total_risk(f, ds, l2sq_loss()) == pytest.approx(
                total_risk(bf, ds, l2sq_loss()), abs=1e-9)


class TestPrefixIsotonic:
    def test_prefix_losses_example(self):
        ds = Dataset.from_pairs([(1, 0.8), (2, 0.2), (3, 0.9)])
        out = prefix_isotonic(ds, l2sq_loss())
        losses = [entry[0] for entry in out]
        np.testing.assert_allclose(losses, [0.0, 0.18, 0.18], atol=1e-12)

    def test_final_entry_matches_full_fit(self):
        rng = np.random.default_rng(31)
        for _ in range(40):
            n = int(rng.integers(1, 40))
            m = int(rng.integers(1, 12))
            ds = Dataset(rng.integers(1, m + 1, n), rng.uniform(0, 1, n))
            for loss in (l1_loss(), l2sq_loss()):
                out = prefix_isotonic(ds, loss)
                f = isotonic_fit(ds, m, loss)
                assert out[-1][0] == pytest.approx(total_risk(f, ds, loss), abs=1e-9)

    def test_prefix_losses_nondecreasing(self):
        rng = np.random.default_rng(8)
        ds = Dataset(rng.integers(1, 9, 30), rng.uniform(0, 1, 30))
        for loss in (l1_loss(), l2sq_loss()):
            losses = [e[0] for e in prefix_isotonic(ds, loss)]
            assert all(b >= a - 1e-12 for a, b in zip(losses, losses[1:]))

    def test_block_values_strictly_increasing(self):
        rng = np.random.default_rng(15)
        ds = Dataset(rng.integers(1, 7, 25), rng.uniform(0, 1, 25))
        for loss in (l1_loss(), l2sq_loss()):
            for _, dec in prefix_isotonic(ds, loss):
                assert isinstance(dec, BlockDecomposition)
                vals = dec.values()
                assert all(b > a - 1e-12 for a, b in zip(vals, vals[1:]))
                starts = [b[0] for b in dec.blocks]
                assert starts[0] == 0
                assert all(b > a for a, b in zip(starts, starts[1:]))


class TestPrefixClipped:
    def test_single_point_example(self):
        ds = Dataset.from_pairs([(1, 0.9)])
        out = prefix_clipped_isotonic(ds, l2sq_loss(), 0.0, 0.5)
        np.testing.assert_allclose(out, [0.16], atol=1e-12)

    def test_full_window_reduces_to_unrestricted(self):
        rng = np.random.default_rng(44)
        for _ in range(20):
            n = int(rng.integers(1, 25))
            ds = Dataset(rng.integers(1, 7, n), rng.uniform(0, 1, n))
            for loss in (l1_loss(), l2sq_loss()):
                clipped = prefix_clipped_isotonic(ds, loss, 0.0, 1.0)
                plain = [e[0] for e in prefix_isotonic(ds, loss)]
                np.testing.assert_allclose(clipped, plain, atol=1e-9)

    def test_matches_clip_then_evaluate(self):
        # Restricted optimum equals clipping the unrestricted fit into the window.
        rng = np.random.default_rng(10)
        for _ in range(25):
            n = int(rng.integers(1, 30))
            m = 10
            ds = Dataset(rng.integers(1, m + 1, n), rng.uniform(0, 1, n)).sorted_by_x()
            tau, theta = np.sort(rng.uniform(0, 1, 2))
            for loss in (l1_loss(), l2sq_loss()):
                out = prefix_clipped_isotonic(ds, loss, tau, theta)
                for i in range(n):
                    prefix = Dataset(ds.xs[:i + 1], ds.ys[:i + 1])
                    f = isotonic_fit(prefix, m, loss)
                    g = clip_solution(f, tau, theta)
                    assert out[i] == pytest.approx(total_risk(g, prefix, loss), abs=1e-9)

    def test_custom_loss_rejected(self):
        from dpiso.core import custom_loss
        loss = custom_loss(lambda a, b: abs(a - b), lipschitz=1.0)
        with pytest.raises(ValidationError):
            prefix_clipped_isotonic(Dataset.from_pairs([(1, 0.5)]), loss, 0.0, 1.0)


class TestClipSolution:
    def test_clamps_values(self):
        f = StepFunction(np.array([1, 2, 3]), np.array([0.1, 0.5, 0.9]))
        g = clip_solution(f, 0.25, 0.75)
        np.testing.assert_allclose(g.values, [0.25, 0.5, 0.75])
        np.testing.assert_array_equal(g.starts, f.starts)

    def test_risk_equals_restricted_brute_force(self):
        # Clipping the unrestricted optimum is optimal among window-valued fits.
        rng = np.random.default_rng(77)
        for _ in range(30):
            m = int(rng.integers(1, 5))
            n = int(rng.integers(1, 6))
            ds = Dataset(rng.integers(1, m + 1, n), rng.uniform(0, 1, n))
            tau, theta = np.sort(rng.choice(np.linspace(0, 1, 9), 2, replace=False))
            inner = np.linspace(tau, theta, 33)
            for loss in (l1_loss(), l2sq_loss()):
                g = clip_solution(isotonic_fit(ds, m, loss), tau, theta)
                got = total_risk(g, ds, loss)
                want = best_monotone_on_grid(ds, m, loss, inner)
                # The dense inner grid may sit slightly off the optimum.
                assert got <= want + loss.lipschitz * (theta - tau) / 32 + 1e-9


@given(st.lists(st.tuples(st.integers(1, 6), st.floats(0, 1)), min_size=1, max_size=10))
@settings(max_examples=80, deadline=None)
def test_fit_never_beaten_by_constants(pairs):
    ds = Dataset.from_pairs(pairs)
    for loss in (l1_loss(), l2sq_loss()):
        f = isotonic_fit(ds, 6, loss)
        fit_loss = total_risk(f, ds, loss)
        for c in np.linspace(0, 1, 11):
            const = StepFunction.constant(float(c))
            assert fit_loss <= total_risk(const, ds, loss) + 1e-9
