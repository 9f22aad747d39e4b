"""Exact monotone regression oracles on integer total orders.

Two independent routes to the same quantities:

- ``brute_force_isotonic`` enumerates every nondecreasing grid-valued
  function (the reference oracle, with a hard cap on enumeration size).
- ``isotonic_fit`` / ``prefix_isotonic`` / ``prefix_clipped_isotonic`` use
  pool-adjacent-violators style block merging (mean pooling for squared
  loss, paired-heap median pooling for absolute loss) and a value-grid DP
  for custom losses.

All fits share the tie rule: among optimal monotone extensions, prefer the
pointwise-smallest one (carry block values rightward, fill the left margin
with the smallest admissible value, use lower medians for absolute loss).
"""
from __future__ import annotations

import bisect
import dataclasses
import heapq
import itertools
import math

import numpy as np

from .core import (CapExceeded, Dataset, LossSpec, StepFunction,
                   ValidationError, clip)

BRUTE_FORCE_CAP = 10_000_000
_ENUM_CHUNK = 100_000


# ---------------------------------------------------------------------------
# Reference oracle: exhaustive enumeration over a value grid.
# ---------------------------------------------------------------------------

def _check_grid(value_grid) -> np.ndarray:
    grid = np.asarray(value_grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0:
        raise ValidationError("value grid must be a nonempty 1-d array")
    if np.any(np.diff(grid) <= 0):
        raise ValidationError("value grid must be strictly increasing")
    if grid[0] < -1e-12 or grid[-1] > 1.0 + 1e-12:
        raise ValidationError("value grid must lie in [0, 1]")
    return grid


def _site_cost_matrix(data: Dataset, positions: np.ndarray, grid: np.ndarray,
                      loss: LossSpec) -> np.ndarray:
    """costs[i, g] = summed loss at positions[i] when fitted value is grid[g]."""
    costs = np.zeros((positions.size, grid.size))
    for i, x in enumerate(positions):
        ys = data.ys[data.xs == x]
        if ys.size:
            costs[i] = np.asarray(loss.evaluate(grid[:, None], ys[None, :])).sum(axis=1)
    return costs


def brute_force_isotonic(data: Dataset, m: int, loss: LossSpec,
                         value_grid) -> tuple[StepFunction, float]:
    """Exhaustive search over nondecreasing grid-valued functions on 1..m.

    Returns the first (lexicographically smallest, hence pointwise-smallest
    among enumerated optima) minimizer and its total loss. Raises CapExceeded
    when the candidate count passes BRUTE_FORCE_CAP.
    """
    if m < 1:
        raise ValidationError("domain size must be >= 1")
    data.check_domain(m)
    grid = _check_grid(value_grid)
    total = math.comb(m + grid.size - 1, m)
    if total > BRUTE_FORCE_CAP:
        raise CapExceeded(f"{total} monotone candidates exceed cap {BRUTE_FORCE_CAP}")
    positions = np.arange(1, m + 1)
    costs = _site_cost_matrix(data, positions, grid, loss)

    best_cost = math.inf
    best_assign = None
    it = itertools.combinations_with_replacement(range(grid.size), m)
    while True:
        chunk = list(itertools.islice(it, _ENUM_CHUNK))
        if not chunk:
            break
        idx = np.array(chunk, dtype=np.int64)
        chunk_costs = costs[np.arange(m)[None, :], idx].sum(axis=1)
        k = int(np.argmin(chunk_costs))
        if chunk_costs[k] < best_cost:
            best_cost = float(chunk_costs[k])
            best_assign = idx[k]
    values = grid[best_assign]
    keep = np.concatenate(([True], np.diff(values) != 0))
    f = StepFunction(positions[keep], values[keep])
    return f, best_cost


# ---------------------------------------------------------------------------
# Block engines for the merging route.
# ---------------------------------------------------------------------------

class _MeanBlock:
    """Squared-loss block: pooled value is the mean."""

    __slots__ = ("count", "total", "sq_total")

    def __init__(self, ys):
        ys = np.asarray(ys, dtype=np.float64)
        self.count = int(ys.size)
        self.total = float(ys.sum())
        self.sq_total = float((ys * ys).sum())

    @property
    def value(self) -> float:
        return self.total / self.count

    def cost(self) -> float:
        return max(0.0, self.sq_total - self.total * self.total / self.count)

    def absorb(self, other: "_MeanBlock") -> None:
        self.count += other.count
        self.total += other.total
        self.sq_total += other.sq_total

    def elements(self):  # pragma: no cover - mean blocks never need elements
        raise NotImplementedError


class _MedianBlock:
    """Absolute-loss block: paired heaps around the lower median.

    ``lo`` is a max-heap (negated) holding ceil(size/2) smallest labels,
    ``hi`` a min-heap with the rest. Pooled value is the lower median
    (top of ``lo``); the block cost follows from the heap sums.
    """

    __slots__ = ("lo", "hi", "sum_lo", "sum_hi")

    def __init__(self, ys=()):
        self.lo: list[float] = []
        self.hi: list[float] = []
        self.sum_lo = 0.0
        self.sum_hi = 0.0
        for y in ys:
            self.insert(float(y))

    def insert(self, y: float) -> None:
        if not self.lo or y <= -self.lo[0]:
            heapq.heappush(self.lo, -y)
            self.sum_lo += y
        else:
            heapq.heappush(self.hi, y)
            self.sum_hi += y
        target = (len(self.lo) + len(self.hi) + 1) // 2
        if len(self.lo) > target:
            moved = -heapq.heappop(self.lo)
            self.sum_lo -= moved
            heapq.heappush(self.hi, moved)
            self.sum_hi += moved
        elif len(self.lo) < target:
            moved = heapq.heappop(self.hi)
            self.sum_hi -= moved
            heapq.heappush(self.lo, -moved)
            self.sum_lo += moved

    @property
    def count(self) -> int:
        return len(self.lo) + len(self.hi)

    @property
    def value(self) -> float:
        return -self.lo[0]

    def cost(self) -> float:
        v = self.value
        return (self.sum_hi - self.sum_lo) + v * (len(self.lo) - len(self.hi))

    def elements(self) -> list[float]:
        return [-y for y in self.lo] + list(self.hi)

    def absorb(self, other: "_MedianBlock") -> None:
        if other.count > self.count:
            mine = self.elements()
            self.lo, self.hi = other.lo, other.hi
            self.sum_lo, self.sum_hi = other.sum_lo, other.sum_hi
            for y in mine:
                self.insert(y)
        else:
            for y in other.elements():
                self.insert(y)


def _make_block(loss: LossSpec, ys):
    if loss.kind == "l2sq":
        return _MeanBlock(ys)
    if loss.kind == "l1":
        return _MedianBlock(ys)
    raise ValidationError("block merging supports only l1 and l2sq losses")


class _PrefixEngine:
    """Incremental pool-adjacent-violators state over sites.

    Sites arrive left to right; each carries the label multiset of one
    distinct x. The engine keeps the optimal block partition of everything
    pushed so far, block values nondecreasing, plus running cumulative costs
    so restricted (clipped-solution) optima come out of two binary searches.
    """

    def __init__(self, loss: LossSpec):
        self.loss = loss
        self.blocks: list = []
        self.site_start: list[int] = []   # first site index per block
        self.values: list[float] = []     # block values, nondecreasing
        self.cum: list[float] = []        # cumulative cost through each block
        self.n_sites = 0

    def push_site(self, ys) -> None:
        block = _make_block(self.loss, ys)
        self.blocks.append(block)
        self.site_start.append(self.n_sites)
        self.values.append(block.value)
        base = self.cum[-1] if self.cum else 0.0
        self.cum.append(base + block.cost())
        self.n_sites += 1
        while len(self.blocks) >= 2 and self.values[-2] > self.values[-1]:
            top = self.blocks.pop()
            self.site_start.pop()
            self.values.pop()
            self.cum.pop()
            self.blocks[-1].absorb(top)
            self.values[-1] = self.blocks[-1].value
            base = self.cum[-2] if len(self.cum) >= 2 else 0.0
            self.cum[-1] = base + self.blocks[-1].cost()

    def pop_last_block(self) -> int:
        """Remove the rightmost block, returning its first site index."""
        start = self.site_start.pop()
        self.blocks.pop()
        self.values.pop()
        self.cum.pop()
        self.n_sites = start
        return start

    def total_cost(self) -> float:
        return self.cum[-1] if self.cum else 0.0

    def restricted_cost(self, tau: float, theta: float, end_unit: int,
                        c_tau: np.ndarray, c_theta: np.ndarray) -> float:
        """Optimal cost when values are confined to [tau, theta].

        The restricted optimum clips the unrestricted one: blocks whose value
        falls below tau are lifted to tau, blocks above theta pulled down to
        theta. ``c_tau``/``c_theta`` are prefix sums (over the caller's units,
        sites or points) of the loss at the constant tau resp. theta, and
        ``end_unit`` is the index of the last unit pushed so far; the engine
        maps block boundaries to units via ``unit_of``.
        """
        k_tau = bisect.bisect_left(self.values, tau)
        k_theta = bisect.bisect_left(self.values, theta)
        low = mid_lo = 0.0
        if k_tau > 0:
            low = c_tau[self._block_end_unit(k_tau - 1)]
            mid_lo = self.cum[k_tau - 1]
        mid_hi = self.cum[k_theta - 1] if k_theta > 0 else 0.0
        high = c_theta[end_unit]
        if k_theta > 0:
            high -= c_theta[self._block_end_unit(k_theta - 1)]
        return low + (mid_hi - mid_lo) + high

    # Unit mapping: by default units are sites. Callers tracking points
    # install a translation via ``unit_of``.
    def unit_of(self, site_index: int) -> int:
        return site_index

    def _block_end_unit(self, block_index: int) -> int:
        if block_index + 1 < len(self.blocks):
            return self.unit_of(self.site_start[block_index + 1] - 1)
        return self.unit_of(self.n_sites - 1)


def _group_sites(data: Dataset) -> tuple[np.ndarray, list[np.ndarray], np.ndarray]:
    """Sorted distinct x values, their label arrays, and point offsets."""
    if data.n == 0:
        return np.empty(0, dtype=np.int64), [], np.empty(0, dtype=np.int64)
    ds = data.sorted_by_x()
    site_xs, first = np.unique(ds.xs, return_index=True)
    groups = np.split(ds.ys, first[1:])
    return site_xs, groups, first


def site_prefix_restricted(site_groups: list[np.ndarray], loss: LossSpec,
                           tau: float, theta: float) -> np.ndarray:
    """Restricted-fit optima over site prefixes.

    Entry k is the minimum total loss over monotone functions into
    [tau, theta] fitting the first k sites (entry 0 is 0). This is the
    workhorse the private fitter calls once forward and once on reflected
    labels per recursion node.
    """
    if not (tau <= theta):
        raise ValidationError("invalid value window")
    out = np.zeros(len(site_groups) + 1)
    if not site_groups:
        return out
    site_tau = np.array([float(np.sum(loss.evaluate(tau, g))) for g in site_groups])
    site_theta = np.array([float(np.sum(loss.evaluate(theta, g))) for g in site_groups])
    c_tau = np.cumsum(site_tau)
    c_theta = np.cumsum(site_theta)
    engine = _PrefixEngine(loss)
    for k, ys in enumerate(site_groups):
        engine.push_site(ys)
        out[k + 1] = engine.restricted_cost(tau, theta, k, c_tau, c_theta)
    return out


# ---------------------------------------------------------------------------
# Public fits.
# ---------------------------------------------------------------------------

def _step_from_sites(site_xs: np.ndarray, site_values: np.ndarray, m: int,
                     floor_value: float) -> StepFunction:
    """Pointwise-smallest monotone extension of per-site values to 1..m."""
    starts = list(site_xs)
    values = list(site_values)
    if not starts:
        return StepFunction.constant(floor_value)
    if starts[0] > 1:
        starts.insert(0, 1)
        values.insert(0, floor_value)
    starts_a = np.asarray(starts)
    values_a = np.asarray(values, dtype=np.float64)
    keep = np.concatenate(([True], np.diff(values_a) != 0))
    return StepFunction(starts_a[keep], values_a[keep])


def _grid_dp_fit(site_costs: np.ndarray) -> tuple[np.ndarray, float]:
    """Min-cost nondecreasing assignment of grid indices to sites.

    Returns (per-site grid indices, optimal cost); backtracks toward the
    smallest index at every step.
    """
    n_sites, G = site_costs.shape
    dp = np.empty((n_sites, G))
    dp[0] = site_costs[0]
    for i in range(1, n_sites):
        dp[i] = site_costs[i] + np.minimum.accumulate(dp[i - 1])
    choice = np.empty(n_sites, dtype=np.int64)
    choice[-1] = int(np.argmin(dp[-1]))
    best = float(dp[-1][choice[-1]])
    for i in range(n_sites - 2, -1, -1):
        limit = choice[i + 1] + 1
        choice[i] = int(np.argmin(dp[i][:limit]))
    return choice, best


def isotonic_fit(data: Dataset, m: int, loss: LossSpec,
                 value_grid=None) -> StepFunction:
    """Optimal monotone fit on 1..m.

    With ``value_grid`` (required for custom losses) values are restricted to
    the grid and a prefix-min DP over sites runs in O(sites * grid). Without
    it, l1/l2sq use continuous-valued block merging. Empty data yields the
    constant smallest admissible value.
    """
    if m < 1:
        raise ValidationError("domain size must be >= 1")
    data.check_domain(m)
    site_xs, groups, _ = _group_sites(data)
    if value_grid is None:
        if loss.kind == "custom":
            raise ValidationError("custom losses require an explicit value grid")
        if not groups:
            return StepFunction.constant(0.0)
        engine = _PrefixEngine(loss)
        for ys in groups:
            engine.push_site(ys)
        site_values = np.empty(len(groups))
        bounds = engine.site_start + [len(groups)]
        for b, block in enumerate(engine.blocks):
            site_values[bounds[b]:bounds[b + 1]] = block.value
        return _step_from_sites(site_xs, np.clip(site_values, 0.0, 1.0), m, 0.0)
    grid = _check_grid(value_grid)
    if not groups:
        return StepFunction.constant(float(grid[0]))
    costs = np.stack([
        np.asarray(loss.evaluate(grid[:, None], ys[None, :])).sum(axis=1)
        for ys in groups
    ])
    choice, _ = _grid_dp_fit(costs)
    return _step_from_sites(site_xs, grid[choice], m, float(grid[0]))


@dataclasses.dataclass(frozen=True)
class BlockDecomposition:
    """Snapshot of the merged-block state after some prefix.

    Each entry is (start_point_index, pooled_value, cumulative_loss), where
    the cumulative loss counts everything through the end of that block and
    start indices are 0-based into the x-sorted point sequence.
    """

    blocks: tuple[tuple[int, float, float], ...]

    def values(self) -> list[float]:
        return [b[1] for b in self.blocks]


class _PointTracker:
    """Drives a _PrefixEngine point by point, handling duplicate x.

    A point extending the current site forces a rebuild of the engine tail:
    the rightmost block is popped and its sites re-pushed with the grown
    multiset. Distinct-x streams never rebuild, matching the amortized
    merging bound; heavy tie pathologies degrade gracefully.
    """

    def __init__(self, loss: LossSpec):
        self.engine = _PrefixEngine(loss)
        self.engine.unit_of = self._site_end_point  # type: ignore[method-assign]
        self.sites: list[list[float]] = []
        self.site_xs: list[int] = []
        self.site_end: list[int] = []  # last point index per site
        self.n_points = 0

    def _site_end_point(self, site_index: int) -> int:
        return self.site_end[site_index]

    def push_point(self, x: int, y: float) -> None:
        p = self.n_points
        if self.site_xs and self.site_xs[-1] == x:
            self.sites[-1].append(y)
            self.site_end[-1] = p
            span_start = self.engine.pop_last_block()
            for s in range(span_start, len(self.sites)):
                self.engine.push_site(self.sites[s])
        else:
            self.sites.append([y])
            self.site_xs.append(x)
            self.site_end.append(p)
            self.engine.push_site([y])
        self.n_points = p + 1

    def snapshot(self) -> BlockDecomposition:
        eng = self.engine
        entries = []
        for b, block in enumerate(eng.blocks):
            start_site = eng.site_start[b]
            start_point = 0 if start_site == 0 else self.site_end[start_site - 1] + 1
            entries.append((start_point, float(eng.values[b]), float(eng.cum[b])))
        return BlockDecomposition(tuple(entries))


def prefix_isotonic(data: Dataset, loss: LossSpec
                    ) -> list[tuple[float, BlockDecomposition]]:
    """Optimal monotone-fit loss for every prefix of the x-sorted points.

    Entry i (0-based) covers the first i+1 points; its loss equals what
    ``isotonic_fit`` reports on that prefix, and the accompanying block
    decomposition records the pooled structure.
    """
    ds = data.sorted_by_x()
    tracker = _PointTracker(loss)
    out = []
    for x, y in zip(ds.xs, ds.ys):
        tracker.push_point(int(x), float(y))
        out.append((tracker.engine.total_cost(), tracker.snapshot()))
    return out


def prefix_clipped_isotonic(data: Dataset, loss: LossSpec, tau: float,
                            theta: float) -> np.ndarray:
    """Restricted-range optimum for every prefix of the x-sorted points.

    Entry i is the minimum total loss over monotone functions into
    [tau, theta] on the first i+1 points; equivalently the loss of the
    unrestricted optimum clipped into the window (convexity makes clipping
    optimal). Only l1/l2sq are supported.
    """
    if loss.kind not in ("l1", "l2sq"):
        raise ValidationError("restricted prefixes support only l1 and l2sq")
    if not (tau <= theta):
        raise ValidationError("invalid value window")
    ds = data.sorted_by_x()
    c_tau = np.cumsum(np.asarray(loss.evaluate(tau, ds.ys), dtype=np.float64))
    c_theta = np.cumsum(np.asarray(loss.evaluate(theta, ds.ys), dtype=np.float64))
    tracker = _PointTracker(loss)
    out = np.empty(ds.n)
    for i, (x, y) in enumerate(zip(ds.xs, ds.ys)):
        tracker.push_point(int(x), float(y))
        out[i] = tracker.engine.restricted_cost(tau, theta, i, c_tau, c_theta)
    return out


def clip_solution(f: StepFunction, tau: float, theta: float) -> StepFunction:
    """Clamp a step function's values into [tau, theta]."""
    return StepFunction(f.starts, clip(f.values, tau, theta))
