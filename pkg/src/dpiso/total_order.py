"""Differentially private monotone regression on 1..m by recursive bisection.

The fitter runs a fixed number of stages. Every part of the domain carries a
value window; a stage splits each part at a privately chosen threshold, the
left child inheriting the lower half-window and the right child the upper
half-window. After the last stage each part is assigned its window floor, so
the output is a monotone step function on a dyadic value grid.

Each threshold draw spends ``epsilon / stage_count`` through the exponential
mechanism; parts at one stage hold disjoint data, so a stage costs one
budget share and the whole fit at most ``epsilon``.

Two scoring paths produce the candidate scores:

- ``fast``: restricted-range prefix fits via block merging (l1/l2sq only),
  one forward sweep plus one sweep on reflected labels per part.
- ``general``: a value-grid DP restricted to the output grid, which accepts
  any loss.
"""
from __future__ import annotations

import dataclasses
import math

import numpy as np

from .core import Dataset, LossSpec, StepFunction, ValidationError
from .isotonic import _grid_dp_fit, site_prefix_restricted
from .mechanism import ScoredCandidates, ensure_rng, sample


def stage_count(epsilon: float, n: int) -> int:
    """Number of budget shares: max(1, ceil(log2(epsilon * n)))."""
    if not (epsilon > 0):
        raise ValidationError("epsilon must be positive")
    if n < 0:
        raise ValidationError("n must be nonnegative")
    if epsilon * n <= 1:
        return 1
    return max(1, math.ceil(math.log2(epsilon * n) - 1e-9))


@dataclasses.dataclass(frozen=True)
class RecursionState:
    """One part of the domain during the recursion.

    The part covers domain elements ``lo..hi`` (empty when lo > hi) at stage
    ``t`` with part index ``i``, so its value window is
    ``[i / 2^t, (i + 1) / 2^t]``. ``data`` holds the points falling in the
    part, ``total_stages`` the fit-wide stage count, and ``eps_stage`` the
    per-stage budget.
    """

    t: int
    i: int
    lo: int
    hi: int
    data: Dataset
    total_stages: int
    eps_stage: float

    def __post_init__(self):
        if self.t < 0 or not (0 <= self.i < 2 ** self.t):
            raise ValidationError("invalid stage or part index")
        if self.data.n:
            if self.lo > self.hi:
                raise ValidationError("empty part cannot hold data")
            if self.data.xs.min() < self.lo or self.data.xs.max() > self.hi:
                raise ValidationError("data outside the part")

    @property
    def tau(self) -> float:
        return self.i / 2 ** self.t

    @property
    def theta(self) -> float:
        return (self.i + 1) / 2 ** self.t

    @property
    def empty(self) -> bool:
        return self.lo > self.hi


def _dyadic_grid(total_stages: int, lo_val: float, hi_val: float) -> np.ndarray:
    """Multiples of 1 / 2^(T-1) inside [lo_val, hi_val]."""
    denom = 2 ** (total_stages - 1)
    first = math.ceil(lo_val * denom - 1e-9)
    last = math.floor(hi_val * denom + 1e-9)
    if last < first:
        raise ValidationError("empty dyadic grid for the window")
    return np.arange(first, last + 1, dtype=np.float64) / denom


def _interval_candidates(state: RecursionState, site_xs: np.ndarray
                         ) -> tuple[list[tuple[int, int]], np.ndarray]:
    """Constant-score threshold runs and their integer lengths.

    Thresholds range over {lo - 1} + {lo..hi}; the score only changes at a
    data site, so run k covers thresholds [site_k, site_{k+1} - 1] with the
    leading run starting at lo - 1. Both "everything right" and "everything
    left" extremes sit inside the first and last run.
    """
    edges = [state.lo - 1] + [int(x) for x in site_xs] + [state.hi + 1]
    ids = []
    for k in range(len(edges) - 1):
        ids.append((edges[k], edges[k + 1] - 1))
    lengths = np.array([b - a + 1 for a, b in ids], dtype=np.float64)
    return ids, lengths


def _site_cost_tensor(groups, grid: np.ndarray, loss: LossSpec) -> np.ndarray:
    return np.stack([
        np.asarray(loss.evaluate(grid[:, None], ys[None, :])).sum(axis=1)
        for ys in groups
    ]) if groups else np.zeros((0, grid.size))


def _grid_prefix_losses(site_costs: np.ndarray) -> np.ndarray:
    """Entry k: optimal nondecreasing assignment cost of the first k sites."""
    K = site_costs.shape[0]
    out = np.zeros(K + 1)
    running = None
    for k in range(K):
        row = site_costs[k] + (0.0 if running is None else running)
        running = np.minimum.accumulate(row)
        out[k + 1] = float(running[-1])
    return out


def _grid_suffix_losses(site_costs: np.ndarray) -> np.ndarray:
    """Entry k: optimal nondecreasing assignment cost of sites k..K-1."""
    K = site_costs.shape[0]
    out = np.zeros(K + 1)
    running = None
    for k in range(K - 1, -1, -1):
        row = site_costs[k] + (0.0 if running is None else running)
        running = np.minimum.accumulate(row[::-1])[::-1]
        out[k] = float(running[0])
    return out


def threshold_scores(state: RecursionState, loss: LossSpec, path: str = "fast",
                     value_grid=None) -> ScoredCandidates:
    """Score every split threshold for one part.

    A threshold sends elements <= it left; the score is the best monotone fit
    of the left data into the lower half-window plus the best fit of the
    right data into the upper half-window, both measured with the loss
    clipped to the part's full window. Scores are grouped into constant runs
    with run length as weight; sensitivity is ``lipschitz * window width``.

    ``path="fast"`` uses continuous-valued restricted fits (l1/l2sq),
    ``path="general"`` restricts values to the output value grid (any loss;
    ``value_grid`` overrides the dyadic default, mainly for cross-checks).
    """
    if path not in ("fast", "general"):
        raise ValidationError("path must be 'fast' or 'general'")
    tau, theta = state.tau, state.theta
    midpoint = (tau + theta) / 2.0
    ds = state.data.sorted_by_x()
    site_xs, first = np.unique(ds.xs, return_index=True)
    groups = np.split(ds.ys, first[1:]) if ds.n else []
    ids, lengths = _interval_candidates(state, site_xs)
    K = len(site_xs)

    if K == 0:
        scores = np.zeros(1)
    elif path == "fast":
        left = site_prefix_restricted(groups, loss, tau, midpoint)
        reflected = [1.0 - ys for ys in reversed(groups)]
        right = site_prefix_restricted(reflected, loss, 1.0 - theta, 1.0 - midpoint)[::-1]
        inner = float(np.sum(loss.inner_min(tau, theta, ds.ys)))
        scores = left + right - inner
    else:
        if value_grid is None:
            lower_grid = _dyadic_grid(state.total_stages, tau, midpoint)
            upper_grid = _dyadic_grid(state.total_stages, midpoint, theta)
        else:
            grid = np.asarray(value_grid, dtype=np.float64)
            lower_grid = grid[(grid >= tau - 1e-12) & (grid <= midpoint + 1e-12)]
            upper_grid = grid[(grid >= midpoint - 1e-12) & (grid <= theta + 1e-12)]
            if lower_grid.size == 0 or upper_grid.size == 0:
                raise ValidationError("value grid misses a half-window")
        inner_site = [np.asarray(loss.inner_min(tau, theta, ys)) for ys in groups]
        lower_costs = _site_cost_tensor(groups, lower_grid, loss)
        upper_costs = _site_cost_tensor(groups, upper_grid, loss)
        for k in range(K):
            lower_costs[k] -= inner_site[k].sum()
        left = _grid_prefix_losses(lower_costs)
        right = _grid_suffix_losses(upper_costs)
        inner_suffix = np.zeros(K + 1)
        if K:
            sums = np.array([g.sum() for g in inner_site])
            inner_suffix[:K] = np.cumsum(sums[::-1])[::-1]
        scores = left + (right - inner_suffix)

    scores = np.maximum(scores, 0.0)
    sensitivity = loss.lipschitz * (theta - tau)
    return ScoredCandidates(ids=tuple(ids), scores=scores,
                            sensitivity=sensitivity, epsilon=state.eps_stage,
                            weights=lengths)


class FitTrace:
    """Optional per-stage bookkeeping captured during a fit."""

    def __init__(self):
        self.stage_excess: dict[int, list[float]] = {}
        self.stage_bound: dict[int, float] = {}

    def record(self, t: int, excess: float, bound: float) -> None:
        self.stage_excess.setdefault(t, []).append(excess)
        self.stage_bound[t] = bound


_EMPTY_DATA = Dataset(np.array([], dtype=np.int64), np.array([]))


def _split_part(state: RecursionState, loss: LossSpec, path: str,
                rng: np.random.Generator, trace: FitTrace | None
                ) -> tuple[RecursionState, RecursionState]:
    if state.data.n == 0:
        # All thresholds score zero, so the mechanism draw is exactly a
        # length-weighted uniform; take its closed form and skip the scoring.
        chosen = int(rng.integers(state.lo - 1, state.hi + 1))
        left = RecursionState(state.t + 1, 2 * state.i, state.lo,
                              min(chosen, state.hi), _EMPTY_DATA,
                              state.total_stages, state.eps_stage)
        right = RecursionState(state.t + 1, 2 * state.i + 1,
                               max(chosen + 1, state.lo), state.hi,
                               _EMPTY_DATA, state.total_stages, state.eps_stage)
        return left, right
    cands = threshold_scores(state, loss, path=path)
    (a, b), idx = sample(cands, rng)
    chosen = int(a + rng.integers(0, b - a + 1))
    if trace is not None:
        trace.record(state.t, float(cands.scores[idx] - cands.scores.min()),
                     2.0 * cands.sensitivity / state.eps_stage)
    mask = state.data.xs <= chosen
    left_data = Dataset(state.data.xs[mask], state.data.ys[mask])
    right_data = Dataset(state.data.xs[~mask], state.data.ys[~mask])
    left = RecursionState(state.t + 1, 2 * state.i, state.lo, min(chosen, state.hi),
                          left_data, state.total_stages, state.eps_stage)
    right = RecursionState(state.t + 1, 2 * state.i + 1, max(chosen + 1, state.lo),
                           state.hi, right_data, state.total_stages, state.eps_stage)
    return left, right


def fit_dp(data: Dataset, m: int, loss: LossSpec, epsilon: float, rng=None,
           path: str = "fast", trace: FitTrace | None = None,
           stage_budget_override: float | None = None) -> StepFunction:
    """Private monotone fit on 1..m under pure epsilon-DP.

    Splits run for stages t = 0..T-2 where T = stage_count(epsilon, n), each
    draw at budget epsilon / T (so the total stays under epsilon); final
    parts at level T-1 take their window floor i / 2^(T-1). T = 1 spends
    nothing and returns the constant 0. Empty parts still consume a trivial
    draw so the transcript shape is data-independent. Budgets above 1 are
    accepted as-is.

    ``stage_budget_override`` replaces the per-stage share and breaks the
    privacy guarantee; it exists solely as the audit's negative control.
    """
    if m < 1:
        raise ValidationError("domain size must be >= 1")
    if data.n == 0:
        raise ValidationError("cannot fit an empty dataset")
    data.check_domain(m)
    if not (epsilon > 0):
        raise ValidationError("epsilon must be positive")
    rng = ensure_rng(rng)
    T = stage_count(epsilon, data.n)
    eps_stage = epsilon / T if stage_budget_override is None else stage_budget_override
    parts = [RecursionState(0, 0, 1, m, data.sorted_by_x(), T, eps_stage)]
    for _ in range(T - 1):
        next_parts = []
        for part in parts:
            left, right = _split_part(part, loss, path, rng, trace)
            next_parts.extend((left, right))
        parts = next_parts
    denom = 2 ** (T - 1)
    starts, values = [], []
    for part in parts:
        if part.empty:
            continue
        starts.append(part.lo)
        values.append(part.i / denom)
    keep = [0] + [k for k in range(1, len(starts)) if values[k] != values[k - 1]]
    return StepFunction(np.array([starts[k] for k in keep]),
                        np.array([values[k] for k in keep]))
