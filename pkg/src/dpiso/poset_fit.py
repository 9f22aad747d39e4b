"""Private monotone regression when the domain is a partial order.

The recursion mirrors the total-order fitter: halve the value range at every
stage, pick where the function crosses the midpoint, recurse on both sides
with the stage budget. Over a poset the crossing is an antichain rather than
a threshold index: everything below it gets the lower half-range, everything
else the upper.

Scoring an antichain needs the best monotone assignment of each side's data
into its half-range. That optimum only depends on the data-carrying
elements: any monotone labeling of those extends to the rest of the part by
taking suprema, so the search runs on an induced subposet of at most n
elements. For convex losses the cost decomposes across value levels, and the
per-level minimum over up-closed subsets integrates in closed form; custom
losses fall back to an exact lattice sweep on a fixed value grid.
"""
from __future__ import annotations

import dataclasses
import math

import numpy as np

from .core import CapExceeded, Dataset, LossSpec, ValidationError
from .mechanism import ScoredCandidates, ensure_rng, sample
from .posets import ANTICHAIN_CAP, Poset, closures, enumerate_antichains
from .total_order import stage_count

CUSTOM_SCORE_GRID = 129
MAX_DATA_ELEMENTS = 20


@dataclasses.dataclass(frozen=True)
class PosetRecursionState:
    """One part of the recursion: a sub-poset plus its dyadic value range.

    ``part`` holds 0-based elements; ``data`` keeps the 1-based labels it was
    ingested with, restricted to the part. Stage ``t`` part ``i`` owns the
    value range [i/2^t, (i+1)/2^t].
    """

    t: int
    i: int
    part: tuple[int, ...]
    data: Dataset
    poset: Poset
    total_stages: int
    eps_stage: float

    def __post_init__(self):
        if not (0 <= self.t < self.total_stages):
            raise ValidationError("stage index outside the recursion depth")
        if not (0 <= self.i < 2 ** self.t):
            raise ValidationError("part index outside its stage")
        for e in self.part:
            if not (0 <= e < self.poset.size):
                raise ValidationError(f"element {e} outside the poset")
        if self.data.n:
            members = set(self.part)
            for x in self.data.xs:
                if int(x) - 1 not in members:
                    raise ValidationError(
                        f"data label {int(x)} outside the part")
        if self.eps_stage <= 0:
            raise ValidationError("stage budget must be positive")

    @property
    def tau(self) -> float:
        return self.i / 2 ** self.t

    @property
    def theta(self) -> float:
        return (self.i + 1) / 2 ** self.t


def _upset_members(elems: tuple[int, ...], poset: Poset) -> np.ndarray:
    """Membership matrix of every up-closed subset of the induced order."""
    k = len(elems)
    if k > MAX_DATA_ELEMENTS:
        raise CapExceeded(
            f"{k} distinct data positions in one part; the up-set sweep "
            f"handles at most {MAX_DATA_ELEMENTS}")
    leq = poset.leq_matrix[np.ix_(elems, elems)]
    up_int = [int(sum(1 << b for b in range(k) if leq[a, b] and a != b))
              for a in range(k)]
    req = [0] * (1 << k)
    for m in range(1, 1 << k):
        low = m & -m
        req[m] = req[m ^ low] | up_int[low.bit_length() - 1]
    keep = [m for m in range(1 << k) if req[m] & ~m == 0]
    masks = np.asarray(keep, dtype=np.int64)
    return (masks[:, None] >> np.arange(k)[None, :] & 1).astype(np.float64)


def _line_envelope_integral(inter: np.ndarray, slope: np.ndarray,
                            p: float, q: float) -> float:
    """Exact integral over [p, q] of the pointwise min of affine functions."""
    if q <= p:
        return 0.0
    order = np.lexsort((inter, -slope))
    inter, slope = inter[order], slope[order]
    # lower-envelope pieces as (intercept, slope, start of validity); slopes
    # strictly decrease along s, so lines arrive in takeover order
    stack: list[tuple[float, float, float]] = []
    for a, b in zip(inter, slope):
        if stack and stack[-1][1] == b:
            continue
        while stack:
            a0, b0, s0 = stack[-1]
            if (a - a0) / (b0 - b) <= s0:
                stack.pop()
            else:
                break
        if stack:
            a0, b0, _ = stack[-1]
            start = (a - a0) / (b0 - b)
            if start >= q:
                continue
        else:
            start = p
        stack.append((a, b, start))
    total = 0.0
    for idx, (a, b, s0) in enumerate(stack):
        s1 = stack[idx + 1][2] if idx + 1 < len(stack) else q
        total += a * (s1 - s0) + b * (s1 * s1 - s0 * s0) / 2.0
    return total


def _lattice_mincost(cost: np.ndarray, upsets: np.ndarray) -> float:
    """Exact min-cost monotone labeling into grid levels, any cost shape.

    ``cost[e, j]`` is element e's cost at level j. Sweeps levels from the
    top; at each one relaxes over removing minimal elements so every chain
    of nested up-sets is considered.
    """
    n_up, k = upsets.shape
    masks = [int(sum(1 << e for e in range(k) if row[e])) for row in upsets]
    index = {m: i for i, m in enumerate(masks)}
    order = sorted(range(n_up), key=lambda i: bin(masks[i]).count("1"))
    shrink = []
    for i in range(n_up):
        steps = []
        for e in range(k):
            if masks[i] >> e & 1 and (masks[i] ^ (1 << e)) in index:
                steps.append(index[masks[i] ^ (1 << e)])
        shrink.append(steps)
    levels = cost.shape[1]
    level_sum = upsets @ cost  # (n_up, levels)
    # h[U] = best cost of the elements of U using only levels >= j
    h = level_sum[:, levels - 1].copy()
    for j in range(levels - 2, -1, -1):
        m = h - level_sum[:, j]
        for i in order:
            for child in shrink[i]:
                if m[child] < m[i]:
                    m[i] = m[child]
        h = level_sum[:, j] + m
    return float(h[index[(1 << k) - 1]])


class _PartScorer:
    """Caches per-side restricted fits while scoring one part's antichains."""

    def __init__(self, part: tuple[int, ...], data: Dataset, poset: Poset,
                 loss: LossSpec, tau: float, theta: float):
        self.poset = poset
        self.loss = loss
        self.tau = tau
        self.theta = theta
        self.mid = (tau + theta) / 2.0
        order = np.argsort(data.xs, kind="stable")
        xs = data.xs[order] - 1
        ys = data.ys[order]
        self.elems, starts = np.unique(xs, return_index=True)
        self.ys_by_elem = np.split(ys, starts[1:])
        self.inner_total = float(np.sum(loss.inner_min(tau, theta, ys))) \
            if ys.size else 0.0
        self._upsets: dict[int, np.ndarray] = {}
        self._side: dict[tuple[int, bool], float] = {}

    def _upset_matrix(self, mask: int) -> np.ndarray:
        got = self._upsets.get(mask)
        if got is None:
            chosen = tuple(int(self.elems[j]) for j in range(len(self.elems))
                           if mask >> j & 1)
            got = _upset_members(chosen, self.poset)
            self._upsets[mask] = got
        return got

    def side_cost(self, mask: int, lower: bool) -> float:
        """Best monotone fit of the masked elements' points into one half."""
        if mask == 0:
            return 0.0
        key = (mask, lower)
        got = self._side.get(key)
        if got is not None:
            return got
        p, q = (self.tau, self.mid) if lower else (self.mid, self.theta)
        idx = [j for j in range(len(self.elems)) if mask >> j & 1]
        ys = [self.ys_by_elem[j] for j in idx]
        upsets = self._upset_matrix(mask)
        kind = self.loss.kind
        if kind == "l2sq":
            counts = np.array([y.size for y in ys], dtype=np.float64)
            sums = np.array([y.sum() for y in ys])
            sq = float(sum(((p - y) ** 2).sum() for y in ys))
            # the cost derivative of up-set U at value s is an affine line
            inter = upsets @ (-2.0 * sums)
            slope = 2.0 * (upsets @ counts)
            val = sq + _line_envelope_integral(inter, slope, p, q)
        elif kind == "l1":
            flat = np.concatenate(ys)
            bps = np.unique(np.concatenate(
                [np.clip(flat, p, q), [p, q]]))
            mids = (bps[:-1] + bps[1:]) / 2.0
            sig = np.empty((len(idx), mids.size))
            for row, y in enumerate(ys):
                s = np.sort(y)
                below = np.searchsorted(s, mids, side="left")
                above = y.size - np.searchsorted(s, mids, side="right")
                sig[row] = below - above
            mins = (upsets @ sig).min(axis=0)
            base = float(sum(np.abs(p - y).sum() for y in ys))
            val = base + float(mins @ np.diff(bps))
        else:
            grid = np.linspace(p, q, CUSTOM_SCORE_GRID)
            cost = np.empty((len(idx), grid.size))
            for row, y in enumerate(ys):
                cost[row] = self.loss.evaluate(
                    grid[:, None], y[None, :]).sum(axis=1)
            val = _lattice_mincost(cost, upsets)
        self._side[key] = val
        return val

    def score(self, antichain_elems: tuple[int, ...]) -> float:
        down = 0
        for e in antichain_elems:
            down |= self.poset.down_masks[e]
        lower_mask = 0
        for j, e in enumerate(self.elems):
            if down >> int(e) & 1:
                lower_mask |= 1 << j
        full = (1 << len(self.elems)) - 1
        raw = (self.side_cost(lower_mask, True)
               + self.side_cost(full ^ lower_mask, False))
        return max(raw - self.inner_total, 0.0)


def antichain_scores(state: PosetRecursionState, loss: LossSpec,
                     cap: int = ANTICHAIN_CAP) -> ScoredCandidates:
    """Score every antichain of the part as a midpoint-crossing choice.

    Candidate ids are sorted tuples of 1-based labels. An antichain's score
    is the best monotone fit of the data below it into the lower half-range
    plus the rest into the upper half-range, with per-point losses measured
    against their best value anywhere in the part's range. Sensitivity is
    the loss constant times the range width.
    """
    antichains = enumerate_antichains(state.poset, sub=state.part, cap=cap)
    scorer = _PartScorer(state.part, state.data, state.poset, loss,
                         state.tau, state.theta)
    ids = []
    scores = np.empty(len(antichains))
    for k, ac in enumerate(antichains):
        ids.append(tuple(e + 1 for e in ac.elements))
        scores[k] = scorer.score(ac.elements)
    width = state.theta - state.tau
    return ScoredCandidates(ids=tuple(ids), scores=scores,
                            sensitivity=loss.lipschitz * width,
                            epsilon=state.eps_stage)


def fit_dp_poset(data: Dataset, poset: Poset, loss: LossSpec, epsilon: float,
                 rng=None, cap: int = ANTICHAIN_CAP) -> dict[int, float]:
    """Privately fit a monotone map on the poset; returns label -> value.

    The budget splits evenly across max(1, ceil(log2(epsilon * n))) stages.
    Every part consumes one mechanism draw per stage, including parts that
    hold no data, so the draw sequence never depends on where the data fell.
    """
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    if data.n == 0:
        raise ValidationError("cannot fit an empty dataset")
    data.check_domain(poset.size)
    rng = ensure_rng(rng)
    total = stage_count(epsilon, data.n)
    eps_stage = epsilon / total
    depth = 2 ** (total - 1)
    parts: list[tuple[int, tuple[int, ...], np.ndarray]] = [
        (0, tuple(range(poset.size)), np.arange(data.n))]
    values = {}
    for t in range(total - 1):
        nxt = []
        for i, part, rows in parts:
            sub = Dataset(data.xs[rows], data.ys[rows])
            if sub.n == 0:
                antichains = enumerate_antichains(poset, sub=part, cap=cap)
                pick = antichains[int(rng.integers(0, len(antichains)))]
                chosen = pick.elements
            else:
                state = PosetRecursionState(t, i, part, sub, poset,
                                            total, eps_stage)
                cands = antichain_scores(state, loss, cap=cap)
                labels, _ = sample(cands, rng)
                chosen = tuple(lbl - 1 for lbl in labels)
            lower, upper = closures(poset, chosen, within=part)
            lower_set = set(lower)
            in_lower = np.array([int(data.xs[r]) - 1 in lower_set
                                 for r in rows], dtype=bool)
            nxt.append((2 * i, lower, rows[in_lower]))
            nxt.append((2 * i + 1, upper, rows[~in_lower]))
        parts = nxt
    for i, part, _rows in parts:
        level = i / depth
        for e in part:
            values[e + 1] = level
    return values
