"""Differentially private shape-constrained monotone regression on 1..m.

Extends the recursive bisection fitter with side constraints on the output:
a budget of constant or linear pieces, a Lipschitz bound on the rise between
neighboring positions, or convexity/concavity of the discrete second
differences. The engine works over structured intervals: a domain slice plus
a value window with endpoints on a uniform grid 0..H, carrying whatever
payload the constraint needs. A split candidate names the boundary, the
junction values on both sides of it, and how the remaining budget divides;
its score is the best clipped loss each side can still reach. Junction pins
(a child's boundary value frozen to its window edge) make the assembled
output satisfy the constraint globally, not just per part.

Candidate sets are enumerated in full, infeasible combinations included
(their score is +inf), so the transcript shape never depends on the data.
Counts grow quadratically in the value resolution for the slope-constrained
variants; the resolution cap keeps that affordable at desk scale.

The concave variant is the convex engine run on the flipped problem
(positions reversed, labels replaced by their complement) and mapped back.
"""
from __future__ import annotations

import dataclasses
import math

import numpy as np

from .core import (Dataset, LossSpec, PiecewiseLinearFunction, StepFunction,
                   ValidationError)
from .mechanism import ScoredCandidates, ensure_rng, sample
from .total_order import stage_count

VARIANTS = ("vanilla", "const", "linear", "lipschitz", "convex", "concave")

_PIECE_VARIANTS = ("const", "linear")

DEFAULT_RESOLUTION_CAP = 4096


def grid_resolution(variant: str, n: int, m: int, total_stages: int,
                    h_cap: int = DEFAULT_RESOLUTION_CAP) -> int:
    """Value-grid density H for one fit.

    Constant pieces only ever take window endpoints, so the dyadic density
    2^(T-1) is exact for them; linear pieces need n steps; the
    slope-constrained variants need m*n so that rounding a feasible function
    keeps it feasible. Capped at ``h_cap`` because candidate counts are
    quadratic in H for the slope-constrained variants.
    """
    if variant not in VARIANTS:
        raise ValidationError(f"unknown variant {variant!r}")
    if h_cap < 1:
        raise ValidationError("resolution cap must be >= 1")
    if variant in ("vanilla", "const"):
        base = 2 ** (total_stages - 1)
    elif variant == "linear":
        base = max(n, 1)
    else:
        base = max(m, 1) * max(n, 1)
    return max(1, min(base, h_cap))


@dataclasses.dataclass(frozen=True)
class StructuredInterval:
    """One part of the constrained recursion.

    The part covers domain positions ``lo..hi`` (empty exactly when
    ``hi == lo - 1``) and the value window ``[a/grid, b/grid]``. Payload by
    variant:

    - vanilla: none
    - const: ``r`` remaining constant pieces (0 exactly on an empty domain)
    - linear: ``r`` remaining linear pieces, plus pins
    - lipschitz: ``dmax``, the largest allowed step in grid units, plus pins
    - convex/concave: step bounds ``dlo``/``dhi`` (None = unbounded), plus pins

    ``b1`` pins the first position's value to the window bottom and ``b2``
    the last position's value to the window top; pins on an empty domain are
    vacuous. Pins exist so that the junction steps chosen by a split stay
    binding while the children keep splitting.
    """

    variant: str
    lo: int
    hi: int
    a: int
    b: int
    grid: int
    r: int | None = None
    b1: bool = False
    b2: bool = False
    dmax: int | None = None
    dlo: int | None = None
    dhi: int | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}")
        if self.lo < 1 or self.hi < self.lo - 1:
            raise ValidationError("bad domain interval")
        if self.grid < 1 or not (0 <= self.a <= self.b <= self.grid):
            raise ValidationError("window endpoints must sit on the grid in order")
        pieces = self.variant in _PIECE_VARIANTS
        if pieces:
            if self.r is None:
                raise ValidationError(f"{self.variant} needs a piece budget r")
            if self.lo > self.hi:
                if self.r != 0:
                    raise ValidationError("empty domain must carry r = 0")
            elif self.r < 1:
                raise ValidationError("nonempty domain needs r >= 1")
        elif self.r is not None:
            raise ValidationError(f"r does not apply to the {self.variant} variant")
        if self.variant == "lipschitz":
            if self.dmax is None or self.dmax < 0:
                raise ValidationError("lipschitz needs dmax >= 0 in grid units")
        elif self.dmax is not None:
            raise ValidationError(f"dmax does not apply to the {self.variant} variant")
        if self.variant in ("convex", "concave"):
            if self.dlo is not None and self.dlo < 0:
                raise ValidationError("dlo must be >= 0 (outputs are monotone)")
            if self.dhi is not None:
                if self.dhi < 0 or (self.dlo is not None and self.dhi < self.dlo):
                    raise ValidationError("need 0 <= dlo <= dhi")
        elif self.dlo is not None or self.dhi is not None:
            raise ValidationError(f"step bounds do not apply to the {self.variant} variant")
        if self.variant in ("vanilla", "const") and (self.b1 or self.b2):
            raise ValidationError(f"pins do not apply to the {self.variant} variant")

    @property
    def is_empty(self) -> bool:
        return self.lo > self.hi

    @property
    def span(self) -> int:
        return 0 if self.is_empty else self.hi - self.lo + 1

    @property
    def width(self) -> int:
        return self.b - self.a

    @property
    def tau(self) -> float:
        return self.a / self.grid

    @property
    def theta(self) -> float:
        return self.b / self.grid


@dataclasses.dataclass(frozen=True)
class PartitionChoice:
    """One split: two child parts plus the bridged middle.

    ``middle_values`` lists the committed function values (real units) on
    the positions strictly between the children; only the linear variant
    ever bridges a nonempty middle.
    """

    left: StructuredInterval
    right: StructuredInterval
    middle_values: tuple = ()

    def middle_domain(self) -> range:
        return range(self.left.hi + 1, self.right.lo)


def _lower_mid(s: StructuredInterval) -> int:
    return (s.a + s.b) // 2


def _upper_mid(s: StructuredInterval) -> int:
    return (s.a + s.b + 1) // 2


def _step_bounds(s: StructuredInterval) -> tuple[int, int]:
    # Allowed junction step range in grid units, clamped to the window width.
    if s.variant == "lipschitz":
        return 0, min(s.dmax, s.width)
    glo = 0 if s.dlo is None else s.dlo
    ghi = s.width if s.dhi is None else min(s.dhi, s.width)
    return glo, ghi


def _enumerate_rows(s: StructuredInterval) -> np.ndarray:
    """All split candidates of one part as an integer row array.

    Columns by variant: vanilla ``(l,)``; const ``(l, r1)``; linear
    ``(l1, l2, r1, u1, u2)``; lipschitz and convex ``(l, u1, u2)``. Every
    combination the split family names appears, feasible or not, in a fixed
    order (boundary-major, then budget, then junction values).
    """
    i, j = s.lo, s.hi
    if s.variant == "vanilla":
        return np.arange(i - 1, j + 1, dtype=np.int64)[:, None]
    if s.variant == "const":
        rows = []
        for ell in range(i - 1, j + 1):
            if ell < i:
                r1s = (0,)
            elif ell == j:
                r1s = (s.r,)
            else:
                r1s = range(1, s.r)
            rows.extend((ell, r1) for r1 in r1s)
        return np.array(rows, dtype=np.int64).reshape(-1, 2)
    mf, mc = _lower_mid(s), _upper_mid(s)
    if s.variant == "linear":
        rows = []
        for l1 in range(i - 1, j + 1):
            for l2 in range(l1 + 1, j + 2):
                for r1 in ((0,) if l1 < i else range(1, s.r)):
                    r2 = s.r - 1 - r1
                    if r2 < 0 or (l2 > j) != (r2 == 0):
                        continue
                    rows.extend((l1, l2, r1, u1, u2)
                                for u1 in range(s.a, mf + 1)
                                for u2 in range(mc, s.b + 1))
        return np.array(rows, dtype=np.int64).reshape(-1, 5)
    glo, ghi = _step_bounds(s)
    u1g, u2g = np.meshgrid(np.arange(s.a, mf + 1), np.arange(mc, s.b + 1),
                           indexing="ij")
    gaps = u2g - u1g
    keep = (gaps >= glo) & (gaps <= ghi)
    pairs = np.stack([u1g[keep], u2g[keep]], axis=1).astype(np.int64)
    ells = np.arange(i - 1, j + 1, dtype=np.int64)
    out = np.empty((ells.size * pairs.shape[0], 3), dtype=np.int64)
    out[:, 0] = np.repeat(ells, pairs.shape[0])
    out[:, 1:] = np.tile(pairs, (ells.size, 1))
    return out


def _row_to_choice(s: StructuredInterval, row) -> PartitionChoice:
    i, j, a, b, H = s.lo, s.hi, s.a, s.b, s.grid
    if s.variant == "vanilla":
        um = _lower_mid(s)
        ell = int(row[0])
        return PartitionChoice(
            StructuredInterval("vanilla", i, ell, a, um, H),
            StructuredInterval("vanilla", ell + 1, j, um, b, H))
    if s.variant == "const":
        um = _lower_mid(s)
        ell, r1 = int(row[0]), int(row[1])
        return PartitionChoice(
            StructuredInterval("const", i, ell, a, um, H, r=r1),
            StructuredInterval("const", ell + 1, j, um, b, H, r=s.r - r1))
    if s.variant == "linear":
        l1, l2, r1, u1, u2 = (int(v) for v in row)
        denom = H * (l2 - l1)
        mids = tuple((u1 * (l2 - x) + u2 * (x - l1)) / denom
                     for x in range(l1 + 1, l2))
        return PartitionChoice(
            StructuredInterval("linear", i, l1, a, u1, H, r=r1,
                               b1=s.b1, b2=True),
            StructuredInterval("linear", l2, j, u2, b, H, r=s.r - 1 - r1,
                               b1=True, b2=s.b2),
            mids)
    ell, u1, u2 = (int(v) for v in row)
    if s.variant == "lipschitz":
        return PartitionChoice(
            StructuredInterval("lipschitz", i, ell, a, u1, H,
                               b1=s.b1, b2=True, dmax=s.dmax),
            StructuredInterval("lipschitz", ell + 1, j, u2, b, H,
                               b1=True, b2=s.b2, dmax=s.dmax))
    gap = u2 - u1
    return PartitionChoice(
        StructuredInterval("convex", i, ell, a, u1, H,
                           b1=s.b1, b2=True, dlo=s.dlo, dhi=gap),
        StructuredInterval("convex", ell + 1, j, u2, b, H,
                           b1=True, b2=s.b2, dlo=gap, dhi=s.dhi))


def _reflect_interval(s: StructuredInterval) -> StructuredInterval:
    # Same domain slice, value window flipped top-for-bottom, pins swapped.
    other = "convex" if s.variant == "concave" else "concave"
    return StructuredInterval(other, s.lo, s.hi, s.grid - s.b, s.grid - s.a,
                              s.grid, b1=s.b2, b2=s.b1, dlo=s.dlo, dhi=s.dhi)


def _reflect_child(child: StructuredInterval, pivot: int) -> StructuredInterval:
    # Children of a flipped part live at mirrored positions.
    other = "convex" if child.variant == "concave" else "concave"
    return StructuredInterval(other, pivot - child.hi, pivot - child.lo,
                              child.grid - child.b, child.grid - child.a,
                              child.grid, b1=child.b2, b2=child.b1,
                              dlo=child.dlo, dhi=child.dhi)


def _reflect_loss(loss: LossSpec) -> LossSpec:
    return LossSpec(loss.kind,
                    lambda yh, y: loss.evaluate(
                        1.0 - np.asarray(yh, dtype=np.float64),
                        1.0 - np.asarray(y, dtype=np.float64)),
                    lipschitz=loss.lipschitz, convex=loss.convex,
                    distance_R=loss.distance_R)


def _reflect_data(s: StructuredInterval, data: Dataset) -> Dataset:
    return Dataset((s.lo + s.hi) - data.xs, 1.0 - data.ys)


def partition_candidates(s: StructuredInterval, variant: str | None = None
                         ) -> list[PartitionChoice]:
    """Every split the family defines for this part, feasible or not.

    The order is deterministic and matches ``score_partition_choices``. The
    concave variant enumerates through the convex engine on the flipped
    problem; its choices come back mirrored, children swapped.
    """
    if variant is not None and variant != s.variant:
        raise ValidationError("variant does not match the structured interval")
    if s.variant == "concave":
        piv = s.lo + s.hi
        return [PartitionChoice(_reflect_child(c.right, piv),
                                _reflect_child(c.left, piv))
                for c in partition_candidates(_reflect_interval(s))]
    return [_row_to_choice(s, row) for row in _enumerate_rows(s)]


def _monotone_opts(cost: np.ndarray) -> np.ndarray:
    """Entry x: best nondecreasing-assignment cost of positions 0..x."""
    p = cost.shape[0]
    out = np.empty(p)
    run = np.zeros(cost.shape[1])
    for x in range(p):
        run = np.minimum.accumulate(cost[x] + run)
        out[x] = run[-1]
    return out


def _piece_const_table(cost: np.ndarray, rmax: int) -> np.ndarray:
    """tab[x][q]: best monotone at-most-q-piece constant cost of 0..x.

    Pieces are constant runs; a new run steps strictly upward. Column 0 is
    +inf everywhere.
    """
    p, V = cost.shape
    exact = np.full((rmax + 1, V), np.inf)
    tab = np.empty((p, rmax + 1))
    for x in range(p):
        if x == 0:
            if rmax >= 1:
                exact[1] = cost[0]
        else:
            new = np.full_like(exact, np.inf)
            for sct in range(1, rmax + 1):
                stay = exact[sct]
                bump = np.concatenate(
                    ([np.inf], np.minimum.accumulate(exact[sct - 1])[:-1]))
                new[sct] = cost[x] + np.minimum(stay, bump)
            exact = new
        tab[x] = np.minimum.accumulate(np.min(exact, axis=1))
    return tab


def _lip_forward(cost: np.ndarray, dmax: int, pin_first: bool) -> np.ndarray:
    """tab[x][u]: best monotone path cost of 0..x ending at value u, with
    consecutive steps of at most dmax grid units."""
    p, V = cost.shape
    w = min(dmax, V - 1) + 1
    tab = np.empty((p, V))
    row = cost[0].copy()
    if pin_first:
        row[1:] = np.inf
    tab[0] = row
    pad = np.full(w - 1, np.inf)
    for x in range(1, p):
        padded = np.concatenate([pad, tab[x - 1]])
        wins = np.lib.stride_tricks.sliding_window_view(padded, w).min(axis=1)
        tab[x] = cost[x] + wins
    return tab


def _lip_backward(cost: np.ndarray, dmax: int, pin_last: bool) -> np.ndarray:
    """tab[x][u]: best cost of x..end starting at value u."""
    return _lip_forward(cost[::-1, ::-1], dmax, pin_last)[::-1, ::-1]


def _convex_forward(cost: np.ndarray, step_min: int, pin_first: bool
                    ) -> np.ndarray:
    """tab[x][u][d]: best cost of 0..x ending at u over paths whose steps are
    nondecreasing, each at least step_min, the last one at most d. Position
    0 has no step, so its entries agree across d."""
    p, V = cost.shape
    tab = np.empty((p, V, V))
    first = cost[0].copy()
    if pin_first:
        first[1:] = np.inf
    tab[0] = first[:, None]
    for x in range(1, p):
        raw = np.full((V, V), np.inf)
        for e in range(max(step_min, 0), V):
            raw[e:, e] = tab[x - 1][:V - e, e]
        raw = raw + cost[x][:, None]
        tab[x] = np.minimum.accumulate(raw, axis=1)
    return tab


def _convex_backward(cost: np.ndarray, step_max: int | None, pin_last: bool
                     ) -> np.ndarray:
    """tab[x][u][d]: best cost of x..end starting at u over paths with
    nondecreasing steps, each at most step_max, the first one at least d.

    The d axis has V + 1 slots; slot V is satisfiable only where no step
    exists at all (the last position), which keeps "first step >= d" honest
    when d exceeds every possible step.
    """
    p, V = cost.shape
    cap = V - 1 if step_max is None else min(step_max, V - 1)
    tab = np.empty((p, V, V + 1))
    last = cost[p - 1].copy()
    if pin_last:
        last[:-1] = np.inf
    tab[p - 1] = last[:, None]
    for x in range(p - 2, -1, -1):
        raw = np.full((V, V), np.inf)
        for e in range(0, cap + 1):
            raw[:V - e, e] = tab[x + 1][e:, e]
        raw = raw + cost[x][:, None]
        sm = np.minimum.accumulate(raw[:, ::-1], axis=1)[:, ::-1]
        tab[x] = np.concatenate([sm, np.full((V, 1), np.inf)], axis=1)
    return tab


def _knot_forward(seg, p: int, V: int, rmax: int, pin_first: bool
                  ) -> np.ndarray:
    """tab[s][x][u]: best cost of covering 0..x with at most s affine
    segments, grid values at segment ends, nondecreasing within and across,
    value u at position x. ``seg(x0, x1)`` prices one segment as a
    start-value by end-value matrix."""
    tab = np.full((rmax + 1, p, V), np.inf)
    pmin = np.full((rmax + 1, p, V), np.inf)
    for s in range(1, rmax + 1):
        for x in range(p):
            acc = tab[s - 1][x].copy()
            for x0 in range(x + 1):
                M = seg(x0, x)
                if x0 == 0:
                    col = M[0] if pin_first else np.min(M, axis=0)
                else:
                    col = np.min(pmin[s - 1][x0 - 1][:, None] + M, axis=0)
                acc = np.minimum(acc, col)
            tab[s][x] = acc
            pmin[s][x] = np.minimum.accumulate(acc)
    return tab


def _knot_backward(seg, p: int, V: int, rmax: int, pin_last: bool
                   ) -> np.ndarray:
    """tab[s][x][u]: best cost of covering x..end, value u at position x."""
    def seg_rev(x0, x1):
        return seg(p - 1 - x1, p - 1 - x0)[::-1, ::-1].T
    rev = _knot_forward(seg_rev, p, V, rmax, pin_last)
    return rev[:, ::-1, ::-1]


class _PartCosts:
    """Per-position clipped-loss tables for one part under one clip window.

    Groups the part's points by position, prices every grid value at every
    position, and lazily prices affine segments and bridge interiors whose
    interpolated values fall off the grid. Segment and bridge indices are
    local to the part (0-based; bridge anchors may sit one step outside).
    """

    def __init__(self, s: StructuredInterval, data: Dataset, loss: LossSpec,
                 window: tuple[float, float] | None = None):
        self.s = s
        self.loss = loss
        self.tau_w, self.theta_w = window if window is not None else (s.tau, s.theta)
        if self.tau_w > s.tau + 1e-12 or self.theta_w < s.theta - 1e-12:
            raise ValidationError("clip window must contain the value window")
        if data.n and (data.xs.min() < s.lo or data.xs.max() > s.hi):
            raise ValidationError("data outside the domain interval")
        ds = data.sorted_by_x()
        self.p = s.span
        cuts = np.searchsorted(ds.xs, np.arange(s.lo, s.lo + self.p))
        cuts = np.append(cuts, ds.n)
        self.groups = [ds.ys[cuts[k]:cuts[k + 1]] for k in range(self.p)]
        self.inner = np.array([
            float(np.sum(loss.inner_min(self.tau_w, self.theta_w, ys)))
            if ys.size else 0.0
            for ys in self.groups])
        self.grid_vals = np.arange(s.a, s.b + 1, dtype=np.float64) / s.grid
        V = self.grid_vals.size
        self.cost = np.zeros((self.p, V))
        for k, ys in enumerate(self.groups):
            if ys.size:
                raw = np.asarray(loss.evaluate(self.grid_vals[:, None], ys[None, :]))
                self.cost[k] = raw.sum(axis=1) - self.inner[k]
        self._segs: dict[tuple[int, int], np.ndarray] = {}
        self._bridges: dict[tuple[int, int], np.ndarray] = {}

    def _pos_cost(self, k: int, vals: np.ndarray) -> np.ndarray:
        ys = self.groups[k]
        if not ys.size:
            return np.zeros(vals.shape)
        raw = np.asarray(self.loss.evaluate(vals[..., None], ys))
        return raw.sum(axis=-1) - self.inner[k]

    def seg_cost(self, x0: int, x1: int) -> np.ndarray:
        """Price positions x0..x1 of one affine segment, as a matrix over
        (start value, end value); +inf below the diagonal (segments rise)."""
        key = (x0, x1)
        if key not in self._segs:
            V = self.grid_vals.size
            if x1 == x0:
                M = np.full((V, V), np.inf)
                np.fill_diagonal(M, self.cost[x0])
            else:
                M = np.zeros((V, V))
                for x in range(x0, x1 + 1):
                    frac = (x - x0) / (x1 - x0)
                    vals = (self.grid_vals[:, None] * (1 - frac)
                            + self.grid_vals[None, :] * frac)
                    M += self._pos_cost(x, vals)
                M[np.tril_indices(V, -1)] = np.inf
            self._segs[key] = M
        return self._segs[key]

    def bridge_cost(self, la: int, lb: int) -> np.ndarray:
        """Price the positions strictly between local anchors la < lb
        against the interpolated line, as a matrix over the anchor values."""
        key = (la, lb)
        if key not in self._bridges:
            V = self.grid_vals.size
            M = np.zeros((V, V))
            for x in range(la + 1, lb):
                frac = (x - la) / (lb - la)
                vals = (self.grid_vals[:, None] * (1 - frac)
                        + self.grid_vals[None, :] * frac)
                M += self._pos_cost(x, vals)
            M[np.tril_indices(V, -1)] = np.inf
            self._bridges[key] = M
        return self._bridges[key]


def _score_rows(s: StructuredInterval, rows: np.ndarray, pc: _PartCosts
                ) -> np.ndarray:
    """Scores aligned with the candidate rows.

    A row's score is the sum of each side's reachable optimum under the
    junction it names, plus the bridged middle. Pins that an emptied side
    would orphan transfer to the surviving side's boundary value; rows that
    cannot honor them come back +inf.
    """
    n_rows = rows.shape[0]
    if n_rows == 0:
        return np.zeros(0)
    if pc.p == 0:
        return np.zeros(n_rows)
    i, j, a, b = s.lo, s.hi, s.a, s.b
    p = pc.p
    V = b - a + 1
    cost = pc.cost

    if s.variant == "vanilla":
        um = _lower_mid(s)
        lefts = _monotone_opts(cost[:, :um - a + 1])
        cr = cost[:, um - a:]
        rights = _monotone_opts(cr[::-1, ::-1])[::-1]
        ell = rows[:, 0]
        scores = (np.where(ell >= i, lefts[np.clip(ell - i, 0, p - 1)], 0.0)
                  + np.where(ell <= j - 1,
                             rights[np.clip(ell + 1 - i, 0, p - 1)], 0.0))

    elif s.variant == "const":
        um = _lower_mid(s)
        tl = _piece_const_table(cost[:, :um - a + 1], s.r)
        cr = cost[:, um - a:]
        tr = _piece_const_table(cr[::-1, ::-1], s.r)[::-1]
        ell, r1 = rows[:, 0], rows[:, 1]
        li = np.clip(ell - i, 0, p - 1)
        ri = np.clip(ell + 1 - i, 0, p - 1)
        scores = (np.where(ell >= i, tl[li, r1], 0.0)
                  + np.where(ell <= j - 1, tr[ri, s.r - r1], 0.0))

    elif s.variant == "lipschitz":
        lf = _lip_forward(cost, s.dmax, s.b1)
        lb = _lip_backward(cost, s.dmax, s.b2)
        ell, u1, u2 = rows[:, 0], rows[:, 1], rows[:, 2]
        li = np.clip(ell - i, 0, p - 1)
        ri = np.clip(ell + 1 - i, 0, p - 1)
        left = np.where(ell >= i, lf[li, u1 - a],
                        np.where(s.b1 & (u2 != a), np.inf, 0.0))
        right = np.where(ell <= j - 1, lb[ri, u2 - a],
                         np.where(s.b2 & (u1 != b), np.inf, 0.0))
        scores = left + right

    elif s.variant == "convex":
        glo, _ = _step_bounds(s)
        cf = _convex_forward(cost, glo, s.b1)
        cb = _convex_backward(cost, s.dhi, s.b2)
        ell, u1, u2 = rows[:, 0], rows[:, 1], rows[:, 2]
        gap = u2 - u1
        li = np.clip(ell - i, 0, p - 1)
        ri = np.clip(ell + 1 - i, 0, p - 1)
        left = np.where(ell >= i, cf[li, u1 - a, np.clip(gap, 0, V - 1)],
                        np.where(s.b1 & (u2 != a), np.inf, 0.0))
        right = np.where(ell <= j - 1, cb[ri, u2 - a, np.clip(gap, 0, V)],
                         np.where(s.b2 & (u1 != b), np.inf, 0.0))
        scores = left + right

    else:  # linear
        l1, l2, r1 = rows[:, 0], rows[:, 1], rows[:, 2]
        u1, u2 = rows[:, 3], rows[:, 4]
        r2 = s.r - 1 - r1
        left_empty = l1 < i
        right_empty = l2 > j
        # an emptied side hands its pin to the bridge (or the far child);
        # integer interpolation keeps the equality check exact
        ok1 = np.where(l2 == i, u2 == a,
                       u1 * (l2 - i) + u2 * (i - l1) == a * (l2 - l1))
        left_sent = np.where(s.b1 & ~ok1, np.inf, 0.0)
        ok2 = np.where(l1 == j, u1 == b,
                       u1 * (l2 - j) + u2 * (j - l1) == b * (l2 - l1))
        right_sent = np.where(s.b2 & ~ok2, np.inf, 0.0)
        if s.r >= 2:
            kf = _knot_forward(pc.seg_cost, p, V, s.r - 1, s.b1)
            kb = _knot_backward(pc.seg_cost, p, V, s.r - 1, s.b2)
            li = np.clip(l1 - i, 0, p - 1)
            ri = np.clip(l2 - i, 0, p - 1)
            left = np.where(left_empty, left_sent, kf[r1, li, u1 - a])
            right = np.where(right_empty, right_sent, kb[r2, ri, u2 - a])
        else:
            left, right = left_sent, right_sent
        bridge = np.empty(n_rows)
        anchor_pairs = np.stack([l1, l2], axis=1)
        uniq, inv = np.unique(anchor_pairs, axis=0, return_inverse=True)
        for t in range(uniq.shape[0]):
            sel = inv == t
            B = pc.bridge_cost(int(uniq[t, 0]) - i, int(uniq[t, 1]) - i)
            bridge[sel] = B[u1[sel] - a, u2[sel] - a]
        scores = left + right + bridge

    return np.maximum(scores, 0.0)


def score_partition_choices(s: StructuredInterval, data: Dataset,
                            loss: LossSpec) -> np.ndarray:
    """Score every candidate of ``partition_candidates(s)``, in order.

    Scores are total losses measured against the best value available in
    the part's window, so they are nonnegative and a single changed point
    moves any score by at most ``loss.lipschitz`` times the window width.
    """
    if s.variant == "concave":
        return score_partition_choices(_reflect_interval(s),
                                       _reflect_data(s, data),
                                       _reflect_loss(loss))
    rows = _enumerate_rows(s)
    pc = _PartCosts(s, data, loss)
    return _score_rows(s, rows, pc)


def constrained_opt(s: StructuredInterval, data: Dataset, loss: LossSpec,
                    variant: str | None = None,
                    window: tuple[float, float] | None = None) -> float:
    """Exact best total clipped loss over the part's constraint class.

    The clip window defaults to the part's own value window; scoring a child
    against its parent passes the parent window. Structurally infeasible
    parts (pins that cannot be met) come back +inf, never an exception, and
    an empty domain costs 0.
    """
    if variant is not None and variant != s.variant:
        raise ValidationError("variant does not match the structured interval")
    if s.is_empty:
        return 0.0
    if s.variant == "concave":
        rwin = None if window is None else (1.0 - window[1], 1.0 - window[0])
        return constrained_opt(_reflect_interval(s), _reflect_data(s, data),
                               _reflect_loss(loss), window=rwin)
    pc = _PartCosts(s, data, loss, window=window)
    cost = pc.cost
    V = cost.shape[1]
    if s.variant == "vanilla":
        val = _monotone_opts(cost)[-1]
    elif s.variant == "const":
        val = _piece_const_table(cost, s.r)[-1, s.r]
    elif s.variant == "lipschitz":
        lf = _lip_forward(cost, s.dmax, s.b1)
        val = lf[-1, V - 1] if s.b2 else lf[-1].min()
    elif s.variant == "convex":
        glo, _ = _step_bounds(s)
        cf = _convex_forward(cost, glo, s.b1)
        dcap = V - 1 if s.dhi is None else min(s.dhi, V - 1)
        val = cf[-1, V - 1, dcap] if s.b2 else cf[-1, :, dcap].min()
    else:  # linear
        kf = _knot_forward(pc.seg_cost, pc.p, V, s.r, s.b1)
        val = kf[s.r, -1, V - 1] if s.b2 else kf[s.r, -1].min()
    if not np.isfinite(val):
        return float("inf")
    return max(float(val), 0.0)


def _leaf_values(s: StructuredInterval) -> np.ndarray:
    """Deterministic feasible labeling of a final part, in real units.

    Always the lexicographically smallest member of the part's class, so
    labeling adds no data dependence. Parts reached by sampling are always
    feasible; the asserts guard the engine, not the data.
    """
    assert s.variant != "concave", "concave parts are labeled via reflection"
    p = s.span
    a, b, H = s.a, s.b, s.grid
    if s.variant in ("vanilla", "const"):
        return np.full(p, a / H)
    xs = np.arange(p)
    if s.variant == "linear":
        if not s.b2:
            vals = np.full(p, float(a))
        elif s.r == 1 and p > 1:
            vals = a + (b - a) * xs / (p - 1)
        else:
            vals = np.full(p, float(a))
            vals[-1] = b
    elif s.variant == "lipschitz":
        if not s.b2:
            vals = np.full(p, float(a))
        else:
            vals = np.maximum(float(a), b - s.dmax * (p - 1 - xs).astype(np.float64))
    else:
        glo, _ = _step_bounds(s)
        lower = a + glo * xs.astype(np.float64)
        if not s.b2:
            vals = lower
        else:
            dh = s.dhi if s.dhi is not None else max(b - a, glo)
            vals = np.maximum(lower, b - dh * (p - 1 - xs).astype(np.float64))
    assert vals[-1] <= b + 1e-9, "labeling escaped the window"
    if s.b1:
        assert vals[0] == a, "start pin violated"
    if s.b2:
        assert vals[-1] == b, "end pin violated"
    return vals / H


def fit_dp_constrained(data: Dataset, m: int, loss: LossSpec, epsilon: float,
                       variant: str, k: int | None = None,
                       lipschitz_bound: float | None = None, rng=None,
                       h_cap: int = DEFAULT_RESOLUTION_CAP):
    """Private monotone fit on 1..m under a shape constraint.

    Runs the same recursion and budget split as the unconstrained fitter:
    T = stage_count(epsilon, n) budget shares, split stages 0..T-2, each
    draw through the exponential mechanism at epsilon / T, for total
    privacy cost under epsilon. Parts carry the constraint payload and
    junction pins keep the assembled output inside the constraint class
    exactly. Returns a StepFunction for vanilla/const and a
    PiecewiseLinearFunction knotted at every position otherwise.

    ``k`` is the piece budget (const and linear only, integer >= 1);
    ``lipschitz_bound`` caps the rise between neighboring positions
    (lipschitz only, >= 0, rounded down to the value grid). The value grid
    density comes from ``grid_resolution`` and is capped at ``h_cap``;
    candidate counts are quadratic in it for the slope-constrained
    variants. Budgets above 1 are accepted as-is.

    Two shape rules keep the recursion well defined, both functions of
    published choices only: parts whose domain empties are dropped (an
    empty domain contributes nothing, and the linear family offers an
    empty part no splits at all), and a part whose candidates are all
    structurally impossible, or absent, stops splitting and is labeled
    directly.
    """
    if m < 1:
        raise ValidationError("domain size must be >= 1")
    data.check_domain(m)
    if not (epsilon > 0):
        raise ValidationError("epsilon must be positive")
    if variant not in VARIANTS:
        raise ValidationError(f"unknown variant {variant!r}")
    if variant in _PIECE_VARIANTS:
        if k is None or k != int(k) or k < 1:
            raise ValidationError("piece budget k must be an integer >= 1")
        k = int(k)
    elif k is not None:
        raise ValidationError(f"k does not apply to the {variant} variant")
    if variant == "lipschitz":
        if lipschitz_bound is None or not (lipschitz_bound >= 0):
            raise ValidationError("lipschitz_bound must be >= 0")
    elif lipschitz_bound is not None:
        raise ValidationError("lipschitz_bound only applies to the lipschitz variant")
    rng = ensure_rng(rng)

    if variant == "concave":
        flipped = Dataset(m + 1 - data.xs, 1.0 - data.ys)
        inner = fit_dp_constrained(flipped, m, _reflect_loss(loss), epsilon,
                                   "convex", rng=rng, h_cap=h_cap)
        vals = 1.0 - inner.values_on(m)[::-1]
        return PiecewiseLinearFunction(np.arange(1, m + 1, dtype=np.int64), vals)

    ds = data.sorted_by_x()
    T = stage_count(epsilon, ds.n)
    eps_stage = epsilon / T
    H = grid_resolution(variant, ds.n, m, T, h_cap=h_cap)
    payload = {}
    if variant in _PIECE_VARIANTS:
        payload["r"] = k
    elif variant == "lipschitz":
        payload["dmax"] = min(int(math.floor(H * lipschitz_bound + 1e-9)), H)
    root = StructuredInterval(variant, 1, m, 0, H, H, **payload)

    out = np.full(m, np.nan)
    active: list[tuple[StructuredInterval, Dataset]] = [(root, ds)]
    settled: list[StructuredInterval] = []
    for _ in range(T - 1):
        nxt = []
        for part, pdata in active:
            rows = _enumerate_rows(part)
            scores = (_score_rows(part, rows, _PartCosts(part, pdata, loss))
                      if rows.shape[0] else np.zeros(0))
            if not np.isfinite(scores).any():
                # no candidate, or none the pins allow: both conditions are
                # payload facts, so stopping here leaks nothing
                settled.append(part)
                continue
            sens = loss.lipschitz * part.width / H
            if sens <= 0.0:
                # width-0 window: all feasible candidates score alike, any
                # positive scale leaves the draw distribution unchanged
                sens = 1.0
            cands = ScoredCandidates(ids=tuple(range(rows.shape[0])),
                                     scores=scores, sensitivity=sens,
                                     epsilon=eps_stage)
            _, idx = sample(cands, rng)
            choice = _row_to_choice(part, rows[idx])
            for x, v in zip(choice.middle_domain(), choice.middle_values):
                out[x - 1] = v
            lmask = pdata.xs <= choice.left.hi
            rmask = pdata.xs >= choice.right.lo
            if not choice.left.is_empty:
                nxt.append((choice.left,
                            Dataset(pdata.xs[lmask], pdata.ys[lmask])))
            if not choice.right.is_empty:
                nxt.append((choice.right,
                            Dataset(pdata.xs[rmask], pdata.ys[rmask])))
        active = nxt
    leaves = settled + [part for part, _ in active]
    leaves.sort(key=lambda part: part.lo)

    if variant in ("vanilla", "const"):
        starts = [leaf.lo for leaf in leaves]
        vals = [leaf.a / H for leaf in leaves]
        keep = [0] + [t for t in range(1, len(starts)) if vals[t] != vals[t - 1]]
        return StepFunction(np.array([starts[t] for t in keep], dtype=np.int64),
                            np.array([vals[t] for t in keep]))
    for leaf in leaves:
        out[leaf.lo - 1:leaf.hi] = _leaf_values(leaf)
    assert not np.isnan(out).any(), "positions left unlabeled"
    return PiecewiseLinearFunction(np.arange(1, m + 1, dtype=np.int64), out)
