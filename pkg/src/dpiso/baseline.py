"""One-shot exponential mechanism over all monotone grid functions.

Runs the selection in a single round: every monotone function into the level
grid {0, 1/T, ..., 1} is a candidate, weighted by its total loss on the
data. On a total order the candidate set factorizes position by position, so
sampling works through a backward log-space sweep without materializing the
(m+T choose T) functions. On a poset the functions are enumerated outright,
behind a cap.

Used as the accuracy yardstick the staged fitter is measured against: its
excess risk scales like 1/sqrt(epsilon * n) at the best grid size, a
polynomial factor worse than the staged recursion.
"""
from __future__ import annotations

import math

import numpy as np

from .core import CapExceeded, Dataset, LossSpec, StepFunction, ValidationError
from .mechanism import ensure_rng
from .posets import Poset

POSET_FUNCTION_CAP = 10 ** 6


def baseline_grid_choice(epsilon: float, n: int, m: float) -> int:
    """Level count balancing discretization error against selection noise.

    Rounds sqrt(epsilon * n / ln m) half-up, never below 1. The candidate
    count grows like m^T while discretization shrinks like 1/T; this is the
    T equating the two error terms.
    """
    if m < 2:
        raise ValidationError("domain size must be at least 2")
    if epsilon <= 0 or n <= 0:
        raise ValidationError("epsilon and n must be positive")
    return max(1, int(math.floor(math.sqrt(epsilon * n / math.log(m)) + 0.5)))


def _position_log_weights(data: Dataset, m: int, levels: np.ndarray,
                          loss: LossSpec, epsilon: float) -> np.ndarray:
    """lw[x, j] = -eps/(2L) * total loss at position x+1 under value levels[j]."""
    lw = np.zeros((m, levels.size))
    if data.n:
        per_point = loss.evaluate(levels[None, :], data.ys[:, None])
        scale = -epsilon / (2.0 * loss.lipschitz)
        np.add.at(lw, data.xs - 1, scale * per_point)
    return lw


def baseline_fit_total_order(data: Dataset, m: int, loss: LossSpec,
                             epsilon: float, grid_count: int | None = None,
                             rng=None) -> StepFunction:
    """Sample a monotone step function, weight exp(-eps/(2L) * total loss).

    ``grid_count`` is the number of level steps T (values are j/T); defaults
    to baseline_grid_choice. The sensitivity of the average-risk score is
    L/n, which cancels to the total-loss exponent used here. Sampling is
    exact: a backward suffix log-sum-exp table, then one Gumbel-argmax draw
    per position.
    """
    if m < 1:
        raise ValidationError("domain size must be at least 1")
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    data.check_domain(m)
    if grid_count is None:
        grid_count = baseline_grid_choice(epsilon, max(data.n, 1), max(m, 2))
    if grid_count < 1:
        raise ValidationError("grid_count must be at least 1")
    rng = ensure_rng(rng)
    levels = np.arange(grid_count + 1) / grid_count
    lw = _position_log_weights(data, m, levels, loss, epsilon)
    # back[x, j] = log total weight of monotone completions from position x
    # with value at least level j
    back = np.zeros((m + 1, grid_count + 1))
    for x in range(m - 1, -1, -1):
        row = lw[x] + back[x + 1]
        back[x] = np.logaddexp.accumulate(row[::-1])[::-1]
    values = np.empty(m)
    floor_j = 0
    for x in range(m):
        logits = lw[x, floor_j:] + back[x + 1, floor_j:]
        gumbel = rng.gumbel(size=logits.size)
        floor_j += int(np.argmax(logits + gumbel))
        values[x] = levels[floor_j]
    starts = [1]
    vals = [values[0]]
    for x in range(1, m):
        if values[x] != vals[-1]:
            starts.append(x + 1)
            vals.append(values[x])
    return StepFunction(np.asarray(starts, dtype=np.int64), np.asarray(vals))


def enumerate_monotone_labelings(poset: Poset, grid_count: int,
                                 cap: int = POSET_FUNCTION_CAP) -> np.ndarray:
    """All monotone maps into levels 0..grid_count, one row per function.

    Depth-first over elements in a topological order; raises CapExceeded
    when more than ``cap`` functions exist.
    """
    if grid_count < 1:
        raise ValidationError("grid_count must be at least 1")
    n = poset.size
    strict = poset.leq_matrix.copy()
    np.fill_diagonal(strict, False)
    order = np.argsort(strict.sum(axis=0), kind="stable")
    preds = []
    pos_in_order = np.empty(n, dtype=np.int64)
    for rank, e in enumerate(order):
        pos_in_order[e] = rank
    for e in order:
        below = np.flatnonzero(strict[:, e])
        preds.append([int(pos_in_order[b]) for b in below])
    rows: list[tuple[int, ...]] = []
    assign = [0] * n

    def walk(rank: int) -> None:
        if rank == n:
            if len(rows) >= cap:
                raise CapExceeded(
                    f"more than {cap} monotone functions; shrink the poset "
                    f"or the level grid")
            rows.append(tuple(assign))
            return
        lo = max((assign[p] for p in preds[rank]), default=0)
        for level in range(lo, grid_count + 1):
            assign[rank] = level
            walk(rank + 1)

    walk(0)
    out = np.empty((len(rows), n), dtype=np.int64)
    for r, row in enumerate(rows):
        out[r] = row
    # undo the topological reordering so column e is element e
    inv = np.empty(n, dtype=np.int64)
    inv[pos_in_order] = np.arange(n)
    return out[:, pos_in_order]


def baseline_fit_poset(data: Dataset, poset: Poset, loss: LossSpec,
                       epsilon: float, grid_count: int | None = None,
                       rng=None, cap: int = POSET_FUNCTION_CAP
                       ) -> dict[int, float]:
    """Exponential mechanism over every monotone poset labeling.

    Enumerates the candidates explicitly (capped), scores each by its total
    loss, and draws once. Returns a 1-based label -> value map.
    """
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    data.check_domain(poset.size)
    if grid_count is None:
        grid_count = baseline_grid_choice(epsilon, max(data.n, 1),
                                          max(poset.size, 2))
    rng = ensure_rng(rng)
    labelings = enumerate_monotone_labelings(poset, grid_count, cap=cap)
    levels = np.arange(grid_count + 1) / grid_count
    logits = np.zeros(labelings.shape[0])
    if data.n:
        cost = np.zeros((poset.size, grid_count + 1))
        per_point = loss.evaluate(levels[None, :], data.ys[:, None])
        np.add.at(cost, data.xs - 1, per_point)
        total = cost[np.arange(poset.size)[None, :], labelings].sum(axis=1)
        logits = -epsilon / (2.0 * loss.lipschitz) * total
    gumbel = rng.gumbel(size=logits.size)
    pick = labelings[int(np.argmax(logits + gumbel))]
    return {e + 1: float(levels[pick[e]]) for e in range(poset.size)}


def count_monotone_functions(m: int, grid_count: int) -> int:
    """|{monotone maps [m] -> {0..grid_count}}| = C(m + T, T)."""
    if m < 1 or grid_count < 0:
        raise ValidationError("need m >= 1 and grid_count >= 0")
    return math.comb(m + grid_count, grid_count)
