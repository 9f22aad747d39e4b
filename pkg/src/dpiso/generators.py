"""Dataset and poset generators for experiments.

Besides a generic noisy-monotone sampler, this module builds the hard
instances used by the lower-bound style experiments: threshold packings on a
total order, payload-carrying antichains, and payload-carrying grids. The
hard instances all admit a monotone function with zero risk, so excess risk
equals absolute risk on them, and each carries a decoder that reads the
hidden payload back out of a fitted function.
"""

from __future__ import annotations

import numpy as np

from .core import Dataset, ValidationError
from .posets import Poset, antichain_poset, grid_element_label, grid_poset

__all__ = [
    "gen_random_monotone",
    "gen_packing_hard",
    "packing_neighbors",
    "gen_antichain_hard",
    "decode_antichain_hard",
    "gen_grid_hard",
    "decode_grid_hard",
    "grid_payload_positions",
]


def gen_random_monotone(m: int, n: int, noise: float, seed: int) -> Dataset:
    """Sample a dataset from a random monotone truth plus bounded label noise.

    The truth is m sorted uniform values, one per site. Each of the n points
    draws a site uniformly and observes the truth there plus an independent
    uniform offset from [-noise, noise], clipped back into [0, 1]. With
    noise = 0 the truth itself fits the data with zero risk.
    """
    if m < 1:
        raise ValidationError("domain size must be at least 1")
    if n < 1:
        raise ValidationError("need at least one data point")
    if not 0.0 <= noise <= 0.5:
        raise ValidationError("noise must lie in [0, 0.5]")
    rng = np.random.default_rng(seed)
    truth = np.sort(rng.random(m))
    xs = rng.integers(1, m + 1, size=n)
    ys = np.clip(truth[xs - 1] + rng.uniform(-noise, noise, size=n), 0.0, 1.0)
    return Dataset(xs, ys)


def gen_packing_hard(m: int, n: int, k: int, j: int) -> Dataset:
    """Dataset j of the threshold-packing family on sites 1..m.

    For j < m the dataset holds k copies of (j, 0), k copies of (j + 1, 1)
    and n - 2k copies of (1, 0); the step function that jumps from 0 to 1
    between j and j + 1 fits it exactly. For j = m it holds k copies of
    (m, 0) and n - k copies of (1, 0), fitted exactly by the constant 0.
    Every member of the family therefore has optimal risk zero, and members
    with different j disagree on their k witness pairs.
    """
    if m < 1:
        raise ValidationError("domain size must be at least 1")
    if not 1 <= j <= m:
        raise ValidationError(f"threshold index {j} outside 1..{m}")
    if k < 1:
        raise ValidationError("need at least one witness copy")
    if 2 * k > n:
        raise ValidationError(f"need n >= 2k, got n={n}, k={k}")
    if j < m:
        xs = np.concatenate([
            np.full(k, j), np.full(k, j + 1), np.full(n - 2 * k, 1)])
        ys = np.concatenate([
            np.zeros(k), np.ones(k), np.zeros(n - 2 * k)])
    else:
        xs = np.concatenate([np.full(k, m), np.full(n - k, 1)])
        ys = np.zeros(n)
    return Dataset(xs, ys)


def packing_neighbors(m: int, n: int, k: int, j: int) -> tuple[Dataset, Dataset]:
    """A packing dataset and a neighbor differing from it in one point.

    The neighbor flips the label of a single witness: one (j + 1, 1) point
    becomes (j + 1, 0) when j < m, and one (m, 0) point becomes (m, 1) when
    j = m. This is the pair the privacy audit replays.
    """
    base = gen_packing_hard(m, n, k, j)
    xs = base.xs.copy()
    ys = base.ys.copy()
    if j < m:
        idx = int(np.flatnonzero((xs == j + 1) & (ys == 1.0))[0])
        ys[idx] = 0.0
    else:
        idx = int(np.flatnonzero(xs == m)[0])
        ys[idx] = 1.0
    return base, Dataset(xs, ys)


def gen_antichain_hard(
        w: int, n: int, z, r: int) -> tuple[Poset, Dataset]:
    """Encode a bit vector into repeated labels on an antichain.

    Element i (for i = 1..len(z)) receives r copies of the point (i, z_i);
    element w soaks up the remaining n - r*len(z) points with label 0. Since
    the poset imposes no constraints, the function matching each element's
    constant label has zero risk. Recovering z from a fitted function is
    thresholding at 1/2, so every decoding error on a payload element costs
    at least the loss distance between labels 0 and 1 on r points.
    """
    bits = np.asarray(z, dtype=np.int64)
    if bits.ndim != 1 or len(bits) == 0:
        raise ValidationError("payload must be a nonempty bit vector")
    if not np.isin(bits, (0, 1)).all():
        raise ValidationError("payload entries must be 0 or 1")
    if len(bits) > w - 1:
        raise ValidationError(
            f"payload length {len(bits)} needs w >= {len(bits) + 1}")
    if r < 1:
        raise ValidationError("need at least one copy per payload bit")
    if r * len(bits) > n:
        raise ValidationError(
            f"need n >= r*len(z) = {r * len(bits)}, got n={n}")
    xs = np.concatenate([
        np.repeat(np.arange(1, len(bits) + 1), r),
        np.full(n - r * len(bits), w)])
    ys = np.concatenate([
        np.repeat(bits.astype(float), r),
        np.zeros(n - r * len(bits))])
    return antichain_poset(w), Dataset(xs, ys)


def decode_antichain_hard(values: dict[int, float], count: int) -> np.ndarray:
    """Read a bit vector back from a fitted antichain function.

    Bit i is 1 exactly when the value at element i is at least 1/2.
    """
    return np.array(
        [1 if values[i] >= 0.5 else 0 for i in range(1, count + 1)],
        dtype=np.int64)


def _grid_alphabet(w: int, h: int) -> int:
    # D = floor(h/w - 1); rows need room for D + 1 columns each.
    return (h - w) // w


def grid_payload_positions(w: int, h: int, i: int) -> tuple[int, int]:
    """Column offset and alphabet size for payload symbol i on a (w, h) grid.

    Row i stores its symbol in columns base+1 .. base+D+1 where
    base = (w - i) * (D + 1); distinct rows use disjoint column bands in
    opposite order to their row index, which keeps the encoded points of
    different rows incomparable.
    """
    d_alpha = _grid_alphabet(w, h)
    return (w - i) * (d_alpha + 1), d_alpha


def gen_grid_hard(
        w: int, h: int, z, r: int, n: int | None = None,
) -> tuple[Poset, Dataset]:
    """Encode a symbol vector into label jumps on a w-by-h grid poset.

    With D = floor(h/w - 1), each z_i lies in 1..D and row i contributes r
    copies of ((i, base + z_i), 0) and r copies of ((i, base + z_i + 1), 1)
    where base = (w - i) * (D + 1). Any remaining points (n defaults to
    2*r*w, meaning none) sit at ((1, 1), 0). No 0-labeled point lies above a
    1-labeled point, so the optimal risk is zero, yet recovering each z_i
    means locating a jump inside its row's column band.
    """
    if w < 1 or h < 1:
        raise ValidationError("grid dimensions must be positive")
    d_alpha = _grid_alphabet(w, h)
    if d_alpha < 2:
        raise ValidationError(
            f"grid {w}x{h} leaves alphabet size {d_alpha}, need at least 2")
    sym = np.asarray(z, dtype=np.int64)
    if sym.ndim != 1 or len(sym) != w:
        raise ValidationError(f"payload must have one symbol per row, w={w}")
    if ((sym < 1) | (sym > d_alpha)).any():
        raise ValidationError(f"payload symbols must lie in 1..{d_alpha}")
    if r < 1:
        raise ValidationError("need at least one copy per payload symbol")
    if n is None:
        n = 2 * r * w
    if 2 * r * w > n:
        raise ValidationError(f"need n >= 2*r*w = {2 * r * w}, got n={n}")
    xs = []
    ys = []
    for i in range(1, w + 1):
        base = (w - i) * (d_alpha + 1)
        lo = grid_element_label(w, h, i, base + int(sym[i - 1]))
        hi = grid_element_label(w, h, i, base + int(sym[i - 1]) + 1)
        xs.extend([lo] * r + [hi] * r)
        ys.extend([0.0] * r + [1.0] * r)
    filler = n - 2 * r * w
    xs.extend([grid_element_label(w, h, 1, 1)] * filler)
    ys.extend([0.0] * filler)
    return grid_poset(w, h), Dataset(np.array(xs), np.array(ys))


def decode_grid_hard(values: dict[int, float], w: int, h: int) -> np.ndarray:
    """Read a symbol vector back from a fitted grid function.

    Symbol i decodes to the largest j in 1..D whose column base+j in row i
    still has value at most 1/2, or 0 when even the first column exceeds it.
    """
    d_alpha = _grid_alphabet(w, h)
    out = np.zeros(w, dtype=np.int64)
    for i in range(1, w + 1):
        base = (w - i) * (d_alpha + 1)
        for j in range(d_alpha, 0, -1):
            if values[grid_element_label(w, h, i, base + j)] <= 0.5:
                out[i - 1] = j
                break
    return out
