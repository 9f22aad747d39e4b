"""Finite partial orders: closure matrices, antichains, width and height.

Elements are dense 0-based integers internally; ingestion helpers accept the
1-based labels used by the file formats and shift them down. The order is
stored as its full transitive closure, one boolean row per element, plus int
bitmasks for the set algebra the enumerators lean on.
"""
from __future__ import annotations

import dataclasses
from typing import Iterable, Iterator

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .core import CapExceeded, ValidationError

ANTICHAIN_CAP = 10 ** 6


def _closure_from_adjacency(n: int, adj: np.ndarray) -> np.ndarray:
    reach = adj.copy()
    np.fill_diagonal(reach, True)
    for k in range(n):
        reach |= np.outer(reach[:, k], reach[k, :])
    return reach


def _find_cycle(n: int, edges: list[tuple[int, int]]) -> list[int]:
    succ: dict[int, list[int]] = {}
    for a, b in edges:
        succ.setdefault(a, []).append(b)
    color = [0] * n
    stack_path: list[int] = []

    def visit(v: int) -> list[int] | None:
        color[v] = 1
        stack_path.append(v)
        for w in succ.get(v, ()):
            if color[w] == 1:
                return stack_path[stack_path.index(w):] + [w]
            if color[w] == 0:
                found = visit(w)
                if found is not None:
                    return found
        stack_path.pop()
        color[v] = 2
        return None

    for v in range(n):
        if color[v] == 0:
            found = visit(v)
            if found is not None:
                return found
    raise AssertionError("no cycle found despite closure violation")


class Poset:
    """A partial order on ``size`` elements given by its transitive closure.

    ``leq_matrix[a, b]`` means a <= b. The constructor verifies reflexivity,
    antisymmetry and transitivity and keeps the matrix read-only.
    """

    __slots__ = ("size", "leq_matrix", "up_masks", "down_masks")

    def __init__(self, leq_matrix: np.ndarray):
        mat = np.array(leq_matrix, dtype=bool)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValidationError("closure matrix must be square")
        n = mat.shape[0]
        if n < 1:
            raise ValidationError("poset needs at least one element")
        if not mat.diagonal().all():
            raise ValidationError("closure must be reflexive")
        both = mat & mat.T
        np.fill_diagonal(both, False)
        if both.any():
            a, b = np.argwhere(both)[0]
            raise ValidationError(
                f"antisymmetry violated between elements {a} and {b}")
        composed = (mat.astype(np.uint8) @ mat.astype(np.uint8)) > 0
        if (composed & ~mat).any():
            raise ValidationError("closure must be transitive")
        mat.setflags(write=False)
        self.size = n
        self.leq_matrix = mat
        self.up_masks = tuple(_row_mask(mat[a]) for a in range(n))
        self.down_masks = tuple(_row_mask(mat[:, a]) for a in range(n))

    @classmethod
    def from_cover_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Poset":
        """Build from 1-based (below, above) pairs, rejecting cycles.

        Labels 1..n map to elements 0..n-1. The edge list may contain any
        implied relations, not only covers.
        """
        if n < 1:
            raise ValidationError("poset needs at least one element")
        adj = np.zeros((n, n), dtype=bool)
        shifted = []
        for a, b in edges:
            if not (1 <= a <= n and 1 <= b <= n):
                raise ValidationError(f"edge ({a}, {b}) outside labels 1..{n}")
            if a == b:
                raise ValidationError(f"edge ({a}, {a}) is a self-loop")
            adj[a - 1, b - 1] = True
            shifted.append((a - 1, b - 1))
        reach = _closure_from_adjacency(n, adj)
        both = reach & reach.T
        np.fill_diagonal(both, False)
        if both.any():
            cycle = _find_cycle(n, shifted)
            labels = [v + 1 for v in cycle]
            raise ValidationError(f"cover edges contain a cycle: {labels}")
        return cls(reach)

    def leq(self, a: int, b: int) -> bool:
        return bool(self.leq_matrix[a, b])

    def comparable(self, a: int, b: int) -> bool:
        return bool(self.leq_matrix[a, b] or self.leq_matrix[b, a])

    def elements(self) -> range:
        return range(self.size)


def _row_mask(row: np.ndarray) -> int:
    mask = 0
    for idx in np.flatnonzero(row):
        mask |= 1 << int(idx)
    return mask


@dataclasses.dataclass(frozen=True)
class AntichainSet:
    """A pairwise-incomparable element set, kept sorted; empty is allowed."""

    elements: tuple[int, ...]

    def __init__(self, elements: Iterable[int], poset: Poset | None = None):
        elems = tuple(sorted(int(e) for e in elements))
        if len(set(elems)) != len(elems):
            raise ValidationError("antichain has repeated elements")
        if poset is not None:
            for e in elems:
                if not (0 <= e < poset.size):
                    raise ValidationError(f"element {e} outside the poset")
            for i, a in enumerate(elems):
                for b in elems[i + 1:]:
                    if poset.comparable(a, b):
                        raise ValidationError(
                            f"elements {a} and {b} are comparable")
        object.__setattr__(self, "elements", elems)

    def __iter__(self) -> Iterator[int]:
        return iter(self.elements)

    def __len__(self) -> int:
        return len(self.elements)


def closures(poset: Poset, antichain: AntichainSet | Iterable[int],
             within: Iterable[int] | None = None
             ) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Split ``within`` into everything under the antichain and the rest.

    The first tuple collects elements below or equal to some antichain
    member; the second is its complement inside ``within``, so the two always
    partition the ambient set. An empty antichain yields (empty, all).
    """
    elems = tuple(antichain) if not isinstance(antichain, AntichainSet) \
        else antichain.elements
    ambient = tuple(range(poset.size)) if within is None else tuple(within)
    down = 0
    for a in elems:
        down |= poset.down_masks[a]
    lower = tuple(e for e in ambient if down >> e & 1)
    upper = tuple(e for e in ambient if not down >> e & 1)
    return lower, upper


def enumerate_antichains(poset: Poset, sub: Iterable[int] | None = None,
                         cap: int = ANTICHAIN_CAP) -> list[AntichainSet]:
    """Every antichain of the induced subposet, lexicographic, empty first.

    Raises CapExceeded past ``cap`` results; shrink the subposet's width or
    raise the cap to get further.
    """
    elems = sorted(range(poset.size) if sub is None else {int(e) for e in sub})
    for e in elems:
        if not (0 <= e < poset.size):
            raise ValidationError(f"element {e} outside the poset")
    sub_mask = 0
    for e in elems:
        sub_mask |= 1 << e
    incomp = {}
    for e in elems:
        incomp[e] = sub_mask & ~(poset.up_masks[e] | poset.down_masks[e])
    out: list[AntichainSet] = []

    def emit(chosen: tuple[int, ...]) -> None:
        if len(out) >= cap:
            raise CapExceeded(
                f"more than {cap} antichains; reduce the width or raise the cap")
        ac = AntichainSet.__new__(AntichainSet)
        object.__setattr__(ac, "elements", chosen)
        out.append(ac)

    def walk(chosen: tuple[int, ...], candidates: int) -> None:
        emit(chosen)
        mask = candidates
        while mask:
            low = mask & -mask
            e = low.bit_length() - 1
            mask ^= low
            above = ~((1 << (e + 1)) - 1)
            walk(chosen + (e,), candidates & incomp[e] & above)

    walk((), sub_mask)
    return out


def _strict_less(poset: Poset) -> np.ndarray:
    strict = poset.leq_matrix.copy()
    np.fill_diagonal(strict, False)
    return strict


def chain_partition(poset: Poset) -> list[list[int]]:
    """Partition into the minimum number of chains (that number is the width).

    Runs maximum bipartite matching on the split graph of the strict order;
    unmatched successors start new chains.
    """
    strict = _strict_less(poset)
    n = poset.size
    if not strict.any():
        return [[e] for e in range(n)]
    graph = csr_matrix(strict)
    match = maximum_bipartite_matching(graph, perm_type="column")
    succ = {}
    has_pred = set()
    for a in range(n):
        b = int(match[a]) if match[a] != -1 else -1
        if b >= 0:
            succ[a] = b
            has_pred.add(b)
    chains = []
    for start in range(n):
        if start in has_pred:
            continue
        chain = [start]
        while chain[-1] in succ:
            chain.append(succ[chain[-1]])
        chains.append(chain)
    return chains


def width(poset: Poset) -> int:
    """Size of the largest antichain, via the minimum chain cover."""
    return len(chain_partition(poset))


def height(poset: Poset) -> int:
    """Number of elements on the longest chain."""
    strict = _strict_less(poset)
    order = np.argsort(strict.sum(axis=0), kind="stable")
    h = np.ones(poset.size, dtype=np.int64)
    for e in order:
        below = np.flatnonzero(strict[:, e])
        if below.size:
            h[e] = 1 + h[below].max()
    return int(h.max())


def chain_poset(m: int) -> Poset:
    """Total order on labels 1..m."""
    return Poset(np.triu(np.ones((m, m), dtype=bool)))


def antichain_poset(w: int) -> Poset:
    """w mutually incomparable elements."""
    return Poset(np.eye(w, dtype=bool))


def grid_element_label(w: int, h: int, a: int, b: int) -> int:
    """1-based label of grid point (a, b), rows a in 1..w, columns b in 1..h."""
    if not (1 <= a <= w and 1 <= b <= h):
        raise ValidationError(f"grid point ({a}, {b}) outside {w}x{h}")
    return (a - 1) * h + b


def grid_poset(w: int, h: int) -> Poset:
    """Product order on [w] x [h]: (a, b) <= (a', b') componentwise."""
    if w < 1 or h < 1:
        raise ValidationError("grid sides must be >= 1")
    rows = np.repeat(np.arange(w), h)
    cols = np.tile(np.arange(h), w)
    leq = (rows[:, None] <= rows[None, :]) & (cols[:, None] <= cols[None, :])
    return Poset(leq)


def disjoint_chains_poset(w: int, h: int) -> Poset:
    """One chain of h elements next to w - 1 isolated elements.

    Labels 1..h form the chain; labels h+1..h+w-1 are incomparable to
    everything else. Width w, height h.
    """
    if w < 1 or h < 1:
        raise ValidationError("shape parameters must be >= 1")
    n = h + w - 1
    leq = np.eye(n, dtype=bool)
    leq[:h, :h] = np.triu(np.ones((h, h), dtype=bool))
    return Poset(leq)
