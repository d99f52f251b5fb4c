"""Finite two-rail ladder: graph layout, spanning-tree codes, cycle quadratic form.

The ladder with ``n`` cells has vertices ``(i, level)`` for ``i = 0..n`` and
``level in {1, 2}``.  Edges are indexed densely so weight vectors serialize
stably:

    index 0          -> left rung  (0,1)-(0,2)
    index 3*(i-1)+1  -> lower horizontal (i-1,1)-(i,1)   "lower", cell i
    index 3*(i-1)+2  -> upper horizontal (i-1,2)-(i,2)   "upper", cell i
    index 3*(i-1)+3  -> rung (i,1)-(i,2)                 "rung",  cell i

Spanning trees are encoded by a word over ``ABCD`` with one letter per cell
and no adjacent ``AB``; trees themselves are integer bit masks over edge
indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

TREE_STATES = "ABCD"

__all__ = [
    "LadderGraph",
    "EdgeWeights",
    "SpanningTreeCode",
    "build",
    "tree_decode",
    "tree_encode",
    "count_codes",
    "matrix_tree_count",
    "all_codes",
    "all_spanning_trees",
    "cycle_matrix",
    "cycle_form",
    "tree_mask_from_indices",
    "indices_from_mask",
]


class LadderError(ValueError):
    """Domain error for ladder construction and tree coding."""


def vertex_index(i: int, level: int) -> int:
    return 2 * i + (level - 1)


@dataclass(frozen=True)
class LadderGraph:
    """Immutable description of the ladder with ``n`` cells."""

    n: int
    edges: tuple[tuple[str, int, int], ...]  # (kind, vertex u, vertex v)
    incident: tuple[tuple[tuple[int, int], ...], ...] = field(repr=False)
    # incident[v] = ((edge index, neighbor vertex), ...)

    @property
    def num_vertices(self) -> int:
        return 2 * (self.n + 1)

    @property
    def num_edges(self) -> int:
        return 3 * self.n + 1

    def rung_index(self, i: int) -> int:
        if not 0 <= i <= self.n:
            raise LadderError(f"rung level {i} outside 0..{self.n}")
        return 0 if i == 0 else 3 * (i - 1) + 3

    def lower_index(self, i: int) -> int:
        if not 1 <= i <= self.n:
            raise LadderError(f"lower edge level {i} outside 1..{self.n}")
        return 3 * (i - 1) + 1

    def upper_index(self, i: int) -> int:
        if not 1 <= i <= self.n:
            raise LadderError(f"upper edge level {i} outside 1..{self.n}")
        return 3 * (i - 1) + 2

    def vertex(self, i: int, level: int) -> int:
        return vertex_index(i, level)

    def degree(self, v: int) -> int:
        return len(self.incident[v])

    def edge_between(self, u: int, v: int) -> int:
        for e, w in self.incident[u]:
            if w == v:
                return e
        raise LadderError(f"vertices {u} and {v} are not adjacent")

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "edges": [
                {"index": e, "kind": kind, "u": list(divmod(u, 2))[::-1], "v": list(divmod(v, 2))[::-1]}
                for e, (kind, u, v) in enumerate(self.edges)
            ],
        }


def build(n: int) -> LadderGraph:
    """Construct the ladder with ``n`` cells (``n >= 1``)."""
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 1:
        raise LadderError(f"ladder needs at least one cell, got n={n!r}")
    edges: list[tuple[str, int, int]] = [("rung", vertex_index(0, 1), vertex_index(0, 2))]
    for i in range(1, n + 1):
        edges.append(("lower", vertex_index(i - 1, 1), vertex_index(i, 1)))
        edges.append(("upper", vertex_index(i - 1, 2), vertex_index(i, 2)))
        edges.append(("rung", vertex_index(i, 1), vertex_index(i, 2)))
    incident: list[list[tuple[int, int]]] = [[] for _ in range(2 * (n + 1))]
    for e, (_, u, v) in enumerate(edges):
        incident[u].append((e, v))
        incident[v].append((e, u))
    return LadderGraph(
        n=n,
        edges=tuple(edges),
        incident=tuple(tuple(pairs) for pairs in incident),
    )


@dataclass(frozen=True)
class EdgeWeights:
    """Positive weights per edge plus a normalization tag.

    Tags: ``simplex`` (weights sum to 1), ``rung-zero-unit`` (left rung has
    weight exactly 1) or ``none``.
    """

    values: np.ndarray
    normalization: str = "none"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 1 or (vals.size - 1) % 3 != 0 or vals.size < 4:
            raise LadderError(f"weight vector length {vals.size} does not fit any ladder")
        if not np.all(vals > 0.0):
            raise LadderError("edge weights must be strictly positive")
        if self.normalization == "simplex":
            if abs(vals.sum() - 1.0) > 1e-12:
                raise LadderError("simplex-tagged weights must sum to 1 within 1e-12")
        elif self.normalization == "rung-zero-unit":
            if vals[0] != 1.0:
                raise LadderError("rung-zero-unit weights must have left rung weight exactly 1")
        elif self.normalization != "none":
            raise LadderError(f"unknown normalization tag {self.normalization!r}")

    @property
    def n(self) -> int:
        return (self.values.size - 1) // 3

    def lower(self, i: int) -> float:
        return float(self.values[3 * (i - 1) + 1])

    def upper(self, i: int) -> float:
        return float(self.values[3 * (i - 1) + 2])

    def rung(self, i: int) -> float:
        return float(self.values[0] if i == 0 else self.values[3 * (i - 1) + 3])

    def vertex_weight(self, graph: LadderGraph, v: int) -> float:
        """Sum of weights over edges incident to vertex ``v``."""
        return float(sum(self.values[e] for e, _ in graph.incident[v]))

    def vertex_weights(self, graph: LadderGraph) -> np.ndarray:
        out = np.zeros(graph.num_vertices)
        for e, (_, u, v) in enumerate(graph.edges):
            out[u] += self.values[e]
            out[v] += self.values[e]
        return out


@dataclass(frozen=True)
class SpanningTreeCode:
    """Word over ``ABCD`` with no adjacent ``AB``, one letter per cell."""

    states: str

    def __post_init__(self):
        states = "".join(self.states)
        object.__setattr__(self, "states", states)
        if not states or any(s not in TREE_STATES for s in states):
            raise LadderError(f"code {states!r} uses letters outside {TREE_STATES}")
        for i in range(len(states) - 1):
            if states[i] == "A" and states[i + 1] == "B":
                raise LadderError(f"code {states!r} has forbidden adjacent AB at position {i}")

    @property
    def n(self) -> int:
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    def __getitem__(self, i):
        return self.states[i]


def tree_mask_from_indices(indices: Iterable[int]) -> int:
    mask = 0
    for e in indices:
        mask |= 1 << e
    return mask


def indices_from_mask(mask: int) -> list[int]:
    out = []
    e = 0
    while mask:
        if mask & 1:
            out.append(e)
        mask >>= 1
        e += 1
    return out


def tree_decode(code: SpanningTreeCode | str, n: int | None = None) -> int:
    """Map a tree code to the edge bit mask of the spanning tree it names.

    Horizontals: state C drops the lower edge of its cell, D drops the upper
    edge, A and B keep both.  Rungs: the left rung is present unless the
    first letter is B, the right rung unless the last letter is A, and the
    rung between cells i and i+1 is present unless the i-th letter is A or
    the (i+1)-st letter is B.
    """
    if not isinstance(code, SpanningTreeCode):
        code = SpanningTreeCode(code)
    if n is not None and code.n != n:
        raise LadderError(f"code length {code.n} does not match n={n}")
    n = code.n
    graph = build(n)
    mask = 0
    if code[0] != "B":
        mask |= 1 << graph.rung_index(0)
    if code[n - 1] != "A":
        mask |= 1 << graph.rung_index(n)
    for i in range(1, n):
        if code[i - 1] != "A" and code[i] != "B":
            mask |= 1 << graph.rung_index(i)
    for i in range(1, n + 1):
        s = code[i - 1]
        if s != "C":
            mask |= 1 << graph.lower_index(i)
        if s != "D":
            mask |= 1 << graph.upper_index(i)
    return mask


def _is_spanning_tree(graph: LadderGraph, mask: int) -> bool:
    edges = indices_from_mask(mask)
    if len(edges) != 2 * graph.n + 1:
        return False
    adj: list[list[int]] = [[] for _ in range(graph.num_vertices)]
    for e in edges:
        _, u, v = graph.edges[e]
        adj[u].append(v)
        adj[v].append(u)
    seen = [False] * graph.num_vertices
    stack = [0]
    seen[0] = True
    count = 1
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                count += 1
                stack.append(v)
    # connected with |V| - 1 edges implies acyclic
    return count == graph.num_vertices


def _tree_path_stays_left(graph: LadderGraph, mask: int, i: int) -> bool:
    """True when the tree path joining the two left corners of cell ``i``
    avoids both horizontals of cell ``i`` (the cell closes on the left)."""
    blocked = {graph.lower_index(i), graph.upper_index(i)}
    start = graph.vertex(i - 1, 1)
    goal = graph.vertex(i - 1, 2)
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        if u == goal:
            return True
        for e, v in graph.incident[u]:
            if (mask >> e) & 1 and e not in blocked and v not in seen:
                seen.add(v)
                stack.append(v)
    return False


def tree_encode(tree: int | Iterable[int], n: int) -> SpanningTreeCode:
    """Inverse of :func:`tree_decode`; rejects inputs that are not spanning trees."""
    mask = tree if isinstance(tree, int) else tree_mask_from_indices(tree)
    graph = build(n)
    if not _is_spanning_tree(graph, mask):
        raise LadderError("edge set is not a spanning tree of the ladder")
    letters = []
    for i in range(1, n + 1):
        has_lower = (mask >> graph.lower_index(i)) & 1
        has_upper = (mask >> graph.upper_index(i)) & 1
        if not has_lower:
            letters.append("C")
        elif not has_upper:
            letters.append("D")
        else:
            letters.append("A" if _tree_path_stays_left(graph, mask, i) else "B")
    code = SpanningTreeCode("".join(letters))
    if tree_decode(code) != mask:
        raise LadderError("tree does not round-trip through its code")  # pragma: no cover
    return code


def count_codes(n: int) -> int:
    """Number of valid tree codes of length ``n`` (exact integer)."""
    if n < 1:
        raise LadderError(f"need n >= 1, got {n}")
    # counts by final letter; only the pair AB is forbidden
    per_state = {s: 1 for s in TREE_STATES}
    for _ in range(n - 1):
        total = sum(per_state.values())
        nxt = {s: total for s in TREE_STATES}
        nxt["B"] -= per_state["A"]
        per_state = nxt
    return sum(per_state.values())


def all_codes(n: int):
    """Yield every valid code of length ``n`` in lexicographic order."""
    word = []

    def rec(i: int):
        if i == n:
            yield SpanningTreeCode("".join(word))
            return
        for s in TREE_STATES:
            if word and word[-1] == "A" and s == "B":
                continue
            word.append(s)
            yield from rec(i + 1)
            word.pop()

    yield from rec(0)


def all_spanning_trees(n: int) -> list[int]:
    """Brute-force enumeration of spanning trees as bit masks (small n only)."""
    from itertools import combinations

    graph = build(n)
    out = []
    for subset in combinations(range(graph.num_edges), 2 * n + 1):
        mask = tree_mask_from_indices(subset)
        if _is_spanning_tree(graph, mask):
            out.append(mask)
    return out


def _bareiss_determinant(mat: list[list[int]]) -> int:
    """Exact integer determinant by fraction-free elimination."""
    m = [row[:] for row in mat]
    size = len(m)
    sign = 1
    prev = 1
    for k in range(size - 1):
        if m[k][k] == 0:
            for r in range(k + 1, size):
                if m[r][k] != 0:
                    m[k], m[r] = m[r], m[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, size):
            for j in range(k + 1, size):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return sign * m[size - 1][size - 1]


def matrix_tree_count(n: int) -> int:
    """Spanning-tree count of the ladder via an exact Laplacian minor."""
    graph = build(n)
    size = graph.num_vertices
    lap = [[0] * size for _ in range(size)]
    for _, u, v in graph.edges:
        lap[u][u] += 1
        lap[v][v] += 1
        lap[u][v] -= 1
        lap[v][u] -= 1
    minor = [row[1:] for row in lap[1:]]
    return _bareiss_determinant(minor)


def cycle_matrix(x: EdgeWeights | np.ndarray) -> np.ndarray:
    """Tridiagonal matrix of inverse weights around each cell."""
    if not isinstance(x, EdgeWeights):
        x = EdgeWeights(np.asarray(x, dtype=float))
    n = x.n
    inv = 1.0 / x.values
    mat = np.zeros((n, n))
    for i in range(1, n + 1):
        mat[i - 1, i - 1] = inv[0 if i == 1 else 3 * (i - 2) + 3] + inv[3 * (i - 1) + 1] + inv[3 * (i - 1) + 2] + inv[3 * (i - 1) + 3]
    for i in range(1, n):
        mat[i - 1, i] = mat[i, i - 1] = -inv[3 * (i - 1) + 3]
    return mat


def cycle_form(x: EdgeWeights | np.ndarray, y: Sequence[float]) -> float:
    """Quadratic form ``y A(x) y^t`` evaluated as an explicit sum of squares."""
    if not isinstance(x, EdgeWeights):
        x = EdgeWeights(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    n = x.n
    if y.shape != (n,):
        raise LadderError(f"y has shape {y.shape}, expected ({n},)")
    total = y[0] ** 2 / x.rung(0) + y[n - 1] ** 2 / x.rung(n)
    for i in range(1, n + 1):
        total += y[i - 1] ** 2 * (1.0 / x.lower(i) + 1.0 / x.upper(i))
    for i in range(1, n):
        total += (y[i - 1] - y[i]) ** 2 / x.rung(i)
    return float(total)


def spanning_tree_count_recurrence(n: int) -> int:
    """Closed recurrence a(n) = 4 a(n-1) - a(n-2), a(0)=1, a(1)=4."""
    a, b = 1, 4
    if n == 0:
        return a
    for _ in range(n - 1):
        a, b = b, 4 * b - a
    return b


def weighted_tree_sum(n: int, weights: Sequence[Fraction]) -> Fraction:
    """Exact sum over spanning trees of the product of edge weights (small n)."""
    total = Fraction(0)
    for mask in all_spanning_trees(n):
        prod = Fraction(1)
        for e in indices_from_mask(mask):
            prod *= weights[e]
        total += prod
    return total
