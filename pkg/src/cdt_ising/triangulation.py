"""Strip and time-periodic causal triangulations, and their dual graphs.

A strip is stored as a string over ``"U"``/``"D"`` read from its root, which
is always an up-triangle (one edge on the lower slice). A causal triangulation
of the torus is a tuple of strips where the top slice of strip ``i`` is the
bottom slice of strip ``i + 1 (mod N)``.

Gluing across a slice is rank-to-rank: the ``k``-th down-triangle of strip
``i`` (counted from the root) shares its top edge with the ``k``-th
up-triangle of strip ``i + 1``. With independently rooted strips this makes
the set of triangulations with slice sizes ``n^0, ..., n^{N-1}`` have exactly
``prod_i C(n^i + n^{i+1} - 1, n^i - 1)`` elements, the combinatorial factor of
the transfer matrix.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb
from typing import Iterator, Sequence

UP = "U"
DOWN = "D"

DEFAULT_SLICE_CAP = 12
DEFAULT_STRIP_CAP = 12


class CapacityError(ValueError):
    """Raised when an enumeration would exceed its configured size cap."""


@dataclass(frozen=True)
class StripTriangulation:
    """One annular strip: a rooted cyclic sequence of up/down triangles."""

    sequence: str

    def __post_init__(self):
        seq = self.sequence
        if not seq or set(seq) - {UP, DOWN}:
            raise ValueError(f"strip sequence must be a non-empty U/D string, got {seq!r}")
        if seq[0] != UP:
            raise ValueError("strip root (position 0) must hold an up-triangle")
        if DOWN not in seq:
            raise ValueError("strip needs at least one down-triangle")

    @property
    def n_bottom(self) -> int:
        return self.sequence.count(UP)

    @property
    def n_top(self) -> int:
        return self.sequence.count(DOWN)

    @property
    def n_triangles(self) -> int:
        return len(self.sequence)

    def up_positions(self) -> list[int]:
        return [j for j, c in enumerate(self.sequence) if c == UP]

    def down_positions(self) -> list[int]:
        return [j for j, c in enumerate(self.sequence) if c == DOWN]


@dataclass(frozen=True)
class CausalTriangulation:
    """Time-periodic sequence of compatible strips.

    ``slice_sizes[i]`` is ``n^i``, the number of edges on slice ``i``, which
    is the bottom size of strip ``i`` and the top size of strip ``i - 1``.
    """

    strips: tuple[StripTriangulation, ...]

    def __post_init__(self):
        strips = tuple(self.strips)
        object.__setattr__(self, "strips", strips)
        if not strips:
            raise ValueError("a causal triangulation needs at least one strip")
        n = len(strips)
        for i, s in enumerate(strips):
            nxt = strips[(i + 1) % n]
            if s.n_top != nxt.n_bottom:
                raise ValueError(
                    f"strips {i} and {(i + 1) % n} are not compatible: "
                    f"n_top={s.n_top} vs n_bottom={nxt.n_bottom}"
                )

    @classmethod
    def from_sequences(cls, sequences: Sequence[str]) -> "CausalTriangulation":
        return cls(tuple(StripTriangulation(s) for s in sequences))

    @property
    def N(self) -> int:
        return len(self.strips)

    @property
    def slice_sizes(self) -> tuple[int, ...]:
        return tuple(s.n_bottom for s in self.strips)

    @property
    def n_triangles(self) -> int:
        """n(t), the total triangle count; equals twice the sum of slice sizes."""
        return sum(s.n_triangles for s in self.strips)

    def strip_triangle_counts(self) -> tuple[int, ...]:
        """Per-strip n(t(i)) = n^i + n^{i+1}."""
        return tuple(s.n_triangles for s in self.strips)

    def dual_graph(self) -> "DualGraph":
        return dual_graph(self)

    def to_text(self, K: int | None = None) -> str:
        return to_text(self, K)


@dataclass(frozen=True)
class DualGraph:
    """Triangles as vertices, shared edges as (possibly parallel) graph edges.

    Vertices are numbered strip by strip, and by position from the root inside
    each strip. ``edges[e]`` is an ordered pair ``(a, b)`` with ``a <= b``;
    ``vertical[e]`` is True for edges crossing a slice and False for edges
    between consecutive triangles of one strip.
    """

    vertex_count: int
    edges: tuple[tuple[int, int], ...]
    strip_index: tuple[int, ...]
    vertical: tuple[bool, ...]

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def degrees(self) -> list[int]:
        deg = [0] * self.vertex_count
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg

    def adjacency(self) -> list[list[int]]:
        """Neighbour lists with multiplicity (parallel edges repeat)."""
        adj: list[list[int]] = [[] for _ in range(self.vertex_count)]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        return adj

    def is_connected(self) -> bool:
        if self.vertex_count == 0:
            return True
        adj = self.adjacency()
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.vertex_count


def count_strips(n_bottom: int, n_top: int) -> int:
    if n_bottom < 1 or n_top < 1:
        raise ValueError("strip boundary sizes must be >= 1")
    return comb(n_bottom + n_top - 1, n_bottom - 1)


def enumerate_strips(
    n_bottom: int, n_top: int, cap: int = DEFAULT_SLICE_CAP
) -> list[StripTriangulation]:
    """All rooted strips with the given boundary sizes, in lexicographic order.

    The root holds an up-triangle, so a strip is fixed by choosing which of
    the remaining ``n_bottom + n_top - 1`` positions carry the other
    ``n_bottom - 1`` up-triangles.
    """
    if n_bottom < 1 or n_top < 1:
        raise ValueError("strip boundary sizes must be >= 1")
    if n_bottom > cap or n_top > cap:
        raise CapacityError(f"strip sizes ({n_bottom}, {n_top}) exceed cap {cap}")
    m = n_bottom + n_top
    out = []
    for ups in itertools.combinations(range(1, m), n_bottom - 1):
        seq = [DOWN] * m
        seq[0] = UP
        for j in ups:
            seq[j] = UP
        out.append("".join(seq))
    out.sort()
    return [StripTriangulation(s) for s in out]


def enumerate_torus_triangulations(
    N: int,
    K: int,
    cap_K: int = DEFAULT_SLICE_CAP,
    cap_N: int = DEFAULT_STRIP_CAP,
) -> Iterator[CausalTriangulation]:
    """Stream every time-periodic causal triangulation with all n^i <= K.

    Ordered lexicographically by slice-size vector, then by the per-strip
    sequences. Nothing beyond one slice-size vector's strip lists is held in
    memory.
    """
    if N < 1 or K < 1:
        raise ValueError("N and K must be >= 1")
    if K > cap_K or N > cap_N:
        raise CapacityError(f"(N={N}, K={K}) exceeds caps (N<={cap_N}, K<={cap_K})")
    strip_cache: dict[tuple[int, int], list[StripTriangulation]] = {}
    for sizes in itertools.product(range(1, K + 1), repeat=N):
        choices = []
        for i in range(N):
            key = (sizes[i], sizes[(i + 1) % N])
            if key not in strip_cache:
                strip_cache[key] = enumerate_strips(*key, cap=cap_K)
            choices.append(strip_cache[key])
        for strips in itertools.product(*choices):
            yield CausalTriangulation(strips)


def count_torus_triangulations(N: int, K: int) -> int:
    """Closed count: sum over slice vectors of products of strip counts."""
    total = 0
    for sizes in itertools.product(range(1, K + 1), repeat=N):
        prod = 1
        for i in range(N):
            prod *= count_strips(sizes[i], sizes[(i + 1) % N])
        total += prod
    return total


def dual_graph(t: CausalTriangulation) -> DualGraph:
    offsets = []
    total = 0
    for s in t.strips:
        offsets.append(total)
        total += s.n_triangles
    edges: list[tuple[int, int]] = []
    vertical: list[bool] = []
    strip_index: list[int] = []
    N = t.N
    for i, s in enumerate(t.strips):
        off = offsets[i]
        m = s.n_triangles
        strip_index.extend([i] * m)
        for j in range(m):
            a, b = off + j, off + (j + 1) % m
            edges.append((min(a, b), max(a, b)))
            vertical.append(False)
    for i, s in enumerate(t.strips):
        nxt = (i + 1) % N
        downs = s.down_positions()
        ups = t.strips[nxt].up_positions()
        for d, u in zip(downs, ups):
            a, b = offsets[i] + d, offsets[nxt] + u
            edges.append((min(a, b), max(a, b)))
            vertical.append(True)
    return DualGraph(total, tuple(edges), tuple(strip_index), tuple(vertical))


def to_text(t: CausalTriangulation, K: int | None = None) -> str:
    """Canonical serialization: ``"N K"`` then one U/D line per strip."""
    if K is None:
        K = max(t.slice_sizes)
    if K < max(t.slice_sizes):
        raise ValueError("K must bound every slice size")
    lines = [f"{t.N} {K}"] + [s.sequence for s in t.strips]
    return "\n".join(lines) + "\n"


def from_text(text: str) -> tuple[CausalTriangulation, int]:
    """Parse :func:`to_text` output; returns the triangulation and its K."""
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty triangulation text")
    try:
        N, K = (int(x) for x in lines[0].split())
    except ValueError as exc:
        raise ValueError(f"bad header line {lines[0]!r}; expected 'N K'") from exc
    body = lines[1:]
    if len(body) != N:
        raise ValueError(f"header declares N={N} strips but {len(body)} lines follow")
    t = CausalTriangulation.from_sequences(body)
    if max(t.slice_sizes) > K:
        raise ValueError(f"slice size {max(t.slice_sizes)} exceeds declared K={K}")
    return t, K
