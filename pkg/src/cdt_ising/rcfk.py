"""Fortuin-Kasteleyn random-cluster representation on dual triangulations.

Each dual edge carries a rate-2 Poisson process on [0, beta]. Spins sit on
vertices rather than on time-extended lines, so the cluster structure only
depends on which edges received at least one arrival; an edge is therefore
open with probability ``p = 1 - exp(-2 beta)`` independently of the others.
Parallel edges are distinct edges with their own processes.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.special import logsumexp, xlogy

from .ising import z_ising_bruteforce
from .logspace import LogSumExp
from .transfer import LN2, existence_threshold, log_trace_transfer_power
from .triangulation import CapacityError, DualGraph, enumerate_torus_triangulations

MAX_FK_EDGES = 24
MAX_RHO_VERTICES = 8
MAX_PARTITION_VERTICES = 8


class UnionFind:
    """Disjoint sets with path compression and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n
        self.components = n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        self.components -= 1
        return True


def cluster_count(vertex_count: int, edges: Sequence[tuple[int, int]], open_mask) -> int:
    uf = UnionFind(vertex_count)
    for (a, b), is_open in zip(edges, open_mask):
        if is_open:
            uf.union(a, b)
    return uf.components


def cluster_count_bfs(vertex_count: int, edges: Sequence[tuple[int, int]], open_mask) -> int:
    adj: list[list[int]] = [[] for _ in range(vertex_count)]
    for (a, b), is_open in zip(edges, open_mask):
        if is_open:
            adj[a].append(b)
            adj[b].append(a)
    seen = [False] * vertex_count
    k = 0
    for start in range(vertex_count):
        if seen[start]:
            continue
        k += 1
        seen[start] = True
        queue = deque([start])
        while queue:
            v = queue.popleft()
            for w in adj[v]:
                if not seen[w]:
                    seen[w] = True
                    queue.append(w)
    return k


def cluster_counts_batch(vertex_count: int, edges, open_matrix: np.ndarray) -> np.ndarray:
    """Cluster count for each row of a (samples, edges) boolean matrix."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    opened = np.asarray(open_matrix, dtype=bool)
    labels = np.tile(np.arange(vertex_count), (opened.shape[0], 1))
    changed = True
    while changed:
        changed = False
        for j, (a, b) in enumerate(e):
            rows = opened[:, j]
            la, lb = labels[rows, a], labels[rows, b]
            low = np.minimum(la, lb)
            if np.any(low != la) or np.any(low != lb):
                labels[rows, a] = low
                labels[rows, b] = low
                changed = True
    return np.sum(labels == np.arange(vertex_count), axis=1)


@dataclass(frozen=True)
class EdgeConfiguration:
    """Open/closed state per dual edge and the resulting cluster count."""

    open: tuple[bool, ...]
    k: int

    @classmethod
    def from_mask(cls, g: DualGraph, open_mask) -> "EdgeConfiguration":
        mask = tuple(bool(x) for x in open_mask)
        if len(mask) != g.edge_count:
            raise ValueError("open mask length must equal the edge count")
        return cls(mask, cluster_count(g.vertex_count, g.edges, mask))

    def to_text(self) -> str:
        lines = [f"# edges={len(self.open)} k={self.k}"]
        lines += [f"{i} {int(b)}" for i, b in enumerate(self.open)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, g: DualGraph) -> "EdgeConfiguration":
        bits = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            idx, bit = line.split()
            if bit not in ("0", "1"):
                raise ValueError(f"edge bit must be 0 or 1, got {bit!r}")
            bits[int(idx)] = bit == "1"
        if sorted(bits) != list(range(g.edge_count)):
            raise ValueError("edge indices must cover 0..E-1 exactly once")
        return cls.from_mask(g, [bits[i] for i in range(g.edge_count)])


def open_probability(beta: float) -> float:
    if beta < 0:
        raise ValueError("beta must be >= 0")
    return -math.expm1(-2.0 * beta)


def sample_arrivals(g: DualGraph, beta: float, rng: np.random.Generator) -> list[np.ndarray]:
    """Arrival times of independent rate-2 Poisson processes on [0, beta], one per edge."""
    counts = rng.poisson(2.0 * beta, size=g.edge_count)
    return [np.sort(rng.uniform(0.0, beta, size=c)) for c in counts]


def sample_links(
    g: DualGraph, beta: float, rng_seed: int, method: str = "bernoulli"
) -> EdgeConfiguration:
    """Sample an FK link realization.

    ``method="poisson"`` draws the arrival processes and opens edges with at
    least one arrival; ``"bernoulli"`` draws the open bits directly. Both give
    the same law.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    rng = np.random.default_rng(rng_seed)
    if method == "bernoulli":
        mask = rng.random(g.edge_count) < open_probability(beta)
    elif method == "poisson":
        mask = [len(times) > 0 for times in sample_arrivals(g, beta, rng)]
    else:
        raise ValueError(f"unknown method {method!r}")
    return EdgeConfiguration.from_mask(g, mask)


def _frontier_order(vertex_count: int, edges: Sequence[tuple[int, int]]) -> list[int]:
    """Edge indices sorted so that vertices enter and leave the frontier early (BFS order)."""
    adj: list[list[int]] = [[] for _ in range(vertex_count)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    rank = [-1] * vertex_count
    nxt = 0
    for start in range(vertex_count):
        if rank[start] >= 0:
            continue
        rank[start] = nxt
        nxt += 1
        queue = deque([start])
        while queue:
            v = queue.popleft()
            for w in adj[v]:
                if rank[w] < 0:
                    rank[w] = nxt
                    nxt += 1
                    queue.append(w)
    return sorted(range(len(edges)), key=lambda e: (max(rank[x] for x in edges[e]),
                                                     min(rank[x] for x in edges[e])))


def _canonical(labels: tuple[int, ...]) -> tuple[int, ...]:
    seen: dict[int, int] = {}
    return tuple(seen.setdefault(x, len(seen)) for x in labels)


def subgraph_census(vertex_count: int, edges: Sequence[tuple[int, int]]) -> np.ndarray:
    """``counts[a, k]`` = number of edge subsets with ``a`` edges and ``k`` clusters.

    Edges are added one at a time while only the frontier (vertices with edges
    still to come) is tracked as a set partition; a vertex leaving the
    frontier as the last member of its block closes one cluster. Subsets that
    agree on the frontier partition are merged into one polynomial in (a, k).
    """
    n_edges = len(edges)
    order = _frontier_order(vertex_count, edges)
    last_use: dict[int, int] = {}
    first_use: dict[int, int] = {}
    for step, e in enumerate(order):
        for v in edges[e]:
            last_use[v] = step
            first_use.setdefault(v, step)
    isolated = vertex_count - len(first_use)
    shape = (n_edges + 1, vertex_count + 1)
    init = np.zeros(shape, dtype=np.int64)
    init[0, isolated] = 1
    active: list[int] = []
    states: dict[tuple[int, ...], np.ndarray] = {(): init}
    for step, e in enumerate(order):
        a, b = edges[e]
        for v in dict.fromkeys((a, b)):
            if first_use[v] == step:
                active.append(v)
                # fresh singleton block; every existing label is smaller than len(active)
                states = {key + (len(active),): poly for key, poly in states.items()}
        ia, ib = active.index(a), active.index(b)
        nxt: dict[tuple[int, ...], np.ndarray] = {}
        for labels, poly in states.items():
            _accumulate(nxt, labels, poly)
            la, lb = labels[ia], labels[ib]
            merged = labels if la == lb else tuple(la if x == lb else x for x in labels)
            shifted = np.zeros_like(poly)
            shifted[1:] = poly[:-1]
            _accumulate(nxt, merged, shifted)
        retiring = {i for i, v in enumerate(active) if last_use[v] == step}
        states = {}
        for labels, poly in nxt.items():
            kept = tuple(x for j, x in enumerate(labels) if j not in retiring)
            # a block with no member left on the frontier is a finished cluster
            closed = len({labels[i] for i in retiring} - set(kept))
            if closed:
                moved = np.zeros_like(poly)
                moved[:, closed:] = poly[:, :-closed]
                poly = moved
            _accumulate(states, _canonical(kept), poly)
        active = [v for i, v in enumerate(active) if i not in retiring]
    counts = np.zeros(shape, dtype=np.int64)
    for poly in states.values():
        counts += poly
    return counts


def _accumulate(table, key, poly):
    if key in table:
        table[key] = table[key] + poly
    else:
        table[key] = poly.copy()


def z_fk_exact(g: DualGraph, beta: float, log: bool = False, max_edges: int = MAX_FK_EDGES) -> float:
    """exp(beta |E|) * sum over A of p^|A| (1-p)^(|E|-|A|) 2^k(A).

    On a dual triangulation |E| = 3/2 n(t).
    """
    n_edges = g.edge_count
    if n_edges > max_edges:
        raise CapacityError(f"{n_edges} edges exceeds FK subset guard {max_edges}")
    counts = subgraph_census(g.vertex_count, g.edges)
    p = open_probability(beta)
    a = np.arange(n_edges + 1)[:, None]
    k = np.arange(g.vertex_count + 1)[None, :]
    with np.errstate(divide="ignore"):
        log_counts = np.log(counts.astype(float))
    terms = log_counts + xlogy(a, p) + xlogy(n_edges - a, 1.0 - p) + k * LN2
    val = beta * n_edges + float(logsumexp(terms[counts > 0]))
    return val if log else math.exp(val)


def z_fk_mc(g: DualGraph, beta: float, samples: int, rng_seed: int) -> tuple[float, float]:
    """Monte Carlo estimate of the FK integral form and its standard error."""
    if samples < 100:
        raise ValueError("need at least 100 samples")
    rng = np.random.default_rng(rng_seed)
    opened = rng.random((samples, g.edge_count)) < open_probability(beta)
    k = cluster_counts_batch(g.vertex_count, g.edges, opened)
    scale = math.exp(beta * g.edge_count)
    vals = np.exp2(k.astype(float))
    est = scale * float(vals.mean())
    err = scale * float(vals.std(ddof=1)) / math.sqrt(samples)
    return est, err


@dataclass(frozen=True)
class Component:
    """A vertex set with its maximal (induced) edge multiset, as vertex pairs."""

    vertices: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]

    @property
    def eta(self) -> int:
        return len(self.vertices)

    @property
    def kappa(self) -> int:
        return len(self.edges)


def induced_component(g: DualGraph, vertices: Iterable[int]) -> Component:
    vs = tuple(sorted(set(vertices)))
    inside = set(vs)
    es = tuple(e for e in g.edges if e[0] in inside and e[1] in inside)
    return Component(vs, es)


@dataclass(frozen=True)
class ClusterDecomposition:
    """Clusters of an FK realization with their maximal edge sets.

    ``open_edges[l]`` lists the open edges inside component ``l``; the
    components' ``edges`` are all dual edges among their vertices.
    """

    components: tuple[Component, ...]
    open_edges: tuple[tuple[tuple[int, int], ...], ...]

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def eta(self) -> tuple[int, ...]:
        return tuple(c.eta for c in self.components)

    @property
    def kappa(self) -> tuple[int, ...]:
        return tuple(c.kappa for c in self.components)


def cluster_decomposition(g: DualGraph, open_mask) -> ClusterDecomposition:
    uf = UnionFind(g.vertex_count)
    for (a, b), is_open in zip(g.edges, open_mask):
        if is_open:
            uf.union(a, b)
    blocks: dict[int, list[int]] = {}
    for v in range(g.vertex_count):
        blocks.setdefault(uf.find(v), []).append(v)
    comps = []
    opened = []
    for members in sorted(blocks.values()):
        comp = induced_component(g, members)
        inside = set(members)
        comps.append(comp)
        opened.append(tuple(
            e for e, is_open in zip(g.edges, open_mask)
            if is_open and e[0] in inside
        ))
    return ClusterDecomposition(tuple(comps), tuple(opened))


def _relabelled(comp: Component) -> tuple[int, list[tuple[int, int]]]:
    index = {v: i for i, v in enumerate(comp.vertices)}
    return len(comp.vertices), [(index[a], index[b]) for a, b in comp.edges]


def spanning_edge_counts(comp: Component, max_vertices: int = MAX_RHO_VERTICES) -> np.ndarray:
    """``out[j]`` = number of connected spanning subgraphs of ``comp`` with j edges."""
    if comp.eta > max_vertices:
        raise CapacityError(f"component with {comp.eta} vertices exceeds guard {max_vertices}")
    n, edges = _relabelled(comp)
    return subgraph_census(n, edges)[:, 1]


def rho(comp: Component, u: float) -> float:
    """Sum of u^|E(gamma)| over the connected spanning subgraphs gamma."""
    counts = spanning_edge_counts(comp)
    return float(sum(int(c) * u**j for j, c in enumerate(counts) if c))


def spanning_count(comp: Component) -> int:
    return int(spanning_edge_counts(comp).sum())


def _is_connected(comp: Component) -> bool:
    n, edges = _relabelled(comp)
    return cluster_count(n, edges, [True] * len(edges)) == 1


def _set_partitions(items: list[int]) -> Iterator[list[list[int]]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]


def maximal_partitions(
    g: DualGraph, max_vertices: int = MAX_PARTITION_VERTICES
) -> Iterator[tuple[Component, ...]]:
    """Partitions of the dual vertices into blocks that induce connected subgraphs."""
    if g.vertex_count > max_vertices:
        raise CapacityError(f"{g.vertex_count} vertices exceeds partition guard {max_vertices}")
    for part in _set_partitions(list(range(g.vertex_count))):
        comps = tuple(induced_component(g, block) for block in part)
        if all(_is_connected(c) for c in comps):
            yield comps


def expansion_check(g: DualGraph, beta: float, max_vertices: int = 6) -> float:
    """Relative residual between the spin sum and the partition/spanning-subgraph expansion."""
    if g.vertex_count > max_vertices:
        raise CapacityError(f"{g.vertex_count} vertices exceeds expansion guard {max_vertices}")
    p = open_probability(beta)
    u = p / (1.0 - p)
    total = math.fsum(
        2.0 ** len(part) * math.prod(rho(c, u) for c in part)
        for part in maximal_partitions(g, max_vertices)
    )
    rhs = math.exp(-beta * g.edge_count) * total
    lhs = z_ising_bruteforce(g, beta)
    return abs(lhs - rhs) / lhs


def edge_count_violations(g: DualGraph, vertices: Iterable[int]) -> list[int]:
    """Edge counts of connected spanning subgraphs outside [|C|-1, 3/2 |C| - 1]."""
    comp = induced_component(g, vertices)
    if not _is_connected(comp):
        raise ValueError("vertex set does not induce a connected subgraph")
    counts = spanning_edge_counts(comp, max_vertices=max(MAX_RHO_VERTICES, comp.eta))
    size = comp.eta
    bad = []
    for j, c in enumerate(counts):
        if c and not (size - 1 <= j <= 1.5 * size - 1):
            bad.extend([j] * int(c))
    return bad


def edge_count_bounds_check(g: DualGraph, vertices: Iterable[int]) -> bool:
    return not edge_count_violations(g, vertices)


def partition_product_bounds(part: Sequence[Component], u: float) -> tuple[float, float, float]:
    """(u^{n-k} prod f, prod rho, u^{3n/2-k} prod f) for one partition with k >= 2 blocks."""
    n = sum(c.eta for c in part)
    k = len(part)
    f = math.prod(spanning_count(c) for c in part)
    prod = math.prod(rho(c, u) for c in part)
    lo, hi = u ** (n - k) * f, u ** (1.5 * n - k) * f
    return (lo, prod, hi) if u >= 1 else (hi, prod, lo)


def partition_lower_bound(g: DualGraph, beta: float) -> float:
    """Spin partition function lower bound from the partition expansion.

    Keeps the single-block term exactly and replaces every multi-block product
    of rho by its lower estimate in terms of spanning-subgraph counts: with
    ``u^n`` when u > 1 and ``u^{3n/2}`` when u < 1.
    """
    p = open_probability(beta)
    u = p / (1.0 - p)
    n = g.vertex_count
    full = rho(induced_component(g, range(n)), u)
    power = n if u > 1 else 1.5 * n
    rest = math.fsum(
        (2.0 / u) ** len(part) * math.prod(spanning_count(c) for c in part)
        for part in maximal_partitions(g)
        if len(part) >= 2
    )
    return math.exp(-beta * g.edge_count) * (2.0 * full + u**power * rest)


def _signed_exp_sum(pos: Sequence[float], neg: Sequence[float]) -> float:
    """sum(exp(pos)) - sum(exp(neg)) with the largest magnitude factored out."""
    top = max(list(pos) + list(neg))
    if top == -math.inf:
        return 0.0
    parts = [math.exp(x - top) for x in pos] + [-math.exp(x - top) for x in neg]
    scaled = math.fsum(sorted(parts, key=abs))
    return scaled * math.exp(top)


def ising_lower_bound_closed(n: int, beta: float) -> float:
    """Closed-form lower bound on the spin partition function of any n-triangle dual.

    Valid for u > 1, i.e. beta > ln(2) / 2.
    """
    p = open_probability(beta)
    base = LN2 + 1.5 * beta * n
    t1 = base + 1.5 * n * math.log(p)
    t2 = base + (n - 1) * math.log(p) + (0.5 * n + 1) * math.log1p(-p)
    t3 = base + (n - 1) * math.log(2.0 - p) + (0.5 * n + 1) * math.log1p(-p)
    return _signed_exp_sum([t1, t3], [t2])


def annealed_lower_bound_arguments(beta: float, mu: float) -> tuple[float, float, float]:
    p = open_probability(beta)
    r = mu - 1.5 * beta
    half_log_q = 0.5 * math.log1p(-p)
    return (
        r - 1.5 * math.log(p),
        r - (math.log(p) + half_log_q),
        r - (math.log(2.0 - p) + half_log_q),
    )


def annealed_lower_bound(
    N: int, beta: float, mu: float, K: int, exact_prefactors: bool = False
) -> float:
    """Three-term lower bound on Xi_N from pure-CDT partition functions at truncation K.

    Summing the closed-form per-triangulation bound over triangulations
    produces constant factors ``(1-p)/p`` and ``(1-p)/(2-p)`` on the second and
    third terms. ``exact_prefactors=False`` drops them, giving the customary
    three-term form; ``True`` keeps them, and the result is then a termwise
    lower bound on the truncated Xi_N. Returns +inf when an argument lies
    below the existence threshold for N strips.
    """
    if beta <= LN2 / 2:
        raise ValueError("the u > 1 bound needs beta > ln(2)/2")
    args = annealed_lower_bound_arguments(beta, mu)
    if min(args) < existence_threshold(N):
        return math.inf
    logs = [LN2 + log_trace_transfer_power(N, a, K) for a in args]
    if exact_prefactors:
        p = open_probability(beta)
        logs[1] += math.log1p(-p) - math.log(p)
        logs[2] += math.log1p(-p) - math.log(2.0 - p)
    return _signed_exp_sum([logs[0], logs[2]], [logs[1]])


def divergence_bound_theorem1(beta: float) -> float:
    """max{2 ln 2, 3/2 ln(2 sinh beta) + ln 2}: below it Xi_N is infinite for large N."""
    if beta <= 0:
        raise ValueError("beta must be > 0")
    return max(2.0 * LN2, 1.5 * math.log(2.0 * math.sinh(beta)) + LN2)


def fk_divergence_bound(beta: float, N: int | None = None) -> float:
    """3/2 beta + ln 2 + 3/2 ln(1 - e^{-2 beta}), plus ln cos(pi/(N+1)) at finite N."""
    if beta <= LN2 / 2:
        raise ValueError("the FK divergence bound needs beta > ln(2)/2")
    val = 1.5 * beta + LN2 + 1.5 * math.log1p(-math.exp(-2.0 * beta))
    if N is not None:
        val += math.log(math.cos(math.pi / (N + 1))) if N > 1 else -math.inf
    return val


def xi_fk_representation(N: int, beta: float, mu: float, K: int, log: bool = False) -> float:
    """Xi_N via Z_N(mu - 3/2 beta) times the Q-average of the FK cluster integral."""
    r = mu - 1.5 * beta
    log_zr = LogSumExp()
    weighted = LogSumExp()
    for t in enumerate_torus_triangulations(N, K):
        g = t.dual_graph()
        integral = z_fk_exact(g, beta, log=True) - beta * g.edge_count
        log_zr.add(-r * t.n_triangles)
        weighted.add(-r * t.n_triangles + integral)
    # Z_N(r) * sum_t integral(t) * Q_{N,r}(t)
    val = log_zr.value + (weighted.value - log_zr.value)
    return val if log else math.exp(val)
