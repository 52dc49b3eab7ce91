"""Ising spins on the dual of a causal triangulation.

Spin arrays hold +1/-1 per dual vertex (one per triangle, numbered as in
:func:`cdt_ising.triangulation.dual_graph`). Parallel dual edges each
contribute to the energy, so the all-equal configurations reach
``h = -(3/2) n(t)``.

Inside the strip DP a layer state is a bitmask over the up-triangles of a
strip, bit ``r`` for the up-triangle of rank ``r``; a set bit means spin -1.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from .logspace import LogSumExp, log_trace_power, log_trace_product
from .triangulation import (
    CapacityError,
    CausalTriangulation,
    DualGraph,
    StripTriangulation,
    UP,
    enumerate_strips,
    enumerate_torus_triangulations,
)

MAX_BRUTE_VERTICES = 24
MAX_STRIP_TRIANGLES = 20


def edge_arrays(g: DualGraph) -> tuple[np.ndarray, np.ndarray]:
    e = np.asarray(g.edges, dtype=np.int64).reshape(-1, 2)
    return e[:, 0], e[:, 1]


def hamiltonian(g: DualGraph, spins) -> int:
    """h = -sum over dual edges of the spin product."""
    s = np.asarray(spins)
    if s.shape != (g.vertex_count,):
        raise ValueError(
            f"spin configuration has shape {s.shape}, graph has {g.vertex_count} vertices"
        )
    if not np.all(np.abs(s) == 1):
        raise ValueError("spins must be +1 or -1")
    a, b = edge_arrays(g)
    return -int(np.sum(s[a] * s[b]))


def _spins_from_codes(codes: np.ndarray, n: int) -> np.ndarray:
    bits = (codes[:, None] >> np.arange(n, dtype=np.int64)) & 1
    return (1 - 2 * bits).astype(np.int8)


def z_ising_bruteforce(
    g: DualGraph, beta: float, log: bool = False, max_vertices: int = MAX_BRUTE_VERTICES
) -> float:
    """Sum of exp(-beta h) over all 2^n spin configurations."""
    n = g.vertex_count
    if n > max_vertices:
        raise CapacityError(f"{n} vertices exceeds brute-force guard {max_vertices}")
    a, b = edge_arrays(g)
    acc = LogSumExp()
    chunk = 1 << 16
    for start in range(0, 1 << n, chunk):
        codes = np.arange(start, min(start + chunk, 1 << n), dtype=np.int64)
        s = _spins_from_codes(codes, n)
        coupling = np.sum(s[:, a].astype(np.int64) * s[:, b], axis=1)
        acc.add(float(logsumexp(beta * coupling)))
    return acc.value if log else math.exp(acc.value)


@lru_cache(maxsize=4096)
def _strip_layer_matrix(sequence: str, beta: float) -> np.ndarray:
    """Scaled layer transfer for one strip.

    Entry ``[a, b]`` is the sum over the strip's down spins ``d`` of
    ``exp(beta * (inner(a, d) + cross(d, b)))`` divided by
    ``exp(beta * (m + n_top))``; ``a`` codes this strip's up spins, ``b`` the
    next strip's up spins.
    """
    strip = StripTriangulation(sequence)
    n, n_top, m = strip.n_bottom, strip.n_top, strip.n_triangles
    a_codes = np.arange(1 << n, dtype=np.int64)[:, None]
    d_codes = np.arange(1 << n_top, dtype=np.int64)[None, :]
    layer = []
    up_rank = down_rank = 0
    for c in sequence:
        if c == UP:
            layer.append(1 - 2 * ((a_codes >> up_rank) & 1))
            up_rank += 1
        else:
            layer.append(1 - 2 * ((d_codes >> down_rank) & 1))
            down_rank += 1
    inner = np.zeros((1 << n, 1 << n_top), dtype=np.int64)
    for j in range(m):
        inner = inner + layer[j] * layer[(j + 1) % m]
    w = np.exp(beta * (inner - m))
    # cross-slice edges: down of rank k against next strip's up of rank k
    t = np.array([[1.0, math.exp(-2.0 * beta)], [math.exp(-2.0 * beta), 1.0]])
    w = w.reshape((1 << n,) + (2,) * n_top)
    for _ in range(n_top):
        w = np.tensordot(w, t, axes=([1], [0]))
    return w.reshape(1 << n, 1 << n_top)


def _strip_log_offset(strip: StripTriangulation, beta: float) -> float:
    return beta * (strip.n_triangles + strip.n_top)


def z_ising_strip_dp(
    t: CausalTriangulation,
    beta: float,
    log: bool = False,
    max_strip_triangles: int = MAX_STRIP_TRIANGLES,
) -> float:
    """Ising partition function on a fixed triangulation as a trace over strips.

    Within-strip edges (consecutive triangles of a strip) form the inner
    energy; cross-slice edges form the interaction between adjacent strips.
    For ``N = 1`` the single strip couples to itself and the trace closes on
    one matrix.
    """
    biggest = max(s.n_triangles for s in t.strips)
    if biggest > max_strip_triangles:
        raise CapacityError(
            f"strip with {biggest} triangles exceeds DP guard {max_strip_triangles}"
        )
    mats = [_strip_layer_matrix(s.sequence, float(beta)) for s in t.strips]
    offsets = [_strip_log_offset(s, beta) for s in t.strips]
    val = log_trace_product(mats, offsets)
    return val if log else math.exp(val)


def xi_enumerated(N: int, beta: float, mu: float, K: int, log: bool = False) -> float:
    """Truncated annealed partition function as a fold over the triangulation stream."""
    acc = LogSumExp()
    for t in enumerate_torus_triangulations(N, K):
        acc.add(-mu * t.n_triangles + z_ising_strip_dp(t, beta, log=True))
    return acc.value if log else math.exp(acc.value)


def slice_spin_transfer(beta: float, mu: float, K: int) -> tuple[np.ndarray, float]:
    """Transfer matrix over (slice size, up-spin code) states, with its log scale.

    Block ``(n, n2)`` sums the layer matrices of every strip with boundary
    sizes ``(n, n2)``, weighted by ``exp(-mu (n + n2))``. The trace of its
    N-th power is the annealed partition function truncated at slice size K.
    """
    sizes = range(1, K + 1)
    starts = {}
    total = 0
    for n in sizes:
        starts[n] = total
        total += 1 << n
    blocks = {}
    for n in sizes:
        for n2 in sizes:
            strips = enumerate_strips(n, n2, cap=max(K, 1))
            block = sum(_strip_layer_matrix(s.sequence, float(beta)) for s in strips)
            log_scale = -mu * (n + n2) + beta * (n + 2 * n2)
            blocks[(n, n2)] = (block, log_scale)
    top = max(ls + math.log(float(b.max())) for b, ls in blocks.values())
    g = np.zeros((total, total))
    for (n, n2), (block, ls) in blocks.items():
        g[starts[n]:starts[n] + (1 << n), starts[n2]:starts[n2] + (1 << n2)] = block * math.exp(ls - top)
    return g, top


def xi_truncated(N: int, beta: float, mu: float, K: int, log: bool = False) -> float:
    """Xi_N(beta, mu) restricted to triangulations with every slice size <= K."""
    if N < 1 or K < 1:
        raise ValueError("N and K must be >= 1")
    if 2 * K > MAX_STRIP_TRIANGLES:
        raise CapacityError(f"K={K} gives strips above the DP guard")
    g, top = slice_spin_transfer(beta, mu, K)
    val = log_trace_power(g, N, log_scale=top)
    return val if log else math.exp(val)
