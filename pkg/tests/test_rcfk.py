import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdt_ising.ising import xi_truncated, z_ising_bruteforce
from cdt_ising.rcfk import (
    EdgeConfiguration,
    UnionFind,
    annealed_lower_bound,
    cluster_count,
    cluster_count_bfs,
    cluster_counts_batch,
    cluster_decomposition,
    divergence_bound_theorem1,
    edge_count_bounds_check,
    edge_count_violations,
    expansion_check,
    fk_divergence_bound,
    induced_component,
    ising_lower_bound_closed,
    maximal_partitions,
    open_probability,
    partition_lower_bound,
    partition_product_bounds,
    rho,
    sample_links,
    spanning_count,
    subgraph_census,
    xi_fk_representation,
    z_fk_exact,
    z_fk_mc,
)
from cdt_ising.transfer import LN2
from cdt_ising.triangulation import CapacityError, CausalTriangulation, enumerate_torus_triangulations


def test_union_find():
    uf = UnionFind(5)
    assert uf.union(0, 1) and uf.union(3, 4) and not uf.union(1, 0)
    assert uf.components == 3 and uf.find(0) == uf.find(1)


def test_open_probability():
    assert open_probability(0.0) == 0.0
    assert open_probability(1.0) == pytest.approx(1 - math.exp(-2))
    with pytest.raises(ValueError):
        open_probability(-1.0)


def test_census_totals(small_tris):
    for t in small_tris[:8]:
        g = t.dual_graph()
        c = subgraph_census(g.vertex_count, g.edges)
        assert c.sum() == 2 ** g.edge_count
        assert c[0, g.vertex_count] == 1  # empty set: every vertex alone
        assert c[g.edge_count, 1] == 1


def test_fk_matches_spin_sum(small_tris):
    for t in small_tris:
        g = t.dual_graph()
        for beta in (0.0, 0.3, 0.7, 1.2):
            assert z_fk_exact(g, beta) == pytest.approx(z_ising_bruteforce(g, beta), rel=1e-10)


def test_fk_guard():
    g = CausalTriangulation.from_sequences(["UDUDUDUDUD"] * 2).dual_graph()
    with pytest.raises(CapacityError):
        z_fk_exact(g, 0.5)


def test_triangle_rho():
    # a 3-cycle: three spanning trees plus the full cycle
    g = CausalTriangulation.from_sequences(["UDD", "UUD"]).dual_graph()
    tri = None
    for vs in itertools.combinations(range(g.vertex_count), 3):
        comp = induced_component(g, vs)
        if comp.kappa == 3 and len({e for e in comp.edges}) == 3:
            tri = comp
            break
    assert tri is not None
    assert rho(tri, 2.0) == pytest.approx(3 * 4 + 8)
    assert spanning_count(tri) == 4


def test_rho_parallel_pair():
    g = CausalTriangulation.from_sequences(["UD"]).dual_graph()
    comp = induced_component(g, [0, 1])
    assert rho(comp, 2.0) == pytest.approx(3 * 2 + 3 * 4 + 8)


def test_mc_matches_exact():
    g = CausalTriangulation.from_sequences(["UUDD", "UDUD"]).dual_graph()
    est, err = z_fk_mc(g, 0.7, 20_000, rng_seed=1)
    assert abs(est - z_fk_exact(g, 0.7)) <= 4 * err
    with pytest.raises(ValueError):
        z_fk_mc(g, 0.7, 10, rng_seed=1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 1000), st.integers(0, 2**32 - 1))
def test_cluster_counters_agree(idx, seed):
    ts = list(enumerate_torus_triangulations(2, 3))
    g = ts[idx % len(ts)].dual_graph()
    rng = np.random.default_rng(seed)
    masks = rng.random((8, g.edge_count)) < 0.5
    batch = cluster_counts_batch(g.vertex_count, g.edges, masks)
    for mask, kb in zip(masks, batch):
        dec = cluster_decomposition(g, mask)
        assert cluster_count(g.vertex_count, g.edges, mask) == cluster_count_bfs(
            g.vertex_count, g.edges, mask) == kb == dec.k
        assert sum(dec.eta) == g.vertex_count
        assert sum(len(o) for o in dec.open_edges) == int(mask.sum())
        for comp in dec.components:
            assert edge_count_bounds_check(g, comp.vertices) or len(dec.components) == 1


def test_sampling_methods_and_text():
    t = CausalTriangulation.from_sequences(["UUDD", "UDUD"])
    g = t.dual_graph()
    for method in ("bernoulli", "poisson"):
        cfg = sample_links(g, 0.6, 5, method=method)
        assert cfg == EdgeConfiguration.from_text(cfg.to_text(), g)
        assert cfg == sample_links(g, 0.6, 5, method=method)
    with pytest.raises(ValueError):
        sample_links(g, 0.6, 5, method="other")
    with pytest.raises(ValueError):
        EdgeConfiguration.from_text("0 1\n", g)


def test_poisson_and_bernoulli_same_law():
    g = CausalTriangulation.from_sequences(["UD", "UD"]).dual_graph()
    beta, n = 0.4, 4000
    means = []
    for method in ("bernoulli", "poisson"):
        means.append(np.mean([sum(sample_links(g, beta, s, method).open) for s in range(n)]))
    expect = open_probability(beta) * g.edge_count
    se = math.sqrt(g.edge_count * open_probability(beta) * (1 - open_probability(beta)) / n)
    assert all(abs(m - expect) < 4 * se for m in means)


def test_expansion_identity(small_tris):
    graphs = [t.dual_graph() for t in small_tris if t.n_triangles <= 6]
    assert len(graphs) >= 5
    for g in graphs:
        for beta in (0.2, 0.9, 1.5):
            assert expansion_check(g, beta) < 1e-12


def test_partitions_cover_graph():
    g = CausalTriangulation.from_sequences(["UD", "UD"]).dual_graph()
    parts = list(maximal_partitions(g))
    assert any(len(p) == 1 for p in parts) and any(len(p) == 4 for p in parts)
    for p in parts:
        assert sorted(v for c in p for v in c.vertices) == list(range(4))


def test_edge_count_whole_graph_is_the_exception(small_tris):
    for t in small_tris:
        if t.n_triangles > 8:
            continue
        g = t.dual_graph()
        assert edge_count_violations(g, range(g.vertex_count)) == [g.edge_count]
    g = CausalTriangulation.from_sequences(["UUDD", "UDUD"]).dual_graph()
    adjacent = {frozenset(e) for e in g.edges}
    a, b = next(p for p in itertools.combinations(range(g.vertex_count), 2) if frozenset(p) not in adjacent)
    with pytest.raises(ValueError):
        edge_count_violations(g, [a, b])


def test_partition_estimates(small_tris):
    for t in small_tris:
        if t.n_triangles > 6:
            continue
        g = t.dual_graph()
        for beta in (0.2, 0.9):
            p = open_probability(beta)
            u = p / (1 - p)
            for part in maximal_partitions(g):
                if len(part) > 1:
                    lo, mid, hi = partition_product_bounds(part, u)
                    assert lo <= mid * (1 + 1e-12) <= hi * (1 + 1e-12)
            assert partition_lower_bound(g, beta) <= z_ising_bruteforce(g, beta) * (1 + 1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1000), st.floats(0.36, 3.0))
def test_closed_lower_bound(idx, beta):
    ts = [t for t in enumerate_torus_triangulations(2, 3) if t.n_triangles <= 10]
    g = ts[idx % len(ts)].dual_graph()
    assert ising_lower_bound_closed(g.vertex_count, beta) <= z_fk_exact(g, beta) * (1 + 1e-12)


def test_annealed_lower_bound():
    for beta, mu in [(0.8, 3.0), (2.0, 5.5)]:
        exact = annealed_lower_bound(3, beta, mu, 3, exact_prefactors=True)
        assert 0 < exact <= xi_truncated(3, beta, mu, 3)
        assert math.isfinite(annealed_lower_bound(3, beta, mu, 3))
    with pytest.raises(ValueError):
        annealed_lower_bound(3, 0.2, 3.0, 3)
    assert annealed_lower_bound(400, 2.0, fk_divergence_bound(2.0) - 0.05, 3) == math.inf


def test_divergence_bounds():
    assert divergence_bound_theorem1(0.1) == pytest.approx(2 * LN2)
    b = 2.0
    assert divergence_bound_theorem1(b) == pytest.approx(1.5 * math.log(2 * math.sinh(b)) + LN2)
    assert fk_divergence_bound(b) == pytest.approx(divergence_bound_theorem1(b), rel=1e-14)
    assert fk_divergence_bound(b, N=5) < fk_divergence_bound(b)
    with pytest.raises(ValueError):
        fk_divergence_bound(0.3)


def test_fk_representation_of_xi():
    assert xi_fk_representation(2, 0.7, 2.5, 2, log=True) == pytest.approx(
        xi_truncated(2, 0.7, 2.5, 2, log=True), rel=1e-12)
