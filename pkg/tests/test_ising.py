import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdt_ising.ising import (
    hamiltonian,
    xi_enumerated,
    xi_truncated,
    z_ising_bruteforce,
    z_ising_strip_dp,
)
from cdt_ising.transfer import LN2, log_trace_transfer_power
from cdt_ising.triangulation import CapacityError, CausalTriangulation, enumerate_torus_triangulations


def test_smallest_torus_partition_function():
    t = CausalTriangulation.from_sequences(["UD"])
    g = t.dual_graph()
    beta = 0.4
    expect = 2 * math.exp(3 * beta) + 2 * math.exp(-3 * beta)
    assert z_ising_bruteforce(g, beta) == pytest.approx(expect, rel=1e-14)
    assert z_ising_strip_dp(t, beta) == pytest.approx(expect, rel=1e-14)


def test_hamiltonian_checks():
    g = CausalTriangulation.from_sequences(["UD", "UD"]).dual_graph()
    assert hamiltonian(g, np.ones(4, dtype=int)) == -6
    with pytest.raises(ValueError):
        hamiltonian(g, np.ones(3))
    with pytest.raises(ValueError):
        hamiltonian(g, np.array([1, 0, 1, 1]))


def test_dp_matches_bruteforce(small_tris):
    for t in small_tris:
        g = t.dual_graph()
        for beta in (0.0, 0.3, 1.2):
            assert z_ising_strip_dp(t, beta, log=True) == pytest.approx(
                z_ising_bruteforce(g, beta, log=True), rel=1e-12, abs=1e-12)


def test_beta_zero_counts_configurations(small_tris):
    for t in small_tris[:10]:
        assert z_ising_bruteforce(t.dual_graph(), 0.0) == pytest.approx(2.0 ** t.n_triangles)


def test_guards():
    t = CausalTriangulation.from_sequences(["UD"] * 13)
    with pytest.raises(CapacityError):
        z_ising_bruteforce(t.dual_graph(), 0.1)
    with pytest.raises(CapacityError):
        xi_truncated(2, 0.1, 2.0, 11)


@pytest.mark.parametrize("N,K", [(1, 2), (2, 2), (3, 2), (2, 3), (1, 4)])
def test_xi_transfer_matches_stream(N, K):
    for beta, mu in [(0.3, 2.0), (1.0, 3.5)]:
        assert xi_truncated(N, beta, mu, K, log=True) == pytest.approx(
            xi_enumerated(N, beta, mu, K, log=True), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.floats(0.0, 2.0), st.floats(1.0, 6.0))
def test_xi_termwise_sandwich(N, K, beta, mu):
    xi = xi_truncated(N, beta, mu, K, log=True)
    lo = log_trace_transfer_power(N, mu - LN2, K)
    hi = log_trace_transfer_power(N, mu - 1.5 * beta - LN2, K)
    assert lo <= xi + 1e-12 * abs(xi) and xi <= hi + 1e-12 * abs(hi)


def test_xi_beta_zero_is_pure_shifted():
    assert xi_truncated(3, 0.0, 2.0, 3, log=True) == pytest.approx(
        log_trace_transfer_power(3, 2.0 - LN2, 3), rel=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 1.8), st.floats(0.01, 0.2))
def test_partition_function_increasing_in_beta(idx, beta, d):
    ts = list(enumerate_torus_triangulations(2, 3))
    t = ts[idx % len(ts)]
    assert z_ising_strip_dp(t, beta + d, log=True) >= z_ising_strip_dp(t, beta, log=True) - 1e-12
