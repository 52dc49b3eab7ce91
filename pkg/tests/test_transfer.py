import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdt_ising.logspace import LogSumExp, log_trace_power, log_trace_product
from cdt_ising.transfer import (
    LN2,
    DomainError,
    existence_threshold,
    free_energy_beta0,
    lambda_mu,
    log_trace_transfer_power,
    power_iteration,
    transfer_entry,
    transfer_matrix,
    truncation_scan,
    z_pure,
    z_pure_enumerated,
)


def test_entry_values():
    assert transfer_entry(1, 1, 0.0) == 1.0
    assert transfer_entry(2, 3, 0.0) == math.comb(4, 1)
    assert transfer_entry(2, 2, 1.0) == pytest.approx(3 * math.exp(-4))


def test_single_strip_k2_closed_form():
    mu = 0.9
    expect = math.exp(-2 * mu) + 3 * math.exp(-4 * mu)
    assert z_pure_enumerated(1, mu, 2) == pytest.approx(expect, rel=1e-14)
    assert math.exp(log_trace_transfer_power(1, mu, 2)) == pytest.approx(expect, rel=1e-14)


def test_single_strip_k3_closed_form():
    mu = 1.3
    expect = sum(math.comb(2 * n - 1, n - 1) * math.exp(-2 * n * mu) for n in (1, 2, 3))
    assert z_pure_enumerated(1, mu, 3) == pytest.approx(expect, rel=1e-14)


@pytest.mark.parametrize("N,K", [(1, 3), (2, 3), (3, 3), (4, 2)])
def test_trace_matches_stream(N, K):
    for mu in (0.5, 1.0, 2.0):
        assert log_trace_transfer_power(N, mu, K) == pytest.approx(
            z_pure_enumerated(N, mu, K, log=True), rel=1e-12)


def test_spectrum_real():
    ev = np.linalg.eigvals(transfer_matrix(20, 1.0))
    assert np.max(np.abs(ev.imag)) < 1e-9


@pytest.mark.parametrize("mu", [0.8, 1.0, 1.5, 3.0])
def test_lambda_vs_power_iteration(mu):
    assert power_iteration(transfer_matrix(64, mu)) == pytest.approx(lambda_mu(mu), rel=1e-6)


def test_lambda_edge_and_domain():
    assert lambda_mu(LN2) == 1.0
    with pytest.raises(DomainError):
        lambda_mu(0.5)


@settings(max_examples=50, deadline=None)
@given(st.floats(LN2, 20.0), st.floats(0.0, 2.0))
def test_lambda_decreasing(mu, d):
    assert lambda_mu(mu + d) <= lambda_mu(mu) * (1 + 1e-12)


def test_existence_threshold():
    assert existence_threshold(1) == -math.inf
    assert existence_threshold(3) == pytest.approx(math.log(math.sqrt(2)))
    assert existence_threshold(500) < LN2


def test_free_energy_beta0():
    assert free_energy_beta0(1.0) == math.inf
    assert free_energy_beta0(2 * LN2) == 0.0
    assert free_energy_beta0(3.0) == pytest.approx(math.log(lambda_mu(3.0 - LN2)))


def test_growth_rate_trend():
    lam = math.log(lambda_mu(1.2))
    g10 = abs(log_trace_transfer_power(10, 1.2, 64) / 10 - lam)
    g40 = abs(log_trace_transfer_power(40, 1.2, 64) / 40 - lam)
    assert g40 < g10


def test_truncation_scan_diverges_below_threshold():
    scan = truncation_scan(3, existence_threshold(3) - 0.05, K_max=256)
    assert scan.status == "divergent"


def test_truncation_scan_converges_above_ln2():
    assert truncation_scan(3, 1.0, K_max=512).status == "converged"


def test_z_pure_report():
    rep = z_pure(3, 1.5, 64)
    assert rep.converged and not rep.diverged
    assert set(rep.row()) == {"mu", "N", "K", "log_Z", "log_Z_over_N", "ln_Lambda", "converged"}
    with pytest.raises(ValueError):
        z_pure(3, 1.5, 1)


def test_logsumexp_matches_direct():
    xs = [-1000.0, -999.0, -1001.5]
    a = LogSumExp()
    for x in xs:
        a.add(x)
    b1, b2 = LogSumExp(), LogSumExp()
    b1.add(xs[0])
    b2.add(xs[1])
    b2.add(xs[2])
    merged = b1.merge(b2)
    direct = -999.0 + math.log(sum(math.exp(x + 999.0) for x in xs))
    assert a.value == pytest.approx(direct) and merged.value == pytest.approx(direct)
    assert LogSumExp().value == -math.inf


def test_scaled_traces():
    rng = np.random.default_rng(0)
    m = rng.random((4, 4))
    assert log_trace_power(m, 7) == pytest.approx(math.log(np.trace(np.linalg.matrix_power(m, 7))))
    ms = [rng.random((3, 3)) for _ in range(3)]
    assert log_trace_product(ms) == pytest.approx(math.log(np.trace(ms[0] @ ms[1] @ ms[2])))
    huge = m * 1e200
    assert log_trace_power(huge, 5) == pytest.approx(
        5 * math.log(1e200) + math.log(np.trace(np.linalg.matrix_power(m, 5))))
