"""Cross-validation suite: independent routes to the same quantity must agree."""
from __future__ import annotations

import itertools
import math
import random
import time
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from . import bounds, ising, mcmc, rcfk, transfer
from .triangulation import (
    count_strips,
    count_torus_triangulations,
    enumerate_strips,
    enumerate_torus_triangulations,
    from_text,
)

REPORT_SCHEMA = "cdt-ising-verify/1"


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    residual: float
    tolerance: float
    detail: str
    seconds: float


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def _small_triangulations(max_vertices: int, n_max: int = 2, k_max: int = 3):
    for N in range(1, n_max + 1):
        for t in enumerate_torus_triangulations(N, k_max):
            if t.n_triangles <= max_vertices:
                yield t


def check_strip_counts():
    bad = 0
    for n in range(1, 7):
        for n2 in range(1, 7):
            expected = math.comb(n + n2 - 1, n - 1)
            bad += len(enumerate_strips(n, n2)) != expected or count_strips(n, n2) != expected
    return float(bad), 0.0, "enumerated strips vs binomial for 1 <= n, n' <= 6"


def check_torus_stream():
    worst = 0
    for N, K in [(1, 3), (2, 3), (3, 2)]:
        ts = list(enumerate_torus_triangulations(N, K))
        worst = max(worst, abs(len(ts) - count_torus_triangulations(N, K)))
        for t in ts:
            ok_sum = t.n_triangles == 2 * sum(t.slice_sizes)
            ok_strip = all(
                m == t.slice_sizes[i] + t.slice_sizes[(i + 1) % N]
                for i, m in enumerate(t.strip_triangle_counts())
            )
            g = t.dual_graph()
            ok_graph = g.is_connected() and set(g.degrees()) == {3}
            ok_text = from_text(t.to_text(K))[0] == t
            worst = max(worst, int(not (ok_sum and ok_strip and ok_graph and ok_text)))
    return float(worst), 0.0, "stream size, slice bookkeeping, 3-regular duals, text round trip"


def check_pure_trace():
    worst = 0.0
    for N, K in [(1, 3), (2, 3), (3, 3), (4, 2)]:
        a = transfer.z_pure_enumerated(N, 1.1, K, log=True)
        b = transfer.log_trace_transfer_power(N, 1.1, K)
        worst = max(worst, _rel(a, b))
    return worst, 1e-12, "sum over triangulations of exp(-mu n) vs trace of U^N"


def check_spectral():
    worst = 0.0
    for mu in (0.8, 1.0, 1.5, 3.0):
        top = transfer.power_iteration(transfer.transfer_matrix(64, mu))
        worst = max(worst, _rel(top, transfer.lambda_mu(mu)))
    worst = max(worst, abs(transfer.lambda_mu(transfer.LN2) - 1.0))
    return worst, 1e-6, "power iteration at K=64 vs closed-form Lambda; Lambda(ln 2) = 1"


def check_growth_rate_trend():
    lam = math.log(transfer.lambda_mu(1.2))
    gaps = [abs(transfer.log_trace_transfer_power(N, 1.2, 64) / N - lam) for N in (10, 40)]
    return float(gaps[1] >= gaps[0]), 0.0, f"|lnZ/N - ln Lambda| at N=10, 40: {gaps}"


def check_divergence_onset():
    mu = math.log(math.sqrt(2.0)) - 0.05
    scan = transfer.truncation_scan(3, mu, K_start=4, K_max=256)
    return float(scan.status != "divergent"), 0.0, f"N=3 at mu={mu:.4f}: {scan.status}"


def check_hamiltonian_ground_state():
    worst = 0
    for t in _small_triangulations(12):
        g = t.dual_graph()
        worst = max(worst, abs(ising.hamiltonian(g, np.ones(g.vertex_count, dtype=int)) + 1.5 * g.vertex_count))
    return float(worst), 0.0, "all-equal spins reach h = -3/2 n"


def check_dp_vs_bruteforce():
    worst = 0.0
    for t in _small_triangulations(14):
        g = t.dual_graph()
        for beta in (0.3, 0.7, 1.2):
            worst = max(worst, _rel(ising.z_ising_bruteforce(g, beta, log=True),
                                    ising.z_ising_strip_dp(t, beta, log=True)))
    return worst, 1e-12, "strip transfer DP vs spin enumeration (log values)"


def check_xi_routes():
    worst = 0.0
    for N, K in [(1, 3), (2, 2), (3, 2)]:
        worst = max(worst, _rel(ising.xi_enumerated(N, 0.6, 2.0, K, log=True),
                                ising.xi_truncated(N, 0.6, 2.0, K, log=True)))
        worst = max(worst, _rel(rcfk.xi_fk_representation(N, 0.6, 2.0, K, log=True)
                                if N * K <= 4 else ising.xi_enumerated(N, 0.6, 2.0, K, log=True),
                                ising.xi_truncated(N, 0.6, 2.0, K, log=True)))
    return worst, 1e-12, "triangulation stream vs spin-slice transfer vs FK cluster form"


def check_infinite_temperature():
    worst = 0.0
    for N, K in [(2, 3), (3, 3)]:
        a = ising.xi_truncated(N, 0.0, 2.5, K, log=True)
        b = transfer.log_trace_transfer_power(N, 2.5 - transfer.LN2, K)
        worst = max(worst, _rel(a, b))
    worst = max(worst, abs(transfer.free_energy_beta0(2.0 * transfer.LN2)))
    return worst, 1e-12, "Xi at beta=0 equals Z at mu - ln 2; phi(0+, 2 ln 2) = 0"


def check_termwise_sandwich():
    bad = 0
    for beta, mu in [(0.3, 4.0), (0.8, 3.0), (1.5, 5.0)]:
        for N, K in [(2, 3), (4, 4)]:
            xi = ising.xi_truncated(N, beta, mu, K, log=True)
            lo = transfer.log_trace_transfer_power(N, mu - transfer.LN2, K)
            hi = transfer.log_trace_transfer_power(N, mu - 1.5 * beta - transfer.LN2, K)
            bad += not (lo <= xi <= hi)
    return float(bad), 0.0, "Z(mu - ln 2) <= Xi <= Z(mu - 3/2 beta - ln 2) at fixed truncation"


def check_fk_identity():
    worst = 0.0
    for t in enumerate_torus_triangulations(2, 2):
        g = t.dual_graph()
        for beta in (0.3, 0.7, 1.2):
            worst = max(worst, _rel(rcfk.z_fk_exact(g, beta), ising.z_ising_bruteforce(g, beta)))
    return worst, 1e-10, "FK edge-subset sum vs spin sum, N=2, slices <= 2"


def check_cluster_counting():
    rng = np.random.default_rng(7)
    bad = 0
    for t in _small_triangulations(12):
        g = t.dual_graph()
        masks = rng.random((16, g.edge_count)) < 0.5
        batch = rcfk.cluster_counts_batch(g.vertex_count, g.edges, masks)
        for mask, kb in zip(masks, batch):
            dec = rcfk.cluster_decomposition(g, mask)
            k1 = rcfk.cluster_count(g.vertex_count, g.edges, mask)
            k2 = rcfk.cluster_count_bfs(g.vertex_count, g.edges, mask)
            bad += not (k1 == k2 == kb == dec.k and sum(dec.eta) == g.vertex_count)
    return float(bad), 0.0, "union-find vs BFS vs vectorized labels vs decomposition"


def check_expansion():
    worst = 0.0
    for t in _small_triangulations(6):
        g = t.dual_graph()
        for beta in (0.2, 0.7, 1.3):
            worst = max(worst, rcfk.expansion_check(g, beta))
    return worst, 1e-12, "spin sum vs partition / spanning-subgraph expansion"


def check_edge_count_inequality():
    bad = 0
    for t in _small_triangulations(8):
        g = t.dual_graph()
        n = g.vertex_count
        for size in range(1, n + 1):
            for vs in itertools.combinations(range(n), size):
                comp = rcfk.induced_component(g, vs)
                if not rcfk._is_connected(comp):
                    continue
                viol = rcfk.edge_count_violations(g, vs)
                if size < n:
                    bad += bool(viol)
                else:
                    bad += viol != [g.edge_count]
    return float(bad), 0.0, "spanning-subgraph edge counts in [|C|-1, 3/2|C|-1] on proper clusters"


def check_partition_bounds():
    bad = 0
    for t in _small_triangulations(6):
        g = t.dual_graph()
        for beta in (0.2, 1.0):
            p = rcfk.open_probability(beta)
            u = p / (1 - p)
            for part in rcfk.maximal_partitions(g):
                if len(part) < 2:
                    continue
                lo, mid, hi = rcfk.partition_product_bounds(part, u)
                bad += not (lo <= mid * (1 + 1e-12) and mid <= hi * (1 + 1e-12))
            z = ising.z_ising_bruteforce(g, beta)
            bad += not rcfk.partition_lower_bound(g, beta) <= z * (1 + 1e-12)
            if u > 1:
                bad += not rcfk.ising_lower_bound_closed(g.vertex_count, beta) <= z * (1 + 1e-12)
    return float(bad), 0.0, "per-partition rho estimates and the resulting lower bounds on Z"


def check_annealed_lower_bound():
    bad = 0
    for beta, mu in [(0.8, 3.0), (1.5, 4.5), (2.5, 6.0)]:
        for N, K in [(2, 3), (3, 3)]:
            lb = rcfk.annealed_lower_bound(N, beta, mu, K, exact_prefactors=True)
            xi = ising.xi_truncated(N, beta, mu, K)
            bad += not lb <= xi * (1 + 1e-12)
    beta = 2.0
    mu = rcfk.fk_divergence_bound(beta) - 0.05
    bad += rcfk.annealed_lower_bound(400, beta, mu, 4) != math.inf
    bad += abs(rcfk.fk_divergence_bound(beta) - (1.5 * math.log(2 * math.sinh(beta)) + transfer.LN2)) > 1e-12
    return float(bad), 0.0, "three-term bound below truncated Xi; divergence sentinel at large N"


def check_griffiths():
    rnd = random.Random(3)
    ts = [t for t in _small_triangulations(12, 3, 3)]
    sample = rnd.sample(ts, min(20, len(ts)))
    grid = np.arange(0.1, 2.0001, 0.1)
    bad = 0
    for t in sample:
        vals = [ising.z_ising_strip_dp(t, b, log=True) for b in grid]
        bad += any(b - a < -1e-12 for a, b in zip(vals, vals[1:]))
    return float(bad), 0.0, "log Z(beta, t) non-decreasing on 0.1..2.0"


def check_lambda_beta_mu():
    bad = 0
    for beta in (0.1, 0.5, 1.0, 2.0):
        for mu in np.linspace(bounds.lambda_poles(beta)[0] + 0.05, 8.0, 25):
            lam = bounds.lambda_beta_mu(beta, mu)
            c, m = bounds.c_coefficient(beta, mu), bounds.m_coefficient(beta, mu)
            env = c * c * (m * m + 1) * math.cosh(2 * beta)
            bad += not (env <= lam <= 2 * env * (1 + 1e-12))
    bad += not bounds.lambda_beta_mu(0.5, 20.0) < 1e-10
    return float(bad), 0.0, "lambda(beta, mu) inside its algebraic envelope; vanishes as mu grows"


def check_psi():
    worst = abs(bounds.psi(1e-4) - 2 * transfer.LN2)
    vals = [bounds.psi(b) for b in np.arange(0.1, 5.0001, 0.1)]
    mono = all(b > a for a, b in zip(vals, vals[1:]))
    cross = all(
        bounds.lambda_beta_mu(b, bounds.psi(b) + 1e-6) < 1 < bounds.lambda_beta_mu(b, bounds.psi(b) - 1e-6)
        for b in (0.1, 0.5, 1.0, 2.0, 4.0)
    )
    return worst if (mono and cross) else math.inf, 1e-3, "psi(0+) = 2 ln 2, increasing, crosses lambda = 1"


def check_region_curves():
    s1, s2 = bounds.beta_star_1(), bounds.beta_star_2()
    r1 = bounds.beta_star_1_residual()
    r2 = abs(bounds.psi(s2) - bounds.linear_upper(s2))
    grid = np.arange(0.05, 5.0001, 0.05)
    order = all(bounds.lower_curve(b) < bounds.upper_curve(b) for b in grid)
    interval = all(bounds.f1(b) <= bounds.f2(b) for b in grid)
    pinch = abs(bounds.f2(1e-4) - bounds.f1(1e-4))
    ok = order and interval and r1 < 1e-12 and pinch < 5e-3
    return (r2 if ok else math.inf), 1e-8, f"beta*_1={s1:.10f}, beta*_2={s2:.10f}, residuals {r1:.2e}, {r2:.2e}"


def check_free_energy_bounds():
    bad = 0
    for beta in (0.2, 0.5, 1.0, 2.0):
        for mu in (3.0, 4.0, 6.0, 10.0):
            fb = bounds.free_energy_bounds(beta, mu)
            if fb.valid:
                bad += not fb.lower <= fb.upper
    phi = bounds.phi_truncated(0.3, 4.0, 4, 4)
    up = bounds.free_energy_bounds(0.3, 4.0).upper
    bad += not phi <= up + 0.05
    bad += not bounds.monotone_free_energy_check(0.3, [3.0, 3.5, 4.0])
    return float(bad), 0.0, f"bound ordering; phi_N(0.3, 4.0)={phi:.6f} vs upper {up:.6f}"


def check_detailed_balance():
    N, K, beta, mu = 2, 2, 0.4, 0.9
    w = mcmc.exact_state_weights(N, K, beta, mu)
    rng = np.random.default_rng(11)
    states = {}
    for t in enumerate_torus_triangulations(N, K):
        sp = rng.choice(np.array([-1, 1], dtype=np.int8), size=t.n_triangles)
        st = mcmc.ChainState.from_triangulation(t, sp, K, beta, mu)
        states[st.key()] = st
    worst = 0.0
    for x, st in states.items():
        row = mcmc.geometry_transition_probabilities(st)
        for y, pxy in row.items():
            if y == x:
                continue
            # rebuild y by replaying moves until we land on it
            for move, _ in mcmc.enumerate_moves(st):
                nxt, _ = mcmc.apply_move(st, move)
                if nxt is not None and nxt.key() == y:
                    break
            pyx = mcmc.geometry_transition_probabilities(nxt).get(x, 0.0)
            worst = max(worst, _rel(w[x] * pxy, w[y] * pyx))
    return worst, 1e-12, "pi(x) P(x,y) = pi(y) P(y,x) for the geometry move on N=2, K_cap=2"


CHECKS: dict[str, Callable[[], tuple[float, float, str]]] = {
    "strip_count_binomial": check_strip_counts,
    "torus_stream_bookkeeping": check_torus_stream,
    "pure_trace_vs_stream": check_pure_trace,
    "spectral_radius_closed_form": check_spectral,
    "growth_rate_improves_with_N": check_growth_rate_trend,
    "divergence_below_existence_threshold": check_divergence_onset,
    "hamiltonian_ground_state": check_hamiltonian_ground_state,
    "strip_dp_vs_bruteforce": check_dp_vs_bruteforce,
    "annealed_sum_three_routes": check_xi_routes,
    "infinite_temperature_reduction": check_infinite_temperature,
    "annealed_termwise_sandwich": check_termwise_sandwich,
    "fk_vs_spin_sum": check_fk_identity,
    "cluster_counting_agreement": check_cluster_counting,
    "partition_expansion_residual": check_expansion,
    "cluster_edge_count_range": check_edge_count_inequality,
    "partition_lower_bounds": check_partition_bounds,
    "annealed_three_term_lower_bound": check_annealed_lower_bound,
    "griffiths_monotone_in_beta": check_griffiths,
    "lambda_envelope": check_lambda_beta_mu,
    "psi_limit_and_crossing": check_psi,
    "critical_region_geometry": check_region_curves,
    "free_energy_bounds_ordering": check_free_energy_bounds,
    "geometry_move_detailed_balance": check_detailed_balance,
}


def run_checks(inject_fault: bool = False, only: list[str] | None = None) -> list[CheckResult]:
    """Run the suite; ``inject_fault`` perturbs one residual to exercise the failure path."""
    out = []
    for name, fn in CHECKS.items():
        if only and name not in only:
            continue
        t0 = time.perf_counter()
        try:
            residual, tol, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            residual, tol, detail = math.inf, 0.0, f"{type(exc).__name__}: {exc}"
        if inject_fault and name == "fk_vs_spin_sum":
            residual += 1e-3
            detail += " [fault injected]"
        out.append(CheckResult(name, bool(residual <= tol), float(residual), float(tol),
                               detail, round(time.perf_counter() - t0, 3)))
    return out


def report(results: list[CheckResult]) -> dict:
    return {
        "schema": REPORT_SCHEMA,
        "passed": all(r.passed for r in results),
        "n_checks": len(results),
        "n_failed": sum(not r.passed for r in results),
        "checks": [asdict(r) for r in results],
    }
