"""Pure-CDT thermodynamics from the slice-size transfer matrix.

Matrix indices are slice sizes ``n >= 1``; arrays store them 0-based, so
``entries[n - 1, n2 - 1] == u(n, n2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .logspace import LogSumExp, log_trace_power
from .triangulation import enumerate_torus_triangulations

LN2 = math.log(2.0)
TOL_TRUNC = 1e-10


class DomainError(ValueError):
    """Argument outside the domain where a closed form is defined."""


def log_transfer_entry(n: int, n2: int, mu: float) -> float:
    if n < 1 or n2 < 1:
        raise ValueError("slice sizes must be >= 1")
    return math.log(math.comb(n + n2 - 1, n - 1)) - mu * (n + n2)


def transfer_entry(n: int, n2: int, mu: float) -> float:
    """u(n, n2) = C(n + n2 - 1, n - 1) exp(-mu (n + n2))."""
    return math.exp(log_transfer_entry(n, n2, mu))


def log_transfer_matrix(K: int, mu: float) -> np.ndarray:
    n = np.arange(1, K + 1, dtype=float)[:, None]
    n2 = np.arange(1, K + 1, dtype=float)[None, :]
    log_binom = gammaln(n + n2) - gammaln(n) - gammaln(n2 + 1)
    return log_binom - mu * (n + n2)


@dataclass(frozen=True)
class TransferTruncation:
    K: int
    mu: float
    entries: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, K: int, mu: float) -> "TransferTruncation":
        if K < 1:
            raise ValueError("K must be >= 1")
        return cls(K, mu, np.exp(log_transfer_matrix(K, mu)))


def transfer_matrix(K: int, mu: float) -> np.ndarray:
    return TransferTruncation.build(K, mu).entries


def log_trace_transfer_power(N: int, mu: float, K: int) -> float:
    """log tr(U_K^N), built and powered in scaled arithmetic."""
    if N < 1 or K < 1:
        raise ValueError("N and K must be >= 1")
    logs = log_transfer_matrix(K, mu)
    top = float(logs.max())
    return log_trace_power(np.exp(logs - top), N, log_scale=top)


def _log_close(a: float, b: float, tol: float) -> bool:
    return abs(a - b) < tol * max(1.0, abs(a), abs(b))


@dataclass(frozen=True)
class PureFreeEnergyReport:
    mu: float
    N: int
    K: int
    log_Z: float
    converged: bool
    diverged: bool
    lambda_log: float | None

    @property
    def log_Z_over_N(self) -> float:
        return self.log_Z / self.N

    def row(self) -> dict:
        return {
            "mu": self.mu,
            "N": self.N,
            "K": self.K,
            "log_Z": self.log_Z,
            "log_Z_over_N": self.log_Z_over_N,
            "ln_Lambda": math.nan if self.lambda_log is None else self.lambda_log,
            "converged": self.converged,
        }


def z_pure(N: int, mu: float, K: int, tol: float = TOL_TRUNC) -> PureFreeEnergyReport:
    """Truncated pure-CDT partition function log tr(U_K^N).

    ``converged`` compares against the K/2 truncation; ``diverged`` is set when
    the log trace grew by more than 1 over each of the last two doublings
    (needs K >= 4).
    """
    if K < 2:
        raise ValueError("K must be >= 2 for the truncation test")
    log_z = log_trace_transfer_power(N, mu, K)
    half = log_trace_transfer_power(N, mu, K // 2)
    converged = _log_close(log_z, half, tol)
    diverged = False
    if K >= 4:
        quarter = log_trace_transfer_power(N, mu, K // 4)
        diverged = (log_z - half > 1.0) and (half - quarter > 1.0)
    lam = math.log(lambda_mu(mu)) if mu >= LN2 else None
    return PureFreeEnergyReport(mu, N, K, log_z, converged and not diverged, diverged, lam)


@dataclass(frozen=True)
class TruncationScan:
    status: str  # "converged" | "divergent" | "undecided"
    K: int
    log_Z: float
    history: tuple[tuple[int, float], ...]


def truncation_scan(
    N: int,
    mu: float,
    K_start: int = 4,
    K_max: int = 1024,
    tol: float = TOL_TRUNC,
) -> TruncationScan:
    """K-doubling protocol for the infinite transfer matrix.

    Converged once consecutive truncations agree to ``tol`` (relative on log
    values); divergent when the log trace rises by more than 1 across two
    doublings in a row.
    """
    history = []
    K = K_start
    prev = None
    big_jumps = 0
    while K <= K_max:
        val = log_trace_transfer_power(N, mu, K)
        history.append((K, val))
        if prev is not None:
            if _log_close(val, prev, tol):
                return TruncationScan("converged", K, val, tuple(history))
            big_jumps = big_jumps + 1 if val - prev > 1.0 else 0
            if big_jumps >= 2:
                return TruncationScan("divergent", K, val, tuple(history))
        prev = val
        K *= 2
    return TruncationScan("undecided", history[-1][0], history[-1][1], tuple(history))


def z_pure_enumerated(N: int, mu: float, K: int, log: bool = False) -> float:
    """Direct sum of exp(-mu n(t)) over the triangulation stream."""
    acc = LogSumExp()
    for t in enumerate_torus_triangulations(N, K):
        acc.add(-mu * t.n_triangles)
    return acc.value if log else math.exp(acc.value)


def lambda_mu(mu: float) -> float:
    """Closed-form spectral radius Lambda(mu) of the infinite transfer matrix."""
    if mu < LN2:
        raise DomainError(f"Lambda(mu) needs mu >= ln 2, got {mu}")
    x = math.exp(-mu)
    # mu >= ln 2 makes the radicand non-negative; clamp roundoff at the edge only
    rad = max(0.0, 1.0 - 4.0 * x * x)
    # (1 - sqrt(rad)) / (2x) rewritten without cancellation
    root = 2.0 * x / (1.0 + math.sqrt(rad))
    return root * root


def existence_threshold(N: int) -> float:
    """ln(2 cos(pi / (N + 1))); -inf for N = 1."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if N == 1:
        return -math.inf
    return math.log(2.0 * math.cos(math.pi / (N + 1)))


def free_energy_beta0(mu: float) -> float:
    """Infinite-temperature free energy; +inf below mu = 2 ln 2."""
    if mu < 2.0 * LN2:
        return math.inf
    return math.log(lambda_mu(mu - LN2))


def power_iteration(
    mat: np.ndarray, tol: float = 1e-14, max_iter: int = 100_000, seed: int = 0
) -> float:
    """Dominant eigenvalue of a non-negative matrix by power iteration."""
    rng = np.random.default_rng(seed)
    v = rng.random(mat.shape[0]) + 0.5
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = mat @ v
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return 0.0
        v = w / new
        if abs(new - lam) <= tol * new:
            return new
        lam = new
    raise RuntimeError(f"power iteration did not converge in {max_iter} steps")
