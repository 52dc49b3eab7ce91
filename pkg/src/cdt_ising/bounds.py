"""Curves bounding the critical region in the (beta, mu) quadrant."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Iterable, Sequence

from scipy.optimize import bisect

from .ising import xi_truncated
from .rcfk import divergence_bound_theorem1
from .transfer import LN2, DomainError, lambda_mu

PSI_XTOL = 1e-13
PSI_START_OFFSET = 1e-9
BRACKET_GROWTH_STEPS = 60


class PoleError(ArithmeticError):
    """lambda(beta, mu) evaluated where its c-denominator vanishes."""


class BracketError(RuntimeError):
    """A root bracket could not be established; carries the endpoint diagnostics."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(f"{message}: {diagnostics}")
        self.diagnostics = diagnostics


def c_coefficient(beta: float, mu: float) -> float:
    q = math.exp(beta - mu)
    den = math.exp(2.0 * beta) * (1.0 - q) ** 2 - math.exp(-2.0 * mu)
    if den == 0.0:
        raise PoleError(f"c-denominator vanishes at beta={beta}, mu={mu}")
    return q / den


def m_coefficient(beta: float, mu: float) -> float:
    return math.exp(2.0 * beta) - math.expm1(4.0 * beta) * math.exp(-(beta + mu))


def lambda_radicand(beta: float, mu: float) -> float:
    m2 = m_coefficient(beta, mu) ** 2
    ratio = (m2 - 1.0) / (m2 + 1.0)
    return 1.0 - ratio * ratio / math.cosh(2.0 * beta) ** 2


def lambda_beta_mu(beta: float, mu: float) -> float:
    """Growth-rate function whose level set lambda = 1 defines psi."""
    c = c_coefficient(beta, mu)
    m = m_coefficient(beta, mu)
    rad = lambda_radicand(beta, mu)
    if not rad >= 0.0:
        raise DomainError(f"radicand {rad} < 0 at beta={beta}, mu={mu}")
    return c * c * (m * m + 1.0) * math.cosh(2.0 * beta) * (1.0 + math.sqrt(rad))


def lambda_poles(beta: float) -> tuple[float, ...]:
    """mu values where the c-denominator vanishes: ln(2 cosh beta) and, if defined, ln(2 sinh beta)."""
    poles = [math.log(2.0 * math.cosh(beta))]
    if beta > 0 and 2.0 * math.sinh(beta) > 0:
        poles.append(math.log(2.0 * math.sinh(beta)))
    return tuple(poles)


@lru_cache(maxsize=None)
def psi(beta: float) -> float:
    """inf{mu : lambda(beta, mu) < 1} by bisection on the sign of lambda - 1.

    lambda blows up as mu decreases to the outermost pole ln(2 cosh beta), so
    the bracket starts just above it and its upper end grows geometrically from
    4 + 3 beta until lambda drops below 1. Both end signs are checked.
    """
    if not beta > 0:
        raise ValueError("psi needs beta > 0")
    pole = max(lambda_poles(beta))
    lo = pole + PSI_START_OFFSET * max(1.0, abs(pole))
    hi = max(4.0 + 3.0 * beta, lo + 1.0)
    lam_lo = lambda_beta_mu(beta, lo)
    if not lam_lo > 1.0:
        raise BracketError("lambda <= 1 at the lower bracket end", {"beta": beta, "mu": lo, "lambda": lam_lo})
    for _ in range(BRACKET_GROWTH_STEPS):
        lam_hi = lambda_beta_mu(beta, hi)
        if lam_hi < 1.0:
            break
        hi = lo + 2.0 * (hi - lo)
    else:
        raise BracketError(
            "lambda stays >= 1 at the upper bracket end",
            {"beta": beta, "mu_lo": lo, "lambda_lo": lam_lo, "mu_hi": hi, "lambda_hi": lam_hi},
        )
    return bisect(lambda mu: math.log(lambda_beta_mu(beta, mu)), lo, hi, xtol=PSI_XTOL)


def linear_upper(beta: float) -> float:
    return 1.5 * beta + 2.0 * LN2


def upper_curve(beta: float) -> float:
    """min{psi(beta), 3/2 beta + 2 ln 2}."""
    return min(psi(beta), linear_upper(beta))


def lower_curve(beta: float) -> float:
    return divergence_bound_theorem1(beta)


def f1(beta: float) -> float:
    if not beta > 0:
        raise ValueError("f1 needs beta > 0")
    return max(LN2, 1.5 * math.log(2.0 * math.sinh(beta)))


def f2(beta: float) -> float:
    if not beta > 0:
        raise ValueError("f2 needs beta > 0")
    return min(psi(beta) - LN2, 1.5 * beta + LN2)


def beta_star_1() -> float:
    """Where 3/2 ln(2 sinh beta) + ln 2 meets 2 ln 2."""
    return math.asinh(2.0 ** (-1.0 / 3.0))


def beta_star_1_residual(beta: float | None = None) -> float:
    b = beta_star_1() if beta is None else beta
    return abs(1.5 * math.log(2.0 * math.sinh(b)) + LN2 - 2.0 * LN2)


def _star2_gap(beta: float) -> float:
    return psi(beta) - linear_upper(beta)


@lru_cache(maxsize=1)
def beta_star_2() -> float:
    """Positive root of psi(beta) = 3/2 beta + 2 ln 2."""
    lo, hi = 0.5, 3.0
    g_lo, g_hi = _star2_gap(lo), _star2_gap(hi)
    for _ in range(20):
        if g_lo < 0.0 < g_hi or g_hi < 0.0 < g_lo:
            break
        hi *= 1.5
        g_hi = _star2_gap(hi)
    else:
        raise BracketError(
            "no sign change for psi - 1.5 beta - 2 ln 2",
            {"beta_lo": lo, "gap_lo": g_lo, "beta_hi": hi, "gap_hi": g_hi,
             "lambda_lo": lambda_beta_mu(lo, linear_upper(lo)),
             "lambda_hi": lambda_beta_mu(hi, linear_upper(hi))},
        )
    return bisect(_star2_gap, lo, hi, xtol=1e-14)


class Verdict(str, Enum):
    DIVERGENT = "Divergent"
    UNIQUE_GIBBS = "UniqueGibbs"
    BAND = "IndeterminateBand"


@dataclass(frozen=True)
class RegionVerdict:
    beta: float
    mu: float
    verdict: Verdict
    lower_curve: float
    upper_curve: float


def classify(beta: float, mu: float) -> RegionVerdict:
    """Place (beta, mu) relative to the two bounding curves; points on a curve are in the band."""
    if not beta > 0:
        raise ValueError("classify needs beta > 0")
    lo, hi = lower_curve(beta), upper_curve(beta)
    if mu < lo:
        v = Verdict.DIVERGENT
    elif mu > hi:
        v = Verdict.UNIQUE_GIBBS
    else:
        v = Verdict.BAND
    return RegionVerdict(beta, mu, v, lo, hi)


@dataclass(frozen=True)
class FreeEnergyBounds:
    beta: float
    mu: float
    lower: float
    upper: float
    valid: bool
    reason: str = ""


def free_energy_bounds(beta: float, mu: float) -> FreeEnergyBounds:
    """ln Lambda(mu - f1) <= phi <= ln Lambda(mu - f2), when mu > f2 and both arguments reach ln 2."""
    a, b = f1(beta), f2(beta)
    nan = math.nan
    if not mu > b:
        return FreeEnergyBounds(beta, mu, nan, nan, False, f"mu={mu} not above f2={b}")
    if mu - b < LN2:
        return FreeEnergyBounds(beta, mu, nan, nan, False, f"mu - f2 = {mu - b} below ln 2")
    return FreeEnergyBounds(
        beta, mu, math.log(lambda_mu(mu - a)), math.log(lambda_mu(mu - b)), True
    )


def phi_truncated(beta: float, mu: float, N: int, K: int) -> float:
    """(1/N) ln Xi_N restricted to slice sizes <= K."""
    return xi_truncated(N, beta, mu, K, log=True) / N


def monotone_free_energy_check(
    beta: float, mu_grid: Sequence[float], N: int = 4, K: int = 4, tol: float = 1e-12
) -> bool:
    """-phi_N increases along an increasing mu grid."""
    grid = sorted(mu_grid)
    vals = [-phi_truncated(beta, mu, N, K) for mu in grid]
    return all(b - a >= -tol for a, b in zip(vals, vals[1:]))


BOUNDS_COLUMNS = ("beta", "lower_curve", "psi", "linear_upper", "f1", "f2", "beta_star_1", "beta_star_2")


def curve_rows(betas: Iterable[float]) -> list[dict]:
    """Curve table keyed by BOUNDS_COLUMNS; psi failures leave NaN and an ``error`` entry."""
    s1, s2 = beta_star_1(), beta_star_2()
    rows = []
    for beta in betas:
        row = {"beta": beta, "lower_curve": lower_curve(beta), "linear_upper": linear_upper(beta),
               "f1": f1(beta), "beta_star_1": s1, "beta_star_2": s2}
        try:
            p = psi(beta)
            row["psi"] = p
            row["f2"] = min(p - LN2, 1.5 * beta + LN2)
        except (BracketError, DomainError, PoleError) as exc:
            row["psi"] = math.nan
            row["f2"] = math.nan
            row["error"] = str(exc)
        rows.append(row)
    return rows
