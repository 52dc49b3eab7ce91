"""Log-domain accumulation and scaled matrix powers."""
from __future__ import annotations

import math

import numpy as np


class LogSumExp:
    """Streaming accumulator for ``log(sum(exp(x_i)))``.

    Accumulators over disjoint parts of a stream merge associatively with
    :meth:`merge`, so a fold can be split across workers.
    """

    __slots__ = ("_max", "_scaled")

    def __init__(self):
        self._max = -math.inf
        self._scaled = 0.0

    def add(self, x: float) -> None:
        if x == -math.inf:
            return
        if x <= self._max:
            self._scaled += math.exp(x - self._max)
        else:
            self._scaled = self._scaled * math.exp(self._max - x) + 1.0
            self._max = x

    def merge(self, other: "LogSumExp") -> "LogSumExp":
        out = LogSumExp()
        out.add_scaled(self._max, self._scaled)
        out.add_scaled(other._max, other._scaled)
        return out

    def add_scaled(self, log_scale: float, scaled: float) -> None:
        """Add ``scaled * exp(log_scale)``."""
        if scaled == 0.0 or log_scale == -math.inf:
            return
        if log_scale <= self._max:
            self._scaled += scaled * math.exp(log_scale - self._max)
        else:
            self._scaled = self._scaled * math.exp(self._max - log_scale) + scaled
            self._max = log_scale

    @property
    def value(self) -> float:
        if self._scaled == 0.0:
            return -math.inf
        return self._max + math.log(self._scaled)


def normalize(mat: np.ndarray) -> tuple[np.ndarray, float]:
    """Divide by the largest entry; return the scaled matrix and log of the factor."""
    s = float(np.max(mat))
    if not s > 0.0 or not math.isfinite(s):
        raise FloatingPointError(f"cannot normalize matrix with max entry {s}")
    return mat / s, math.log(s)


def log_trace_product(mats: list[np.ndarray], log_scales: list[float] | None = None) -> float:
    """``log tr(M_0 M_1 ... M_{k-1})`` for non-negative matrices, rescaling each step.

    ``log_scales[i]`` is an extra log factor carried by ``mats[i]``.
    """
    total = 0.0 if log_scales is None else float(sum(log_scales))
    acc, ls = normalize(mats[0])
    total += ls
    for m in mats[1:]:
        acc, ls = normalize(acc @ m)
        total += ls
    tr = float(np.trace(acc))
    if tr <= 0.0:
        return -math.inf
    return total + math.log(tr)


def log_trace_power(mat: np.ndarray, power: int, log_scale: float = 0.0) -> float:
    """``log tr((e^{log_scale} M)^power)`` via repeated squaring with rescaling."""
    if power < 1:
        raise ValueError("power must be >= 1")
    base, ls = normalize(mat)
    base_log = ls + log_scale
    result = None
    result_log = 0.0
    p = power
    while True:
        if p & 1:
            if result is None:
                result, result_log = base.copy(), base_log
            else:
                result, ls = normalize(result @ base)
                result_log += base_log + ls
        p >>= 1
        if not p:
            break
        base, ls = normalize(base @ base)
        base_log = 2.0 * base_log + ls
    tr = float(np.trace(result))
    if tr <= 0.0:
        return -math.inf
    return result_log + math.log(tr)
