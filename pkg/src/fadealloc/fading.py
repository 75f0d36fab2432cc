"""Nakagami-m power-gain model and incomplete gamma functions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "FadingSpec",
    "power_gain_pdf",
    "power_gain_cdf",
    "power_gain_sf",
    "sample_power_gains",
    "gain_stream",
    "upper_incomplete_gamma",
    "exp1",
    "ricean_to_nakagami_m",
]

EULER_GAMMA = 0.57721566490153286061
_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000
# continued fraction above this argument, series below
_CF_SWITCH = 1.5


@dataclass(frozen=True)
class FadingSpec:
    """Block-fading channel with i.i.d. unit-mean Gamma(m, 1/m) power gains.

    ``L`` (channel uses per block) is carried for bookkeeping only; the
    outage and capacity computations depend on the power gains alone.
    """

    m: float = 1.0
    B: int = 1
    L: int = 1

    def __post_init__(self) -> None:
        if not self.m >= 0.5:
            raise ValueError(f"Nakagami m must be >= 0.5, got {self.m}")
        if int(self.B) != self.B or self.B < 1:
            raise ValueError(f"number of blocks must be a positive integer, got {self.B}")
        if int(self.L) != self.L or self.L < 1:
            raise ValueError(f"block length must be a positive integer, got {self.L}")

    @property
    def mean(self) -> float:
        return 1.0

    @property
    def variance(self) -> float:
        return 1.0 / self.m


def power_gain_pdf(s: FadingSpec, gamma):
    """Density of the power gain, zero for negative arguments."""
    g = np.asarray(gamma, dtype=float)
    m = s.m
    with np.errstate(divide="ignore", invalid="ignore"):
        logpdf = m * math.log(m) + (m - 1.0) * np.log(g) - m * g - math.lgamma(m)
        out = np.where(g > 0, np.exp(logpdf), 0.0)
    if m == 1.0:
        out = np.where(g == 0, 1.0, out)
    elif m < 1.0:
        out = np.where(g == 0, np.inf, out)
    return out[()] if out.ndim == 0 else out


def power_gain_cdf(s: FadingSpec, gamma):
    """``P(m, m * gamma)``, the regularized lower incomplete gamma function."""
    g = np.maximum(np.asarray(gamma, dtype=float), 0.0)
    out = special.gammainc(s.m, s.m * g)
    return out[()] if np.ndim(out) == 0 else out


def power_gain_sf(s: FadingSpec, gamma):
    """Survival function ``1 - cdf``, accurate in the upper tail."""
    g = np.maximum(np.asarray(gamma, dtype=float), 0.0)
    out = special.gammaincc(s.m, s.m * g)
    return out[()] if np.ndim(out) == 0 else out


def gain_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for one named stream of a run.

    Streams are addressed by ``(seed, *key)``; drawing more values from a
    stream never changes the values drawn earlier.
    """
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(key))))


def sample_power_gains(s: FadingSpec, n: int, seed: int, shard: int = 0) -> np.ndarray:
    """``(n, B)`` matrix of i.i.d. power gains.

    Column ``b`` of shard ``k`` is drawn from the stream ``(seed, k, b)``,
    so the first rows are unchanged when ``n`` grows.
    """
    if n < 1:
        raise ValueError(f"need at least one draw, got n={n}")
    out = np.empty((int(n), s.B))
    for b in range(s.B):
        out[:, b] = gain_stream(seed, shard, b).gamma(s.m, 1.0 / s.m, size=int(n))
    return out


def _series_lower(a: float, x: float) -> float:
    """Lower incomplete gamma ``gamma(a, x)`` for ``a > 0`` by its series."""
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    else:
        raise ArithmeticError(f"lower gamma series did not converge (a={a}, x={x})")
    return total * math.exp(-x + a * math.log(x))


def _cf_upper(a: float, x: float) -> float:
    """Upper incomplete gamma by Lentz's continued fraction, any real ``a``."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b if b != 0 else 1.0 / _TINY
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise ArithmeticError(f"continued fraction did not converge (a={a}, x={x})")
    return math.exp(-x + a * math.log(x)) * h


def exp1(x: float) -> float:
    """Exponential integral ``E1(x) = Gamma(0, x)`` for ``x > 0``."""
    x = float(x)
    if not x > 0:
        raise ValueError(f"E1 needs x > 0, got {x}")
    if x >= _CF_SWITCH:
        return _cf_upper(0.0, x)
    total = 0.0
    term = 1.0
    for k in range(1, _MAX_ITER):
        term *= -x / k
        add = term / k
        total += add
        if abs(add) < _EPS * abs(total):
            break
    return -EULER_GAMMA - math.log(x) - total


def upper_incomplete_gamma(a: float, x: float) -> float:
    """``Gamma(a, x) = int_x^inf t^(a-1) e^(-t) dt`` for real ``a``.

    Uses a continued fraction for ``x >= max(1.5, a + 1)``. Otherwise ``a > 0`` goes
    through ``Gamma(a) - gamma(a, x)`` and ``a <= 0`` is reached from
    ``E1`` (integer ``a``) or from ``a + k > 0`` by the recurrence
    ``Gamma(a, x) = (Gamma(a+1, x) - x^a e^-x) / a``.

    Raises
    ------
    ValueError
        If ``x <= 0`` and ``a <= 0`` (divergent integral) or ``x < 0``.
    """
    a = float(a)
    x = float(x)
    if x < 0:
        raise ValueError(f"Gamma(a, x) needs x >= 0, got {x}")
    if x == 0:
        if a <= 0:
            raise ValueError(f"Gamma({a}, 0) diverges")
        return math.gamma(a)
    if a == 0:
        return exp1(x)
    if x >= _CF_SWITCH and x >= a + 1.0:
        return _cf_upper(a, x)
    if a > 0:
        return math.gamma(a) - _series_lower(a, x)
    # walk up to a positive (or zero) order, then recur back down
    k = math.ceil(-a)
    top = a + k
    val = exp1(x) if top == 0 else math.gamma(top) - _series_lower(top, x)
    for j in range(k, 0, -1):
        order = a + j - 1
        val = (val - x**order * math.exp(-x)) / order
    return val


def ricean_to_nakagami_m(K: float) -> float:
    """Nakagami ``m`` matching a Ricean channel with factor ``K``."""
    if not K >= 0:
        raise ValueError(f"Rice factor must be nonnegative, got {K}")
    return (K + 1.0) ** 2 / (2.0 * K + 1.0)
