"""Power allocation and outage for the B-block delay-limited channel.

Every policy here transmits the minimum-power vector that just supports the
target rate (optimal mercury/water-filling or its truncated water-filling
surrogate), or stays silent. The constraints only decide *when* to stay
silent:

* peak:    transmit iff ``<p> <= P_peak``;
* average: transmit iff ``<p> <= s`` with ``s`` set by the average budget;
* PAPR:    transmit iff ``<p> <= min(s, P_peak)``.

Outage Monte Carlo therefore reduces to the distribution of the mean
minimum power ``<p>(gamma)``, which is sampled once and thresholded.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
from scipy import optimize

from .curve import InfoCurve, UnachievableRateError
from .fading import (EULER_GAMMA, FadingSpec, gain_stream, power_gain_cdf,
                     upper_incomplete_gamma)

__all__ = [
    "PowerBudget",
    "AllocationVector",
    "OutageEstimate",
    "ThresholdS",
    "InfeasibleError",
    "min_power_alloc",
    "tw_min_power_alloc",
    "peak_max_rate_alloc",
    "alloc_peak",
    "alloc_av",
    "alloc_papr",
    "mean_min_power",
    "MeanPowerSample",
    "sample_mean_power",
    "threshold_s",
    "ThresholdPolicy",
    "ZeroPolicy",
    "outage_mc",
    "outage_sweep",
    "outage_papr_decomposition",
    "singleton_diversity",
    "tw_diversity",
    "b1_threshold_s",
    "b1_log_threshold_s",
    "b1_threshold_P0",
    "b1_outage_analytic",
    "diversity_slope_fit",
    "ci95",
]

# random streams: outage draws and threshold-estimation draws never overlap
OUTAGE_STREAM = 0
THRESHOLD_STREAM = 1
DEFAULT_THRESHOLD_DRAWS = 10**6
_CHUNK_ROWS = 1 << 18
_TABLE_SIZE = 1 << 17
# fewer outage events than this in the threshold sample is flagged
_MIN_TAIL_EVENTS = 30


class InfeasibleError(ValueError):
    """No finite power vector supports the rate on this channel draw."""


@dataclass(frozen=True)
class PowerBudget:
    """Average power and peak-to-average ratio, both linear."""

    P_av: float
    PAPR: float = math.inf

    def __post_init__(self) -> None:
        if not self.P_av > 0:
            raise ValueError(f"P_av must be positive, got {self.P_av}")
        if not self.PAPR >= 1:
            raise ValueError(f"PAPR >= 1 required, got {self.PAPR}")

    @property
    def P_peak(self) -> float:
        return self.PAPR * self.P_av

    @classmethod
    def from_db(cls, P_av_db: float, PAPR_db: float = math.inf) -> "PowerBudget":
        return cls(10 ** (P_av_db / 10), 10 ** (PAPR_db / 10))


@dataclass(frozen=True)
class AllocationVector:
    """Per-block powers chosen for one channel draw."""

    p: np.ndarray
    scheme: str
    eta: float
    achieved_rate: float

    @property
    def mean_power(self) -> float:
        return float(np.mean(self.p))

    @property
    def transmits(self) -> bool:
        return bool(np.any(self.p > 0))


def ci95(p_hat: float, n: int) -> float:
    """Normal-approximation 95% half-width of a binomial proportion."""
    return 1.96 * math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / n)


@dataclass(frozen=True)
class OutageEstimate:
    """Monte Carlo outage estimate and the parameters that produced it."""

    p_hat: float
    n: int
    ci95: float
    R: float
    scheme: str
    P_av: float = math.nan
    P_peak: float = math.inf
    threshold: float = math.inf
    m: float = math.nan
    B: int = 0
    beta: float | None = None
    seed: int | None = None
    low_confidence: bool = False

    @property
    def sigma(self) -> float:
        return math.sqrt(max(self.p_hat * (1 - self.p_hat), 0.0) / self.n)


@dataclass(frozen=True)
class ThresholdS:
    """Silence threshold on ``<p>`` meeting an average power budget.

    ``s = inf`` when transmitting on every draw already fits the budget.
    """

    s: float
    solved_for: str
    P_av: float
    n: int
    seed: int | None
    low_confidence: bool = False
    note: str = ""

    def __post_init__(self) -> None:
        if not (self.s > 0):
            raise ValueError(f"threshold must be positive, got {self.s}")

    @property
    def finite(self) -> bool:
        return math.isfinite(self.s)


# ----------------------------------------------------------------------------
# exact single-draw allocators
# ----------------------------------------------------------------------------

def _check_rate(curve: InfoCurve, R: float) -> float:
    R = float(R)
    if not R >= 0:
        raise ValueError(f"rate must be nonnegative, got {R}")
    if R >= curve.max_info:
        raise UnachievableRateError(
            f"rate {R} is not below the input entropy {curve.max_info}")
    return R


def _gains(gains) -> np.ndarray:
    g = np.atleast_1d(np.asarray(gains, dtype=float))
    if g.ndim != 1 or np.any(g < 0) or np.any(~np.isfinite(g)):
        raise ValueError("gains must be a 1-D array of finite nonnegative values")
    return g


def _expand_bracket(f, lo: float, hi: float, step: float = 2.0, limit: int = 200):
    """Grow ``hi`` until ``f(hi) >= 0`` for a nondecreasing ``f``."""
    flo = f(lo)
    if flo > 0:
        raise ArithmeticError("lower bracket already above the root")
    for _ in range(limit):
        fhi = f(hi)
        if fhi >= 0:
            if fhi < flo:
                raise ArithmeticError("rate function is not nondecreasing")
            return lo, hi
        lo, hi = hi, hi + step
        step *= 1.5
    raise ArithmeticError("could not bracket the water level")


def _opt_powers(curve: InfoCurve, g: np.ndarray, lam: float) -> np.ndarray:
    """Mercury/water-filling powers at ``eta = exp(lam)``; zero-gain blocks get 0."""
    p = np.zeros_like(g)
    pos = g > 0
    target = np.minimum(curve.mmse0, np.exp(-lam) / g[pos])
    p[pos] = curve.inverse_mmse(target) / g[pos]
    return p


def _rate(curve: InfoCurve, p: np.ndarray, g: np.ndarray) -> float:
    return float(np.mean(curve.info(p * g)))


def min_power_alloc(curve: InfoCurve, gains, R: float) -> AllocationVector:
    """Minimum total power supporting rate ``R`` over the blocks.

    ``p_b = MMSE^{-1}(min(MMSE(0), 1/(eta gamma_b))) / gamma_b`` with the
    water level ``eta`` set so that the block-average information is ``R``.

    Raises
    ------
    UnachievableRateError
        ``R`` is not below the input entropy.
    InfeasibleError
        Too many zero gains to carry ``R`` on the remaining blocks.
    """
    R = _check_rate(curve, R)
    g = _gains(gains)
    B = g.size
    if R == 0:
        return AllocationVector(np.zeros(B), "min_power", 0.0, 0.0)
    pos = g > 0
    npos = int(pos.sum())
    if npos == 0 or R * B / npos >= curve.max_info:
        raise InfeasibleError(f"{B - npos} of {B} blocks have zero gain; rate {R} infeasible")
    if B == 1:
        p = np.array([curve.inverse_info(R) / g[0]])
        eta = 1.0 / (g[0] * float(curve.mmse(p[0] * g[0])))
        return AllocationVector(p, "min_power", eta, _rate(curve, p, g))

    lg = np.log(g[pos])
    # every block silent below this level
    lo = -math.log(curve.mmse0) - lg.max()

    def excess(lam):
        return _rate(curve, _opt_powers(curve, g, lam), g) - R

    lo, hi = _expand_bracket(excess, lo, lo + 1.0)
    lam = optimize.brentq(excess, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps,
                          maxiter=500)
    # nudge up so the constraint holds with margin
    p = _opt_powers(curve, g, lam)
    rate = _rate(curve, p, g)
    while rate < R - 1e-12:
        lam += 1e-13 * max(1.0, abs(lam))
        p = _opt_powers(curve, g, lam)
        rate = _rate(curve, p, g)
    return AllocationVector(p, "min_power", math.exp(lam), rate)


def _tw_snr(g: np.ndarray, eta: float, beta: float) -> np.ndarray:
    return np.minimum(beta, np.maximum(eta * g - 1.0, 0.0))


def tw_min_power_alloc(curve: InfoCurve, gains, R: float, beta: float) -> AllocationVector:
    """Truncated water-filling: ``p_b = min(beta/gamma_b, (eta - 1/gamma_b)_+)``.

    ``eta`` is the smallest level at which the block-average information
    reaches ``R``. ``beta`` (linear SNR cap) may be ``inf``.

    Raises
    ------
    InfeasibleError
        ``R`` exceeds what the capped SNRs can carry, ``I(beta) * B_+ / B``.
    """
    R = _check_rate(curve, R)
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    g = _gains(gains)
    B = g.size
    if R == 0:
        return AllocationVector(np.zeros(B), "tw", 0.0, 0.0)
    pos = g > 0
    npos = int(pos.sum())
    cap = float(curve.info(beta)) if math.isfinite(beta) else curve.max_info
    if npos == 0 or R * B > cap * npos * (1 + 1e-15) or (
            not math.isfinite(beta) and R * B / npos >= curve.max_info):
        raise InfeasibleError(f"rate {R} above the truncated ceiling {cap * npos / B:.6g}")

    def powers(eta):
        p = np.zeros_like(g)
        p[pos] = _tw_snr(g[pos], eta, beta) / g[pos]
        return p

    def excess(lt):
        return _rate(curve, powers(math.exp(lt)), g) - R

    if math.isfinite(beta):
        # level at which every positive block hits the cap
        sat = math.log((beta + 1.0) / g[pos].min())
        if excess(sat) <= 1e-14:
            p = powers(math.exp(sat))
            return AllocationVector(p, "tw", math.exp(sat), _rate(curve, p, g))
    lo = -math.log(g[pos].max())
    lo, hi = _expand_bracket(excess, lo, lo + 1.0)
    lt = optimize.brentq(excess, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps,
                         maxiter=500)
    p = powers(math.exp(lt))
    rate = _rate(curve, p, g)
    while rate < R - 1e-12:
        lt += 1e-13 * max(1.0, abs(lt))
        p = powers(math.exp(lt))
        rate = _rate(curve, p, g)
    return AllocationVector(p, "tw", math.exp(lt), rate)


def peak_max_rate_alloc(curve: InfoCurve, gains, P_peak: float) -> AllocationVector:
    """Rate-maximizing powers under ``<p> = P_peak`` (direct peak allocator).

    ``p_b = MMSE^{-1}(min(MMSE(0), eta/gamma_b)) / gamma_b``. Used as an
    independent check on the threshold form of the peak policy.
    """
    g = _gains(gains)
    if not P_peak > 0:
        raise ValueError("P_peak must be positive")
    pos = g > 0
    if not pos.any():
        return AllocationVector(np.zeros(g.size), "peak_direct", math.inf, 0.0)

    def powers(lam):
        p = np.zeros_like(g)
        target = np.minimum(curve.mmse0, math.exp(lam) / g[pos])
        p[pos] = curve.inverse_mmse(target) / g[pos]
        return p

    # mean power decreases in eta; work with its negation
    def excess(lam):
        return P_peak - float(np.mean(powers(lam)))

    hi = math.log(curve.mmse0 * g[pos].max())   # all silent: excess = P_peak > 0
    lo = hi - 1.0
    while excess(lo) > 0:
        lo -= 2.0 * (hi - lo)
        if hi - lo > 1e4:
            raise ArithmeticError("could not bracket the peak water level")
    lam = optimize.brentq(excess, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    p = powers(lam)
    return AllocationVector(p, "peak_direct", math.exp(lam), _rate(curve, p, g))


def _base_alloc(curve, gains, R, beta):
    try:
        if beta is None:
            return min_power_alloc(curve, gains, R)
        return tw_min_power_alloc(curve, gains, R, beta)
    except InfeasibleError:
        return None


def _gated(curve, gains, R, limit, beta, scheme):
    a = _base_alloc(curve, gains, R, beta)
    g = _gains(gains)
    if a is None or not a.mean_power <= limit:
        eta = math.nan if a is None else a.eta
        return AllocationVector(np.zeros(g.size), scheme, eta, 0.0)
    return replace(a, scheme=scheme)


def alloc_peak(curve: InfoCurve, gains, R: float, P_peak: float,
               beta: float | None = None) -> AllocationVector:
    """Minimum-power vector if its mean fits under ``P_peak``, else silence.

    The boundary ``<p> == P_peak`` transmits. ``beta`` switches to the
    truncated water-filling vector.
    """
    return _gated(curve, gains, R, P_peak, beta, "peak" if beta is None else "tw_peak")


def alloc_av(curve: InfoCurve, gains, R: float, s, beta: float | None = None
             ) -> AllocationVector:
    """Transmit the minimum-power vector iff ``<p> <= s``."""
    s = s.s if isinstance(s, ThresholdS) else float(s)
    return _gated(curve, gains, R, s, beta, "av" if beta is None else "tw_av")


def alloc_papr(curve: InfoCurve, gains, R: float, budget: PowerBudget, s,
               beta: float | None = None) -> AllocationVector:
    """Transmit iff ``<p> <= min(s, P_peak)``."""
    s = s.s if isinstance(s, ThresholdS) else float(s)
    return _gated(curve, gains, R, min(s, budget.P_peak), beta,
                  "papr" if beta is None else "tw_papr")


# ----------------------------------------------------------------------------
# vectorized mean minimum power
# ----------------------------------------------------------------------------

class _UniformTable:
    """Piecewise-linear function on a uniform grid, clamped at both ends."""

    def __init__(self, x0: float, x1: float, values: np.ndarray) -> None:
        self.x0 = x0
        self.dx = (x1 - x0) / (values.size - 1)
        self.v = values
        self.slope = np.append(np.diff(values) / self.dx, 0.0)

    def __call__(self, x: np.ndarray, with_slope: bool = False):
        f = (x - self.x0) / self.dx
        f = np.clip(f, 0.0, self.v.size - 1.0)
        i = np.minimum(f.astype(np.int64), self.v.size - 2)
        w = f - i
        val = self.v[i] + w * (self.v[i + 1] - self.v[i])
        if not with_slope:
            return val
        inside = (x > self.x0) & (x < self.x0 + self.dx * (self.v.size - 1))
        return val, np.where(inside, self.slope[i], 0.0)


class _RateMaps:
    """Per-block rate and SNR as functions of ``u = log(eta * gamma)``.

    For the optimal rule ``snr(u) = MMSE^{-1}(min(MMSE(0), e^-u))``; for
    truncated water-filling ``snr(u) = min(beta, (e^u - 1)_+)``.
    """

    def __init__(self, curve: InfoCurve, beta: float | None) -> None:
        self.curve = curve
        self.beta = beta
        self.gaussian = curve.model.kind == "gaussian"
        self.u0 = -math.log(curve.mmse0) if beta is None else 0.0
        if self.gaussian:
            self.u_hi = math.inf if beta is None else math.log1p(beta)
            return
        if beta is None:
            # up to where the rate is M to double precision
            rho_hi = float(curve.inverse_info(curve.max_info * (1 - 1e-15)))
            self.u_hi = -math.log(float(curve.mmse(rho_hi)))
            u = np.linspace(self.u0, self.u_hi, _TABLE_SIZE)
            snr = curve.inverse_mmse(np.minimum(curve.mmse0, np.exp(-u)))
            self._snr = _UniformTable(self.u0, self.u_hi, snr)
            self._rate = _UniformTable(self.u0, self.u_hi, curve.info(snr))
        else:
            cap = beta if math.isfinite(beta) else float(
                curve.inverse_info(curve.max_info * (1 - 1e-15)))
            self.u_hi = math.log1p(cap)
            u = np.linspace(0.0, self.u_hi, _TABLE_SIZE)
            self._rate = _UniformTable(0.0, self.u_hi, curve.info(np.expm1(u)))
        self.rate_max = float(self._rate.v[-1])

    def rate(self, u: np.ndarray, with_slope: bool = False):
        if self.gaussian:
            uu = np.clip(u, 0.0, self.u_hi)
            val = uu / math.log(2)
            if not with_slope:
                return val
            return val, np.where((u > 0) & (u < self.u_hi), 1 / math.log(2), 0.0)
        if self.beta is not None:
            return self._rate(np.minimum(u, self.u_hi), with_slope)
        return self._rate(u, with_slope)

    def snr(self, u: np.ndarray) -> np.ndarray:
        if self.beta is not None:
            return np.minimum(self.beta, np.maximum(np.expm1(np.maximum(u, 0.0)), 0.0))
        if self.gaussian:
            return np.maximum(np.expm1(np.maximum(u, 0.0)), 0.0)
        out = self._snr(u)
        beyond = u > self.u_hi
        if np.any(beyond):
            out[beyond] = self.curve.inverse_mmse(np.exp(-u[beyond]))
        return out

    def ceiling(self) -> float:
        if self.gaussian:
            if self.beta is None:
                return math.inf
            return math.log1p(self.beta) / math.log(2)
        return self.rate_max


_MAPS: dict[tuple, _RateMaps] = {}


def _rate_maps(curve: InfoCurve, beta: float | None) -> _RateMaps:
    key = (id(curve), beta)
    maps = _MAPS.get(key)
    if maps is None or maps.curve is not curve:
        maps = _MAPS[key] = _RateMaps(curve, beta)
    return maps


def mean_min_power(curve: InfoCurve, gains: np.ndarray, R: float,
                   beta: float | None = None) -> np.ndarray:
    """Mean minimum power ``<p>`` for each row of an ``(n, B)`` gain matrix.

    Vectorized counterpart of :func:`min_power_alloc` (or
    :func:`tw_min_power_alloc` when ``beta`` is given) built on dense
    lookup tables; agrees with the exact allocators to ~1e-7 relative.
    Rows that cannot support ``R`` get ``inf``.
    """
    R = _check_rate(curve, R)
    g = np.asarray(gains, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    n, B = g.shape
    if R == 0:
        return np.zeros(n)
    with np.errstate(divide="ignore"):
        lg = np.log(g)
    if B == 1 and beta is None:
        out = np.full(n, math.inf)
        pos = g[:, 0] > 0
        out[pos] = float(curve.inverse_info(R)) / g[pos, 0]
        return out

    maps = _rate_maps(curve, beta)
    npos = np.sum(g > 0, axis=1)
    ceiling = maps.ceiling()
    with np.errstate(divide="ignore"):
        feasible = (npos > 0) & (R * B / np.maximum(npos, 1) < ceiling * (1 - 1e-12))
    if beta is not None and math.isfinite(beta):
        # exactly at the ceiling the cap is reachable with a finite level
        feasible |= (npos > 0) & (np.abs(R * B / np.maximum(npos, 1) - ceiling) <= 1e-12 * ceiling)
    out = np.full(n, math.inf)
    rows = np.flatnonzero(feasible)
    if rows.size == 0:
        return out
    lgf = lg[rows]
    finite_lg = np.where(np.isfinite(lgf), lgf, np.nan)
    lo = maps.u0 - np.nanmax(finite_lg, axis=1)
    if math.isfinite(maps.u_hi):
        hi = maps.u_hi - np.nanmin(finite_lg, axis=1)
    else:
        hi = lo + 1.0
        for _ in range(200):
            r = np.mean(maps.rate(hi[:, None] + lgf), axis=1)
            short = r < R
            if not short.any():
                break
            hi = np.where(short, hi + 2 * (hi - lo), hi)
    target = R * B

    x = 0.5 * (lo + hi)
    active = np.ones(rows.size, dtype=bool)
    for _ in range(200):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        u = x[idx, None] + lgf[idx]
        val, slope = maps.rate(u, with_slope=True)
        f = val.sum(axis=1) - target
        df = slope.sum(axis=1)
        up = f >= 0
        hi[idx] = np.where(up, x[idx], hi[idx])
        lo[idx] = np.where(up, lo[idx], x[idx])
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = x[idx] - f / df
        bad = ~np.isfinite(newton) | (newton <= lo[idx]) | (newton >= hi[idx])
        width = hi[idx] - lo[idx]
        done = (np.abs(f) <= 1e-13 * target) | (width <= 1e-14 * np.maximum(1.0, np.abs(x[idx])))
        # converged rows keep the evaluated point; a closed bracket keeps its upper end
        step = np.where(bad, 0.5 * (lo[idx] + hi[idx]), newton)
        x[idx] = np.where(done, np.where(np.abs(f) <= 1e-13 * target, x[idx], hi[idx]), step)
        active[idx[done]] = False
    u = x[:, None] + lgf
    snr = maps.snr(u)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(np.isfinite(lgf), snr / np.exp(lgf), 0.0)
    out[rows] = p.mean(axis=1)
    return out


# ----------------------------------------------------------------------------
# Monte Carlo samples of <p>
# ----------------------------------------------------------------------------

def _shard_sizes(n: int, shards: int) -> list[int]:
    base, extra = divmod(int(n), int(shards))
    return [base + (1 if k < extra else 0) for k in range(shards)]


def _shard_mean_power(curve, fading, R, beta, n, seed, stream, shard):
    gens = [gain_stream(seed, stream, shard, b) for b in range(fading.B)]
    out = np.empty(n)
    for lo in range(0, n, _CHUNK_ROWS):
        rows = min(_CHUNK_ROWS, n - lo)
        g = np.column_stack([gen.gamma(fading.m, 1.0 / fading.m, size=rows) for gen in gens])
        out[lo:lo + rows] = mean_min_power(curve, g, R, beta)
    return out


def sample_mean_power(curve: InfoCurve, fading: FadingSpec, R: float, n: int,
                      seed: int, beta: float | None = None, stream: int = OUTAGE_STREAM,
                      shards: int = 1, workers: int | None = None) -> np.ndarray:
    """Draw ``n`` channel realizations and return ``<p>`` for each.

    Shard ``k`` uses the random streams ``(seed, stream, k, b)``. The result
    depends on ``(seed, shards)`` only, never on ``workers``.
    """
    if n < 1:
        raise ValueError("need at least one draw")
    if shards < 1:
        raise ValueError("shards must be >= 1")
    # build tables once before threads share them
    if not (fading.B == 1 and beta is None) and R > 0:
        _rate_maps(curve, beta)
    sizes = _shard_sizes(n, shards)
    jobs = [(curve, fading, R, beta, sz, seed, stream, k) for k, sz in enumerate(sizes) if sz]
    if workers and workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _shard_mean_power(*a), jobs))
    else:
        parts = [_shard_mean_power(*a) for a in jobs]
    return np.concatenate(parts)


@dataclass
class MeanPowerSample:
    """Sorted sample of ``<p>`` with prefix sums for threshold queries."""

    values: np.ndarray
    seed: int | None = None
    sorted_values: np.ndarray = field(init=False, repr=False)
    prefix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        v = np.sort(np.asarray(self.values, dtype=float))
        self.sorted_values = v
        finite = v[np.isfinite(v)]
        self.prefix = np.concatenate([[0.0], np.cumsum(finite) / v.size])

    @property
    def n(self) -> int:
        return self.sorted_values.size

    @property
    def full_mean(self) -> float:
        """Sample estimate of ``E[<p>]``; ``inf`` if any draw is infeasible."""
        if self.prefix.size - 1 < self.n:
            return math.inf
        return float(self.prefix[-1])

    def silence_fraction(self, threshold: float) -> float:
        """Fraction of draws with ``<p> > threshold`` (ties transmit)."""
        k = np.searchsorted(self.sorted_values, threshold, side="right")
        return float(self.n - k) / self.n

    def silence_count(self, threshold: float) -> int:
        k = np.searchsorted(self.sorted_values, threshold, side="right")
        return int(self.n - k)

    def spent_power(self, threshold: float) -> float:
        """Sample ``E[<p> 1{<p> <= threshold}]``."""
        k = np.searchsorted(self.sorted_values, threshold, side="right")
        return float(self.prefix[min(k, self.prefix.size - 1)])

    def threshold(self, P_av: float, solved_for: str = "av") -> ThresholdS:
        """Solve ``E[<p> 1{<p> <= s}] = P_av`` on the sample."""
        if not P_av > 0:
            raise ValueError("P_av must be positive")
        pre = self.prefix
        v = self.sorted_values
        nfin = pre.size - 1
        if pre[-1] <= P_av and nfin == self.n:
            # the whole sample fits; heavy tails make this fragile
            top = v[-1] / self.n if self.n else 0.0
            borderline = pre[-1] > 0 and top > 0.01 * pre[-1]
            return ThresholdS(math.inf, solved_for, P_av, self.n, self.seed, borderline,
                              "sample mean below budget" + (
                                  "; largest draw dominates the mean" if borderline else ""))
        if pre[-1] <= P_av:
            # only infeasible draws remain: transmit on all feasible ones
            s = float(v[nfin - 1]) if nfin else math.nan
            return ThresholdS(max(s, np.nextafter(0, 1)), solved_for, P_av, self.n,
                              self.seed, True, "budget exceeds feasible draws")
        k = int(np.searchsorted(pre, P_av, side="right"))   # pre[k-1] <= P_av < pre[k]
        left = v[k - 2] if k >= 2 else 0.0
        right = v[k - 1]
        frac = (P_av - pre[k - 1]) / (pre[k] - pre[k - 1])
        s = float(left + frac * (right - left))
        if s >= right:
            # ties transmit, so s == right would admit the draw that breaks the budget
            s = float(np.nextafter(right, 0))
        s = max(s, np.nextafter(0, 1))
        low = (self.n - (k - 1)) < _MIN_TAIL_EVENTS
        return ThresholdS(s, solved_for, P_av, self.n, self.seed, low,
                          "few draws above threshold" if low else "")


def threshold_s(curve: InfoCurve, R: float, P_av: float, fading: FadingSpec,
                beta: float | None = None, n: int = DEFAULT_THRESHOLD_DRAWS,
                seed: int = 0, shards: int = 1) -> ThresholdS:
    """Average-power silence threshold from a fixed Monte Carlo sample.

    The sample uses its own random stream, independent of outage draws made
    with the same seed.
    """
    sample = MeanPowerSample(
        sample_mean_power(curve, fading, R, n, seed, beta, THRESHOLD_STREAM, shards), seed)
    return sample.threshold(P_av, "av" if beta is None else "tw")


# ----------------------------------------------------------------------------
# outage
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdPolicy:
    """Transmit the minimum-power vector iff ``<p> <= limit``.

    ``limit`` is ``P_peak`` (peak), ``s`` (average) or ``min(s, P_peak)``
    (PAPR). ``beta`` selects truncated water-filling.
    """

    curve: InfoCurve
    limit: float
    scheme: str = "papr"
    beta: float | None = None

    @classmethod
    def peak(cls, curve, P_peak, beta=None):
        return cls(curve, float(P_peak), "peak" if beta is None else "tw_peak", beta)

    @classmethod
    def av(cls, curve, s, beta=None):
        s = s.s if isinstance(s, ThresholdS) else float(s)
        return cls(curve, s, "av" if beta is None else "tw_av", beta)

    @classmethod
    def papr(cls, curve, budget: PowerBudget, s, beta=None):
        s = s.s if isinstance(s, ThresholdS) else float(s)
        return cls(curve, min(s, budget.P_peak), "papr" if beta is None else "tw_papr", beta)

    def transmit(self, gains: np.ndarray, R: float) -> np.ndarray:
        return mean_min_power(self.curve, gains, R, self.beta) <= self.limit

    def outage(self, gains: np.ndarray, R: float) -> np.ndarray:
        if R == 0:
            return np.zeros(np.shape(gains)[0], dtype=bool)
        return ~self.transmit(gains, R)


@dataclass(frozen=True)
class ZeroPolicy:
    """Never transmits."""

    scheme: str = "zero"

    def outage(self, gains: np.ndarray, R: float) -> np.ndarray:
        return np.full(np.shape(gains)[0], R > 0)


def outage_mc(policy, R: float, fading: FadingSpec, n: int, seed: int,
              shards: int = 1) -> OutageEstimate:
    """Fraction of ``n`` channel draws on which ``policy`` is in outage.

    ``policy`` needs an ``outage(gains, R) -> bool array`` method.
    """
    if n < 1:
        raise ValueError("need at least one draw")
    count = 0
    for k, sz in enumerate(_shard_sizes(n, shards)):
        gens = [gain_stream(seed, OUTAGE_STREAM, k, b) for b in range(fading.B)]
        for lo in range(0, sz, _CHUNK_ROWS):
            rows = min(_CHUNK_ROWS, sz - lo)
            g = np.column_stack([gen.gamma(fading.m, 1.0 / fading.m, size=rows)
                                 for gen in gens])
            count += int(np.count_nonzero(policy.outage(g, R)))
    p = count / n
    return OutageEstimate(p, n, ci95(p, n), R, getattr(policy, "scheme", "custom"),
                          P_peak=getattr(policy, "limit", math.inf),
                          threshold=getattr(policy, "limit", math.inf), m=fading.m,
                          B=fading.B, beta=getattr(policy, "beta", None), seed=seed)


def outage_sweep(curve: InfoCurve, R: float, fading: FadingSpec, P_av, PAPR: float = math.inf,
                 scheme: str = "papr", beta: float | None = None, n: int = 10**6,
                 seed: int = 0, threshold_n: int = DEFAULT_THRESHOLD_DRAWS,
                 shards: int = 1, workers: int | None = None) -> list[OutageEstimate]:
    """Outage versus average power for one scheme.

    ``scheme`` is ``"peak"``, ``"av"`` or ``"papr"``; ``beta`` switches to
    the truncated water-filling variant. For ``"peak"`` the peak budget is
    ``PAPR * P_av``. One outage sample and one threshold sample are drawn
    and shared by all sweep points.
    """
    if scheme not in ("peak", "av", "papr"):
        raise ValueError(f"unknown scheme {scheme!r}")
    P_av = np.atleast_1d(np.asarray(P_av, dtype=float))
    if np.any(P_av <= 0):
        raise ValueError("average powers must be positive")
    if not PAPR >= 1:
        raise ValueError("PAPR >= 1 required")
    if scheme == "peak" and not math.isfinite(PAPR):
        raise ValueError("peak scheme needs a finite PAPR (P_peak = PAPR * P_av)")
    tag = scheme if beta is None else f"tw_{scheme}"
    out_sample = MeanPowerSample(
        sample_mean_power(curve, fading, R, n, seed, beta, OUTAGE_STREAM, shards, workers), seed)
    thr_sample = None
    if scheme != "peak" and R > 0:
        thr_sample = MeanPowerSample(sample_mean_power(
            curve, fading, R, threshold_n, seed, beta, THRESHOLD_STREAM, shards, workers), seed)
    results = []
    for pav in P_av:
        peak = PAPR * pav
        low = False
        if R == 0:
            limit = math.inf
            s = math.inf
        elif scheme == "peak":
            limit = s = peak
        else:
            th = thr_sample.threshold(float(pav), "av" if beta is None else "tw")
            s = th.s
            low = th.low_confidence
            limit = s if scheme == "av" else min(s, peak)
        p = 0.0 if R == 0 else out_sample.silence_fraction(limit)
        results.append(OutageEstimate(p, n, ci95(p, n), R, tag, float(pav), peak, limit,
                                      fading.m, fading.B, beta, seed, low))
    return results


def outage_papr_decomposition(peak_curve, av_curve, PAPR_db: float):
    """Outage under a PAPR constraint from the peak-only and average-only curves.

    Parameters
    ----------
    peak_curve : (array_like, array_like)
        ``(P_peak_dB, outage)`` for the peak-constrained policy.
    av_curve : (array_like, array_like)
        ``(P_av_dB, outage)`` for the average-constrained policy.
    PAPR_db : float
        Shift applied to the peak curve.

    Returns
    -------
    (ndarray, ndarray)
        ``P_av_dB`` (the average curve's abscissa) and
        ``max(P_out_peak(P_av_dB + PAPR_db), P_out_av(P_av_dB))``.
    """
    xp, yp = (np.asarray(a, dtype=float) for a in peak_curve)
    xa, ya = (np.asarray(a, dtype=float) for a in av_curve)
    if np.any(np.diff(xp) <= 0) or np.any(np.diff(xa) <= 0):
        raise ValueError("power axes must be strictly increasing")
    shifted = xa + PAPR_db
    lo, hi = xp[0] - PAPR_db, xp[-1] - PAPR_db
    if shifted[0] < xp[0] - 1e-9 or shifted[-1] > xp[-1] + 1e-9:
        raise ValueError(
            f"peak curve covers P_av in [{lo:g}, {hi:g}] dB after the {PAPR_db:g} dB shift; "
            f"average curve spans [{xa[0]:g}, {xa[-1]:g}] dB")
    # interpolate in log-probability where both neighbours are positive
    with np.errstate(divide="ignore"):
        ly = np.log(yp)
    lin = np.interp(shifted, xp, yp)
    logi = np.exp(np.interp(shifted, xp, ly))
    both_pos = np.interp(shifted, xp, (yp > 0).astype(float)) == 1.0
    peak_vals = np.where(both_pos, logi, lin)
    return xa, np.maximum(peak_vals, ya)


# ----------------------------------------------------------------------------
# diversity
# ----------------------------------------------------------------------------

def singleton_diversity(B: int, M: int, R: float) -> int:
    """``1 + floor(B (1 - R/M))`` evaluated in exact arithmetic."""
    if not 0 < R < M:
        raise ValueError(f"need 0 < R < M, got R={R}, M={M}")
    return 1 + math.floor(Fraction(B) * (1 - Fraction(R) / Fraction(M)))


def tw_diversity(B: int, curve: InfoCurve, beta: float, R: float) -> int:
    """``1 + floor(B (1 - R / I(beta)))`` for truncated water-filling."""
    cap = float(curve.info(beta))
    if not 0 < R < cap:
        raise ValueError(f"need 0 < R < I(beta) = {cap:.6g}, got R={R}")
    return 1 + math.floor(B * (1 - R / cap) + 1e-12)


# ----------------------------------------------------------------------------
# B = 1 analytics
# ----------------------------------------------------------------------------

def _b1_spent(m: float, c: float, log_s: float) -> float:
    """``E[p 1{p <= s}]`` with ``p = c / gamma`` for a single block.

    Takes ``log s`` because for ``m <= 1`` the threshold grows like
    ``exp(P_av / c)`` and leaves the float range.
    """
    log_x = math.log(m * c) - log_s
    scale = c * m / math.gamma(m)
    if log_x > math.log(700.0):
        return 0.0
    if log_x > -700.0:
        return scale * upper_incomplete_gamma(m - 1.0, math.exp(log_x))
    # x below the float range: leading terms of Gamma(m-1, x) as x -> 0
    if m > 1:
        return scale * math.gamma(m - 1.0)
    if m == 1:
        return scale * (-EULER_GAMMA - log_x)
    a = m - 1.0
    if a * log_x > 700.0:
        return math.inf
    return scale * (math.gamma(a) - math.exp(a * log_x) / a)


def b1_log_threshold_s(curve: InfoCurve, fading: FadingSpec, R: float, P_av: float) -> float:
    """Natural log of :func:`b1_threshold_s`, finite wherever ``s`` is."""
    R = _check_rate(curve, R)
    if not P_av > 0:
        raise ValueError("P_av must be positive")
    m = fading.m
    c = float(curve.inverse_info(R))
    if c == 0:
        return math.inf
    if m > 1 and c * m / (m - 1) <= P_av:
        return math.inf

    def f(ls):
        return _b1_spent(m, c, ls) - P_av

    lo = math.log(c) - 1.0
    while f(lo) > 0:
        lo -= 5.0
    hi = lo + 1.0
    while f(hi) < 0:
        hi += max(2.0, 0.5 * (hi - lo))
        if hi > 1e300:
            raise ArithmeticError("could not bracket the B=1 threshold")
    return optimize.brentq(f, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)


def b1_threshold_s(curve: InfoCurve, fading: FadingSpec, R: float, P_av: float) -> float:
    """Exact silence threshold for ``B = 1``.

    Solves ``(m c / Gamma(m)) Gamma(m-1, m c / s) = P_av`` with
    ``c = I^{-1}(R)``; returns ``inf`` when ``E[c/gamma] <= P_av``. For
    ``m <= 1`` the root grows like ``exp(P_av / c)``; values beyond the
    float range come back as ``inf`` (see :func:`b1_log_threshold_s`).
    """
    ls = b1_log_threshold_s(curve, fading, R, P_av)
    return math.exp(ls) if ls < 709.0 else math.inf


def b1_threshold_P0(curve: InfoCurve, fading: FadingSpec, R: float, PAPR: float) -> float:
    """Average power above which the peak budget alone sets the outage (``B = 1``).

    Solves ``(m / Gamma(m)) a Gamma(m-1, m a / PAPR) = 1`` for
    ``a = I^{-1}(R) / P_0``. The left side rises from 0 and decays again, so
    there are two roots or none; the smaller ``a`` (larger ``P_0``) is the
    high-power crossover. Returns ``0.0`` when there is no root (the peak
    constraint binds at every ``P_av``) and ``inf`` when ``PAPR = inf`` and
    ``E[1/gamma]`` diverges.
    """
    R = _check_rate(curve, R)
    if not PAPR >= 1:
        raise ValueError("PAPR >= 1 required")
    m = fading.m
    c = float(curve.inverse_info(R))
    if not math.isfinite(PAPR):
        return c * m / (m - 1) if m > 1 else math.inf
    k = PAPR / math.gamma(m)

    def g(u):   # left side as a function of u = m a / PAPR
        return k * u * upper_incomplete_gamma(m - 1.0, u) - 1.0

    # stationary point: Gamma(m-1, u) = u^(m-1) e^-u
    def dg(lu):
        u = math.exp(lu)
        return upper_incomplete_gamma(m - 1.0, u) - u ** (m - 1.0) * math.exp(-u)

    u_star = math.exp(optimize.brentq(dg, -30.0, math.log(700.0), xtol=1e-14))
    if g(u_star) < 0:
        return 0.0
    lo = u_star
    while g(lo) >= 0:
        lo *= 0.5
        if lo < 1e-300:
            raise ArithmeticError("could not bracket the P0 equation")
    u = optimize.brentq(g, lo, u_star, xtol=1e-300, rtol=4 * np.finfo(float).eps)
    a = u * PAPR / m
    return c / a


def b1_outage_analytic(curve: InfoCurve, fading: FadingSpec, R: float,
                       budget: PowerBudget) -> float:
    """Outage of the optimal PAPR policy for ``B = 1`` in closed form.

    ``F_gamma(I^{-1}(R) / min(s, PAPR * P_av))``: for ``P_av > P_0`` this is
    the peak-power expression, for ``P_av < P_0`` the average-power one.
    """
    R = _check_rate(curve, R)
    if fading.B != 1:
        raise ValueError("closed-form outage needs B = 1")
    if R == 0:
        return 0.0
    c = float(curve.inverse_info(R))
    log_limit = min(b1_log_threshold_s(curve, fading, R, budget.P_av), math.log(budget.P_peak))
    if log_limit > 709.0:
        return 0.0
    return float(power_gain_cdf(fading, c * math.exp(-log_limit)))


def diversity_slope_fit(P_db, outage, window: tuple[float, float] | None = None,
                        n: int | None = None, min_events: int = 30) -> float:
    """High-power outage exponent from a least-squares line fit.

    Fits ``log10 P_out`` against ``P_dB / 10`` over ``window`` and returns
    the negated slope, comparable with ``m d(R)``. With ``n`` (Monte Carlo
    trials) points with fewer than ``min_events`` outage events are
    dropped.

    Raises
    ------
    ValueError
        Fewer than four usable points.
    """
    x = np.asarray(P_db, dtype=float)
    y = np.asarray(outage, dtype=float)
    keep = y > 0
    if window is not None:
        keep &= (x >= window[0]) & (x <= window[1])
    if n is not None:
        keep &= y >= min_events / n
    if np.count_nonzero(keep) < 4:
        raise ValueError(
            f"only {int(np.count_nonzero(keep))} reliable points in the fit window; need 4")
    slope = np.polyfit(x[keep] / 10.0, np.log10(y[keep]), 1)[0]
    return float(-slope)
