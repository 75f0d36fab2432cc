"""Ergodic-capacity power allocation over i.i.d. Nakagami-m fading.

Policies map the power gain ``gamma`` to a transmit power ``p(gamma)`` and
meet the average budget ``E[p] = P_av``:

* ``opt``:      mercury/water-filling, ``p = MMSE^{-1}(min(MMSE(0), eta/gamma)) / gamma``;
* ``tw``:       truncated water-filling, ``p = min(beta/gamma, (eta - 1/gamma)_+)``;
* ``papr_opt``: ``min(P_peak, mercury/water-filling)``;
* ``papr_tw``:  ``min(P_peak, beta/gamma, (eta - 1/gamma)_+)``;
* ``uniform``:  ``p = P_av``.

For the mercury forms ``eta`` is the dual variable (``E[p]`` falls as it
grows); for the truncated forms it is the water level (``E[p]`` rises).

Expectations over ``gamma`` use adaptive Gauss-Legendre in ``t = gamma^m``,
where the Gamma density is smooth even for ``m < 1``, with panels split at
every kink of the policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .curve import InfoCurve
from .delay_limited import PowerBudget
from .fading import FadingSpec, power_gain_sf

__all__ = [
    "ErgodicPolicy",
    "CapacityPoint",
    "BetaChoice",
    "QuadratureError",
    "expectation",
    "mercury_waterfill",
    "tw_waterfill",
    "papr_opt_waterfill",
    "papr_tw_waterfill",
    "uniform_policy",
    "make_policy",
    "capacity_of_policy",
    "segmented_tw_capacity",
    "optimize_beta",
    "kkt_residual",
    "jensen_bound",
    "rayleigh_waterfill_closed_form",
]

POLICY_KINDS = ("opt", "tw", "papr_opt", "papr_tw", "uniform")
TAIL_MASS = 1e-13
BUDGET_RTOL = 1e-10
_GL_ORDER = 20
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_ORDER)
_MAX_PANELS = 20_000


class QuadratureError(ArithmeticError):
    """Adaptive quadrature failed to reach its tolerance."""


# ----------------------------------------------------------------------------
# quadrature over the gain distribution
# ----------------------------------------------------------------------------

def _gamma_hi(fading: FadingSpec) -> float:
    return float(special.gammainccinv(fading.m, TAIL_MASS) / fading.m)


def _adaptive_gl(f, edges, tol: float, rtol: float = 0.0) -> tuple[float, float]:
    """Integrate ``f`` over consecutive panels given by ``edges``.

    Each panel is compared against its two halves and split until the
    difference is below its share of ``max(tol, rtol * |integral|)``.
    Panels spanning more than a factor 4 are split geometrically, so
    integrands living on many decades are resolved quickly. Returns
    ``(value, error)``.
    """
    edges = np.asarray(edges, dtype=float)
    span = edges[-1] - edges[0]
    if span <= 0:
        return 0.0, 0.0
    a = edges[:-1]
    b = edges[1:]
    keep = b > a
    a, b = a[keep], b[keep]
    total = 0.0
    err = 0.0
    for _ in range(200):
        with np.errstate(invalid="ignore"):
            geo = (a > 0) & (b > 4 * a)
            mid = np.where(geo, np.sqrt(a * b), 0.5 * (a + b))
        # whole panel and its two halves in one evaluation
        lefts = np.concatenate([a, a, mid])
        rights = np.concatenate([b, mid, b])
        halves = 0.5 * (rights - lefts)
        x = (lefts + halves)[:, None] + halves[:, None] * _GL_X
        vals = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
        q = halves * (vals @ _GL_W)
        k = a.size
        whole, split = q[:k], q[k:2 * k] + q[2 * k:]
        diff = np.abs(whole - split)
        budget = max(tol, rtol * abs(total + float(np.sum(split))))
        share = np.maximum((b - a) / span, 1e-3)
        ok = (diff <= budget * share) | (b - a <= 1e-15 * np.maximum(np.abs(b), 1e-300))
        total += float(np.sum(split[ok]))
        err += float(np.sum(diff[ok]))
        if ok.all():
            return total, err
        a, b, mid = a[~ok], b[~ok], mid[~ok]
        a, b = np.concatenate([a, mid]), np.concatenate([mid, b])
        if a.size > _MAX_PANELS:
            break
    raise QuadratureError(f"adaptive quadrature did not reach tolerance {tol:g}")


def expectation(h, fading: FadingSpec, breakpoints=(), tol: float = 1e-13,
                with_error: bool = False, rtol: float = 1e-13):
    """``E[h(gamma)]`` for a vectorized ``h`` with kinks at ``breakpoints``.

    The integral runs in ``t = gamma^m`` up to the ``1 - 1e-13`` quantile;
    the remaining tail is approximated by ``h(gamma_hi) * P(gamma > gamma_hi)``.
    The error target is ``max(tol, rtol * |E[h]|)``.
    """
    m = fading.m
    g_hi = _gamma_hi(fading)
    inv_m = 1.0 / m
    coef = math.exp((m - 1.0) * math.log(m) - math.lgamma(m))

    def integrand(t):
        g = t ** inv_m
        return h(g) * coef * np.exp(-m * g)

    pts = sorted({float(x) for x in breakpoints if 0 < x < g_hi and math.isfinite(x)})
    edges = [0.0] + [x**m for x in pts] + [g_hi**m]
    val, err = _adaptive_gl(integrand, edges, tol, rtol)
    tail = float(np.asarray(h(np.array([g_hi])))[0]) * float(power_gain_sf(fading, g_hi))
    val += tail
    err += abs(tail)
    return (val, err) if with_error else val


# ----------------------------------------------------------------------------
# policies
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ErgodicPolicy:
    """Power profile ``p(gamma)`` with its water level and budget.

    ``saturated`` marks truncated policies whose every SNR is already at its
    cap; they spend less than ``P_av`` and ``eta`` is ``inf``.
    """

    kind: str
    eta: float
    budget: PowerBudget
    curve: InfoCurve = field(repr=False, compare=False)
    fading: FadingSpec = field(default_factory=FadingSpec)
    beta: float | None = None
    saturated: bool = False

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")

    @property
    def P_av(self) -> float:
        return self.budget.P_av

    @property
    def P_peak(self) -> float:
        return self.budget.P_peak

    def _mercury(self, g: np.ndarray) -> np.ndarray:
        p = np.zeros_like(g)
        pos = g > 0
        if not math.isfinite(self.eta):
            return p
        if self.eta == 0:
            # limit of a vanishing dual variable: unbounded power, capped by the caller
            p[pos] = math.inf
            return p
        v = np.minimum(self.curve.mmse0, self.eta / g[pos])
        p[pos] = self.curve.inverse_mmse(v) / g[pos]
        return p

    def _truncated(self, g: np.ndarray) -> np.ndarray:
        beta = math.inf if self.beta is None else self.beta
        with np.errstate(divide="ignore"):
            cap = beta / g
            if math.isinf(self.eta):
                return np.where(g > 0, cap, 0.0)
            level = np.maximum(self.eta - 1.0 / g, 0.0)
        return np.where(g > 0, np.minimum(cap, level), 0.0)

    def power(self, gamma) -> np.ndarray:
        """Transmit power at gain ``gamma`` (vectorized)."""
        g = np.asarray(gamma, dtype=float)
        scalar = g.ndim == 0
        g = np.atleast_1d(g)
        if self.kind == "uniform":
            p = np.full_like(g, self.P_av)
        elif self.kind == "opt":
            p = self._mercury(g)
        elif self.kind == "papr_opt":
            p = np.minimum(self.P_peak, self._mercury(g))
        elif self.kind == "tw":
            p = self._truncated(g)
        else:
            p = np.minimum(self.P_peak, self._truncated(g))
        return p[0] if scalar else p

    def snr(self, gamma) -> np.ndarray:
        return self.power(gamma) * np.asarray(gamma, dtype=float)

    def breakpoints(self) -> list[float]:
        """Gains at which ``p(gamma)`` has a kink."""
        eta = self.eta
        if self.kind == "uniform" or not math.isfinite(eta) or eta <= 0:
            out = []
            if self.kind in ("tw", "papr_tw") and self.beta is not None:
                out.append(self.beta / self.P_peak)
            return out
        if self.kind in ("opt", "papr_opt"):
            out = [eta / self.curve.mmse0]
            if self.kind == "papr_opt":
                out += _mercury_peak_crossings(self)
            return out
        beta = math.inf if self.beta is None else self.beta
        out = [1.0 / eta, (beta + 1.0) / eta]
        if self.kind == "papr_tw":
            if eta > self.P_peak:
                out.append(1.0 / (eta - self.P_peak))
            out.append(beta / self.P_peak)
        return [x for x in out if math.isfinite(x)]

    def mean_power(self, with_error: bool = False):
        return expectation(self.power, self.fading, self.breakpoints(), with_error=with_error)

    def describe(self) -> str:
        if self.beta is None:
            return self.kind
        return f"{self.kind}(beta={10 * math.log10(self.beta):.4g}dB)" \
            if math.isfinite(self.beta) else f"{self.kind}(beta=inf)"


def _mercury_peak_crossings(policy: ErgodicPolicy) -> list[float]:
    """Gains where the uncapped mercury power crosses ``P_peak``."""
    bare = ErgodicPolicy("opt", policy.eta, policy.budget, policy.curve, policy.fading)
    lo = policy.eta / policy.curve.mmse0
    hi = max(_gamma_hi(policy.fading), 2 * lo)
    g = np.geomspace(lo * (1 + 1e-12), hi, 400)
    d = bare.power(g) - policy.P_peak
    out = []
    for i in np.flatnonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0):
        out.append(optimize.brentq(lambda x: bare.power(x) - policy.P_peak, g[i], g[i + 1],
                                   xtol=1e-14, rtol=4 * np.finfo(float).eps))
    return out


@dataclass(frozen=True)
class CapacityPoint:
    """Ergodic capacity of one policy at one average power."""

    P_av: float
    C: float
    policy: ErgodicPolicy
    quad_err: float

    @property
    def P_av_db(self) -> float:
        return 10 * math.log10(self.P_av)


def _check_budget(P_av) -> PowerBudget:
    if isinstance(P_av, PowerBudget):
        return P_av
    return PowerBudget(float(P_av))


def _solve_level(residual, increasing: bool, what: str) -> float:
    """Root of a monotone residual in ``log eta``; returns ``eta``."""
    sign = 1.0 if increasing else -1.0

    def f(lam):
        return sign * residual(lam)

    lo, hi = -1.0, 1.0
    flo, fhi = f(lo), f(hi)
    for _ in range(200):
        if flo <= 0 <= fhi:
            break
        if flo > 0:
            hi, fhi = lo, flo
            lo -= 2.0 * (hi - lo) if hi > lo else 2.0
            flo = f(lo)
        else:
            lo, flo = hi, fhi
            hi += 2.0 * max(hi - lo, 1.0)
            fhi = f(hi)
    else:
        raise ArithmeticError(f"could not bracket the {what} water level")
    if not flo <= fhi:
        raise ArithmeticError(f"{what} budget residual is not monotone on the bracket")
    lam = optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=400)
    return math.exp(lam)


def _finish(policy: ErgodicPolicy) -> ErgodicPolicy:
    spent = policy.mean_power()
    if not policy.saturated and abs(spent - policy.P_av) > 1e-6 * policy.P_av:
        raise ArithmeticError(
            f"{policy.kind} policy spends {spent:.10g} instead of {policy.P_av:.10g}")
    return policy


def uniform_policy(curve: InfoCurve, fading: FadingSpec, P_av) -> ErgodicPolicy:
    """Constant power ``P_av`` on every gain."""
    return ErgodicPolicy("uniform", math.nan, _check_budget(P_av), curve, fading)


def mercury_waterfill(curve: InfoCurve, fading: FadingSpec, P_av) -> ErgodicPolicy:
    """Capacity-optimal average-power policy (mercury/water-filling).

    ``E[p]`` decreases in ``eta``; the level is found by bracketing and
    Brent's method on ``log eta``.
    """
    budget = _check_budget(P_av)
    budget = PowerBudget(budget.P_av)

    def residual(lam):
        pol = ErgodicPolicy("opt", math.exp(lam), budget, curve, fading)
        return pol.mean_power() / budget.P_av - 1.0

    eta = _solve_level(residual, increasing=False, what="mercury")
    return _finish(ErgodicPolicy("opt", eta, budget, curve, fading))


def _check_beta(beta) -> float:
    beta = float(beta)
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return beta


def _tw_limit_power(fading: FadingSpec, beta: float, P_peak: float) -> float:
    """``E[min(P_peak, beta/gamma)]``, the spend of a fully saturated policy."""
    m = fading.m
    if math.isinf(P_peak):
        if math.isinf(beta):
            return math.inf
        return beta * m / (m - 1.0) if m > 1 else math.inf
    if math.isinf(beta):
        return P_peak
    b = beta / P_peak
    # P_peak F(b) + beta E[1/gamma; gamma > b]
    low = P_peak * float(special.gammainc(m, m * b))
    if m <= 1:
        return math.inf if b == 0 else low + beta * m * _upper_inverse_moment(m, m * b)
    return low + beta * m * _upper_inverse_moment(m, m * b)


def _upper_inverse_moment(m: float, x: float) -> float:
    """``Gamma(m-1, x) / Gamma(m)``, so that ``E[1/gamma; gamma > b] = m * this``."""
    from .fading import upper_incomplete_gamma
    return upper_incomplete_gamma(m - 1.0, x) / math.gamma(m)


def tw_waterfill(curve: InfoCurve, fading: FadingSpec, P_av, beta: float) -> ErgodicPolicy:
    """Truncated water-filling ``p = min(beta/gamma, (eta - 1/gamma)_+)``.

    When even the fully capped profile ``beta/gamma`` cannot spend ``P_av``
    the policy is returned saturated with ``eta = inf``.
    """
    budget = PowerBudget(_check_budget(P_av).P_av)
    beta = _check_beta(beta)
    limit = _tw_limit_power(fading, beta, math.inf)
    if limit <= budget.P_av:
        return ErgodicPolicy("tw", math.inf, budget, curve, fading, beta, saturated=True)

    def residual(lam):
        pol = ErgodicPolicy("tw", math.exp(lam), budget, curve, fading, beta)
        return pol.mean_power() / budget.P_av - 1.0

    eta = _solve_level(residual, increasing=True, what="truncated")
    return _finish(ErgodicPolicy("tw", eta, budget, curve, fading, beta))


def papr_opt_waterfill(curve: InfoCurve, fading: FadingSpec, budget: PowerBudget
                       ) -> ErgodicPolicy:
    """``min(P_peak, mercury/water-filling)`` meeting ``E[p] = P_av``.

    With ``PAPR = 1`` the profile is the constant ``P_av`` and is returned
    directly.
    """
    if budget.PAPR == 1.0:
        return ErgodicPolicy("papr_opt", 0.0, budget, curve, fading)
    if math.isinf(budget.PAPR):
        pol = mercury_waterfill(curve, fading, budget.P_av)
        return ErgodicPolicy("papr_opt", pol.eta, budget, curve, fading)

    def residual(lam):
        pol = ErgodicPolicy("papr_opt", math.exp(lam), budget, curve, fading)
        return pol.mean_power() / budget.P_av - 1.0

    eta = _solve_level(residual, increasing=False, what="peak-limited mercury")
    return _finish(ErgodicPolicy("papr_opt", eta, budget, curve, fading))


def papr_tw_waterfill(curve: InfoCurve, fading: FadingSpec, budget: PowerBudget,
                      beta: float) -> ErgodicPolicy:
    """``min(P_peak, beta/gamma, (eta - 1/gamma)_+)`` meeting ``E[p] = P_av``.

    If the average-only truncated solution never exceeds ``P_peak`` (its
    maximum ``eta beta / (beta + 1)`` is within the peak budget), it is
    already optimal and its level is reused unchanged.
    """
    beta = _check_beta(beta)
    if budget.PAPR == 1.0 and math.isinf(beta):
        # the peak cap binds on every gain: constant power
        return ErgodicPolicy("papr_tw", math.inf, budget, curve, fading, beta)
    base = tw_waterfill(curve, fading, budget.P_av, beta)
    top = base.eta if math.isinf(beta) else base.eta * beta / (beta + 1.0)
    if not base.saturated and top <= budget.P_peak:
        return ErgodicPolicy("papr_tw", base.eta, budget, curve, fading, beta)
    if _tw_limit_power(fading, beta, budget.P_peak) <= budget.P_av:
        return ErgodicPolicy("papr_tw", math.inf, budget, curve, fading, beta, saturated=True)

    def residual(lam):
        pol = ErgodicPolicy("papr_tw", math.exp(lam), budget, curve, fading, beta)
        return pol.mean_power() / budget.P_av - 1.0

    eta = _solve_level(residual, increasing=True, what="peak-limited truncated")
    return _finish(ErgodicPolicy("papr_tw", eta, budget, curve, fading, beta))


def make_policy(kind: str, curve: InfoCurve, fading: FadingSpec, budget: PowerBudget,
                beta: float | None = None) -> ErgodicPolicy:
    """Dispatch on ``kind``; average-only kinds ignore ``budget.PAPR``."""
    if kind == "uniform":
        return uniform_policy(curve, fading, budget)
    if kind == "opt":
        return mercury_waterfill(curve, fading, budget.P_av)
    if kind == "papr_opt":
        return papr_opt_waterfill(curve, fading, budget)
    if beta is None:
        raise ValueError(f"policy {kind!r} needs beta")
    if kind == "tw":
        return tw_waterfill(curve, fading, budget.P_av, beta)
    if kind == "papr_tw":
        return papr_tw_waterfill(curve, fading, budget, beta)
    raise ValueError(f"unknown policy kind {kind!r}")


# ----------------------------------------------------------------------------
# capacity
# ----------------------------------------------------------------------------

def capacity_of_policy(policy: ErgodicPolicy, tol: float = 1e-10) -> CapacityPoint:
    """``E[I(p(gamma) gamma)]`` in bits by kink-split adaptive quadrature.

    The tail beyond the ``1 - 1e-13`` quantile contributes at most
    ``M * 1e-13`` bits and is included in ``quad_err``.
    """
    curve = policy.curve

    def h(g):
        return curve.info(policy.snr(g))

    C, err = expectation(h, policy.fading, policy.breakpoints(), tol=tol, with_error=True)
    if err > 1e-6:
        raise QuadratureError(f"capacity quadrature error {err:.3g} bits exceeds 1e-6")
    C = min(max(C, 0.0), curve.max_info)
    return CapacityPoint(policy.P_av, C, policy, err)


def segmented_tw_capacity(policy: ErgodicPolicy) -> float:
    """Truncated-policy capacity as a sum over its linear pieces.

    Average-only::

        int_{1/eta}^{(beta+1)/eta} I(eta g - 1) dF + I(beta) (1 - F((beta+1)/eta))

    With a peak budget and ``1/eta < a < b``, ``a = 1/(eta - P_peak)``,
    ``b = beta / P_peak``::

        int_{1/eta}^{a} I(eta g - 1) dF + int_a^b I(P_peak g) dF + I(beta) (1 - F(b))

    Serves as an independent check of :func:`capacity_of_policy`.
    """
    if policy.kind not in ("tw", "papr_tw"):
        raise ValueError("segmented form applies to truncated policies only")
    curve, fading = policy.curve, policy.fading
    eta = policy.eta
    beta = math.inf if policy.beta is None else policy.beta
    I_beta = curve.max_info if math.isinf(beta) else float(curve.info(beta))
    P = policy.P_peak

    def piece(func, lo, hi):
        if not hi > lo:
            return 0.0

        def h(g):
            inside = (g >= lo) & (g <= hi)
            return np.where(inside, func(np.clip(g, lo, hi)), 0.0)
        return expectation(h, fading, [lo, hi])

    def water(g):
        return curve.info(np.maximum(eta * g - 1.0, 0.0))

    if policy.saturated:
        if policy.kind == "tw":
            return I_beta
        b = beta / P
        return piece(lambda g: curve.info(P * g), 0.0, b) + I_beta * float(power_gain_sf(fading, b))
    if policy.kind == "papr_tw" and not math.isfinite(policy.budget.PAPR):
        pass
    elif policy.kind == "papr_tw" and eta > P and (beta + 1) * (eta - P) > eta:
        a = 1.0 / (eta - P)
        b = beta / P
        if not 1.0 / eta < a < b:
            raise ArithmeticError(f"breakpoints out of order: 1/eta={1 / eta}, a={a}, b={b}")
        tail = 0.0 if math.isinf(b) else I_beta * float(power_gain_sf(fading, b))
        return (piece(water, 1.0 / eta, a)
                + piece(lambda g: curve.info(P * g), a, b if math.isfinite(b) else np.inf)
                + tail)
    top = (beta + 1.0) / eta
    tail = 0.0 if math.isinf(top) else I_beta * float(power_gain_sf(fading, top))
    return piece(water, 1.0 / eta, top) + tail


@dataclass(frozen=True)
class BetaChoice:
    """Best SNR cap on a grid and the capacities it was chosen from."""

    beta: float
    point: CapacityPoint
    grid: tuple[float, ...]
    capacities: tuple[float, ...]


def optimize_beta(curve: InfoCurve, fading: FadingSpec, budget, betas) -> BetaChoice:
    """Grid search over the SNR cap of the truncated policy.

    Uses ``papr_tw`` when ``budget`` has a finite PAPR and ``tw`` otherwise.
    Ties go to the smaller ``beta``.
    """
    budget = _check_budget(budget)
    grid = sorted(float(b) for b in betas)
    if not grid:
        raise ValueError("beta grid is empty")
    kind = "tw" if math.isinf(budget.PAPR) else "papr_tw"
    best = None
    caps = []
    for beta in grid:
        pt = capacity_of_policy(make_policy(kind, curve, fading, budget, beta))
        caps.append(pt.C)
        if best is None or pt.C > best.C:
            best = pt
    return BetaChoice(best.policy.beta, best, tuple(grid), tuple(caps))


# ----------------------------------------------------------------------------
# diagnostics and oracles
# ----------------------------------------------------------------------------

def kkt_residual(policy: ErgodicPolicy, gamma) -> np.ndarray:
    """``gamma MMSE(p gamma) - eta`` where ``0 < p < P_peak``, else 0."""
    if policy.kind not in ("opt", "papr_opt"):
        raise ValueError("KKT residual is defined for the mercury policies")
    g = np.asarray(gamma, dtype=float)
    p = policy.power(g)
    inner = (p > 0) & (p < policy.P_peak * (1 - 1e-12))
    res = g * policy.curve.mmse(p * g) - policy.eta
    return np.where(inner, res, 0.0)


def jensen_bound(policy: ErgodicPolicy) -> float:
    """``I(E[p gamma])``, an upper bound on the policy's capacity (concavity)."""
    mean_snr = expectation(policy.snr, policy.fading, policy.breakpoints())
    return float(policy.curve.info(mean_snr))


def rayleigh_waterfill_closed_form(P_av: float) -> tuple[float, float]:
    """Gaussian-input water-filling on Rayleigh fading, in closed form.

    With cutoff ``g0 = 1/level``, ``E[p] = e^{-g0}/g0 - E1(g0)`` and
    ``C = E1(g0) / ln 2``. Returns ``(C_bits, level)``.
    """
    from .fading import exp1

    def spent(lg0):
        g0 = math.exp(lg0)
        return math.exp(-g0) / g0 - exp1(g0) - P_av

    lg0 = optimize.brentq(spent, -40.0, math.log(700.0), xtol=1e-15,
                          rtol=4 * np.finfo(float).eps)
    g0 = math.exp(lg0)
    return exp1(g0) / math.log(2.0), 1.0 / g0
