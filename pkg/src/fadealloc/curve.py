"""Tabulated, invertible information and MMSE curves.

An :class:`InfoCurve` stores ``I(rho)`` and ``MMSE(rho)`` on a knot grid for
one input model and interpolates between knots:

* ``I`` is a cubic Hermite spline whose knot slopes are ``MMSE / ln 2``;
* ``log MMSE`` is a PCHIP interpolant, so the MMSE stays monotone;
* beyond the last knot both continue with a matched exponential tail,
  ``M - I = D exp(-c (rho - rho_max))`` and ``MMSE = MMSE_max exp(-c ...)``
  with ``c = MMSE_max / (D ln 2)``, which keeps ``dI/drho = MMSE / ln 2``.

Gaussian inputs use the closed forms everywhere.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from .awgn_info import (DEFAULT_NODES, LN2, evaluate_model, gaussian_info,
                        gaussian_mmse)
from .constellation import LabeledConstellation

__all__ = [
    "InputModel",
    "InfoCurve",
    "UnachievableRateError",
    "build_curve",
    "get_curve",
    "cache_dir",
    "CACHE_ENV",
    "CURVE_FORMAT_VERSION",
]

log = logging.getLogger(__name__)

CACHE_ENV = "FADEALLOC_CACHE"
CURVE_FORMAT_VERSION = 1
DEFAULT_KNOTS = 200
RHO_MIN = 1e-3
# the last knot sits where M - I first drops below this
SATURATION_GAP = 1e-6
_BISECT_ITERS = 200


class UnachievableRateError(ValueError):
    """The requested rate is at or above the input entropy."""


@dataclass(frozen=True)
class InputModel:
    """Gaussian input, or coded modulation / BICM over a constellation."""

    kind: str
    constellation: LabeledConstellation | None = None

    def __post_init__(self) -> None:
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        if kind not in ("gaussian", "cm", "bicm"):
            raise ValueError(f"unknown input model {self.kind!r}")
        if kind != "gaussian" and self.constellation is None:
            raise ValueError(f"{kind} input needs a constellation")
        if kind == "gaussian" and self.constellation is not None:
            object.__setattr__(self, "constellation", None)

    @classmethod
    def gaussian(cls) -> "InputModel":
        return cls("gaussian")

    @classmethod
    def cm(cls, k: LabeledConstellation) -> "InputModel":
        return cls("cm", k)

    @classmethod
    def bicm(cls, k: LabeledConstellation) -> "InputModel":
        return cls("bicm", k)

    @property
    def max_info(self) -> float:
        return np.inf if self.kind == "gaussian" else float(self.constellation.M)

    @property
    def label(self) -> str:
        if self.kind == "gaussian":
            return "gaussian"
        return f"{self.kind}:{self.constellation.name}"

    def key(self, nodes: int) -> str:
        if self.kind == "gaussian":
            return "gaussian"
        return f"{self.kind}-{self.constellation.name}-{self.constellation.digest()}-n{nodes}"

    def evaluate(self, rho: float, nodes: int = DEFAULT_NODES) -> tuple[float, float]:
        """Exact ``(I in bits, MMSE)`` at one SNR from the quadrature engine."""
        if self.kind == "gaussian":
            return float(gaussian_info(rho)), float(gaussian_mmse(rho))
        return evaluate_model(self.constellation, rho, self.kind == "bicm", nodes)


def _local_poly(c: np.ndarray, seg: np.ndarray, dx: np.ndarray) -> np.ndarray:
    """Evaluate PPoly cubic pieces ``seg`` at offsets ``dx``."""
    return ((c[0, seg] * dx + c[1, seg]) * dx + c[2, seg]) * dx + c[3, seg]


def _bisect_pieces(c, x, seg, target, increasing):
    """Solve ``piece(x) = target`` inside each knot interval.

    Each piece is monotone, so a few bisection steps narrow the bracket and
    bracketed Newton steps finish the job.
    """
    lo = np.zeros_like(target)
    hi = x[seg + 1] - x[seg]
    sign = 1.0 if increasing else -1.0
    for _ in range(6):
        mid = 0.5 * (lo + hi)
        above = sign * (_local_poly(c, seg, mid) - target) >= 0
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    t = 0.5 * (lo + hi)
    for _ in range(_BISECT_ITERS):
        f = sign * (_local_poly(c, seg, t) - target)
        df = sign * ((3 * c[0, seg] * t + 2 * c[1, seg]) * t + c[2, seg])
        hi = np.where(f >= 0, t, hi)
        lo = np.where(f >= 0, lo, t)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = t - f / df
        inside = np.isfinite(step) & (step >= lo) & (step <= hi)
        new = np.where(inside, step, 0.5 * (lo + hi))
        moved = np.abs(new - t)
        t = new
        if np.all(moved <= 2e-15 * np.maximum(x[seg + 1], 1e-300)):
            break
    return x[seg] + t


class InfoCurve:
    """Interpolated ``rho -> I`` and ``rho -> MMSE`` maps for one input model.

    Parameters
    ----------
    model : InputModel
    grid : array_like
        Strictly increasing SNR knots starting at 0 (linear scale).
    info_values, mmse_values : array_like
        Mutual information in bits and MMSE at the knots.
    nodes : int
        Quadrature order the values were computed with (metadata).
    """

    def __init__(self, model: InputModel, grid, info_values, mmse_values,
                 nodes: int = DEFAULT_NODES) -> None:
        self.model = model
        self.nodes = int(nodes)
        self.grid = np.asarray(grid, dtype=float)
        self.info_values = np.asarray(info_values, dtype=float)
        self.mmse_values = np.asarray(mmse_values, dtype=float)
        self._validate()
        for a in (self.grid, self.info_values, self.mmse_values):
            a.setflags(write=False)
        if model.kind == "gaussian":
            return
        g, i, e = self.grid, self.info_values, self.mmse_values
        self._info_spline = CubicHermiteSpline(g, i, e / LN2)
        self._logmmse = PchipInterpolator(g, np.log(e))
        self.rho_max = float(g[-1])
        self._tail_gap = float(self.max_info - i[-1])
        self._tail_mmse = float(e[-1])
        self._tail_rate = (self._tail_mmse / (LN2 * self._tail_gap)
                           if self._tail_gap > 0 else np.inf)

    # -- construction helpers -------------------------------------------------
    def _validate(self) -> None:
        g, i, e = self.grid, self.info_values, self.mmse_values
        if not (g.ndim == i.ndim == e.ndim == 1 and g.size == i.size == e.size):
            raise ValueError("grid, info and mmse must be 1-D arrays of equal length")
        if g.size < 3 or g[0] != 0.0 or np.any(np.diff(g) <= 0):
            raise ValueError("grid must start at 0 and be strictly increasing")
        if np.any(np.diff(i) < 0):
            raise ValueError("info values are not nondecreasing")
        if np.any(np.diff(e) > 0):
            raise ValueError("mmse values are not nonincreasing")
        if i[0] != 0.0 or np.any(i < 0) or np.any(i > self.max_info):
            raise ValueError("info values outside [0, max_info] or I(0) != 0")
        if np.any(e <= 0) or np.any(e > 1.0 + 1e-12):
            raise ValueError("mmse values outside (0, 1]")

    @property
    def max_info(self) -> float:
        return self.model.max_info

    @property
    def mmse0(self) -> float:
        """``MMSE(0)``; the clamp value used by the mercury/water-filling rules."""
        return float(self.mmse_values[0])

    # -- forward maps --------------------------------------------------------
    def info(self, rho):
        """Interpolated mutual information (bits); vectorized."""
        r = np.asarray(rho, dtype=float)
        if np.any(r < 0):
            raise ValueError("SNR must be nonnegative")
        if self.model.kind == "gaussian":
            out = gaussian_info(r)
        else:
            out = np.empty_like(r)
            inside = r <= self.rho_max
            out[inside] = self._info_spline(r[inside])
            rt = r[~inside]
            out[~inside] = self.max_info - self._tail_gap * np.exp(
                -self._tail_rate * (rt - self.rho_max))
            np.clip(out, 0.0, self.max_info, out=out)
        return out[()] if out.ndim == 0 else out

    def mmse(self, rho):
        """Interpolated MMSE; vectorized."""
        r = np.asarray(rho, dtype=float)
        if np.any(r < 0):
            raise ValueError("SNR must be nonnegative")
        if self.model.kind == "gaussian":
            out = gaussian_mmse(r)
        else:
            out = np.empty_like(r)
            inside = r <= self.rho_max
            out[inside] = np.exp(self._logmmse(r[inside]))
            rt = r[~inside]
            out[~inside] = self._tail_mmse * np.exp(-self._tail_rate * (rt - self.rho_max))
        return out[()] if out.ndim == 0 else out

    # -- inverses -------------------------------------------------------------
    def inverse_info(self, R):
        """SNR at which the curve reaches rate ``R`` (bits).

        Raises
        ------
        UnachievableRateError
            If ``R >= max_info`` (discrete inputs saturate at ``M``).
        """
        r = np.asarray(R, dtype=float)
        if np.any(r < 0) or np.any(np.isnan(r)):
            raise ValueError("rate must be nonnegative")
        if np.any(r >= self.max_info):
            raise UnachievableRateError(
                f"rate {float(np.max(r))} is not below the input entropy {self.max_info}")
        if self.model.kind == "gaussian":
            out = np.expm1(r * LN2)
            return out[()] if out.ndim == 0 else out
        out = np.zeros_like(r)
        i = self.info_values
        mid = (r > 0) & (r <= i[-1])
        if np.any(mid):
            seg = np.clip(np.searchsorted(i, r[mid], side="left") - 1, 0, i.size - 2)
            out[mid] = _bisect_pieces(self._info_spline.c, self.grid, seg, r[mid], True)
        tail = r > i[-1]
        if np.any(tail):
            out[tail] = self.rho_max + np.log(
                self._tail_gap / (self.max_info - r[tail])) / self._tail_rate
        return out[()] if out.ndim == 0 else out

    def inverse_mmse(self, v):
        """SNR at which the MMSE equals ``v``; ``v >= MMSE(0)`` maps to 0.

        Raises
        ------
        ValueError
            If ``v <= 0`` (infinite SNR); callers clamp before inverting.
        """
        v = np.asarray(v, dtype=float)
        if np.any(~(v > 0)):
            raise ValueError("MMSE target must be positive")
        if self.model.kind == "gaussian":
            out = np.maximum(1.0 / v - 1.0, 0.0)
            return out[()] if out.ndim == 0 else out
        e = self.mmse_values
        out = np.zeros_like(v)
        mid = (v < e[0]) & (v >= e[-1])
        if np.any(mid):
            # decreasing knots: search on the reversed array
            pos = e.size - np.searchsorted(e[::-1], v[mid], side="right")
            seg = np.clip(pos - 1, 0, e.size - 2)
            out[mid] = _bisect_pieces(self._logmmse.c, self.grid, seg,
                                      np.log(v[mid]), False)
        tail = v < e[-1]
        if np.any(tail):
            out[tail] = self.rho_max + np.log(self._tail_mmse / v[tail]) / self._tail_rate
        return out[()] if out.ndim == 0 else out

    def saturated(self, v) -> np.ndarray:
        """True where ``inverse_mmse(v)`` lands in the extrapolated tail."""
        if self.model.kind == "gaussian":
            return np.zeros(np.shape(v), dtype=bool)
        return np.asarray(v) < self.mmse_values[-1]

    # -- serialization --------------------------------------------------------
    def to_dict(self) -> dict:
        k = self.model.constellation
        return {
            "format": "fadealloc-infocurve",
            "version": CURVE_FORMAT_VERSION,
            "model": self.model.kind,
            "constellation": None if k is None else k.to_dict(),
            "constellation_hash": None if k is None else k.digest(),
            "quadrature_nodes": self.nodes,
            "grid": self.grid.tolist(),
            "info": self.info_values.tolist(),
            "mmse": self.mmse_values.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InfoCurve":
        if data.get("format") != "fadealloc-infocurve":
            raise ValueError("not an info-curve file")
        if data.get("version") != CURVE_FORMAT_VERSION:
            raise ValueError(f"unsupported curve format version {data.get('version')}")
        k = None
        if data["constellation"] is not None:
            c = data["constellation"]
            k = LabeledConstellation(np.array([complex(a, b) for a, b in c["points"]]),
                                     c["labels"], c["name"])
            if k.digest() != data["constellation_hash"]:
                raise ValueError("constellation hash mismatch in curve file")
        return cls(InputModel(data["model"], k), data["grid"], data["info"],
                   data["mmse"], data["quadrature_nodes"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "InfoCurve":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def digest(self) -> str:
        import hashlib
        h = hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode())
        return h.hexdigest()[:16]

    def __repr__(self) -> str:
        return f"InfoCurve({self.model.label}, knots={self.grid.size}, nodes={self.nodes})"


def cache_dir() -> Path | None:
    """Curve cache directory from ``$FADEALLOC_CACHE``; empty string disables."""
    env = os.environ.get(CACHE_ENV)
    if env is None:
        return Path.home() / ".cache" / "fadealloc"
    return Path(env) if env else None


def _find_rho_max(model: InputModel, nodes: int) -> float:
    rho = 10.0
    for _ in range(200):
        info, _ = model.evaluate(rho, nodes)
        if model.max_info - info <= SATURATION_GAP:
            return rho
        rho *= 1.25
    raise ArithmeticError(f"{model.label}: information never saturates (rho={rho:g})")


def build_curve(model: InputModel, knots: int = DEFAULT_KNOTS,
                nodes: int = DEFAULT_NODES, rho_max: float | None = None) -> InfoCurve:
    """Tabulate ``I`` and ``MMSE`` for ``model``.

    The grid is ``0`` plus ``knots`` log-spaced SNRs on ``[1e-3, rho_max]``.
    For discrete inputs ``rho_max`` defaults to the first SNR (on a
    geometric search) where ``M - I <= 1e-6``.
    """
    if model.kind == "gaussian":
        hi = 1e6 if rho_max is None else rho_max
        grid = np.concatenate([[0.0], np.logspace(np.log10(RHO_MIN), np.log10(hi), knots)])
        return InfoCurve(model, grid, gaussian_info(grid), gaussian_mmse(grid), nodes)
    if rho_max is None:
        rho_max = _find_rho_max(model, nodes)
    grid = np.concatenate([[0.0], np.logspace(np.log10(RHO_MIN), np.log10(rho_max), knots)])
    vals = np.array([model.evaluate(r, nodes) for r in grid])
    info, mmse = vals[:, 0], vals[:, 1]
    # quadrature jitter can break monotonicity by a few ulps at high SNR
    fixed_i = np.maximum.accumulate(info)
    fixed_e = np.minimum.accumulate(mmse)
    drift = max(np.max(fixed_i - info), np.max(mmse - fixed_e))
    if drift > 1e-9:
        raise ArithmeticError(
            f"{model.label}: quadrature values not monotone (drift {drift:.2e}); "
            f"increase the node count above {nodes}")
    return InfoCurve(model, grid, fixed_i, fixed_e, nodes)


_MEMO: dict[tuple, InfoCurve] = {}


def get_curve(model: InputModel, knots: int = DEFAULT_KNOTS,
              nodes: int = DEFAULT_NODES, use_cache: bool = True) -> InfoCurve:
    """Build a curve or fetch it from memory / the on-disk cache."""
    key = (model.key(nodes), knots)
    if key in _MEMO:
        return _MEMO[key]
    directory = cache_dir() if use_cache else None
    path = None
    if directory is not None and model.kind != "gaussian":
        path = directory / f"{model.key(nodes)}-k{knots}.json"
        if path.exists():
            try:
                curve = InfoCurve.load(path)
                _MEMO[key] = curve
                return curve
            except (ValueError, KeyError, json.JSONDecodeError) as exc:
                log.warning("ignoring bad curve cache %s: %s", path, exc)
    curve = build_curve(model, knots, nodes)
    if path is not None:
        try:
            directory.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            curve.save(tmp)
            tmp.replace(path)
        except OSError as exc:
            log.warning("could not write curve cache %s: %s", path, exc)
    _MEMO[key] = curve
    return curve
