"""Labeled signal constellations and their bit subsets.

A constellation is a set of ``2**M`` complex points, each carrying an
``M``-bit label. Points are normalized to unit average energy at
construction.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "LabeledConstellation",
    "BitSubset",
    "ConstellationError",
    "make_psk",
    "make_qam",
    "bit_subset",
    "gray_code",
    "builtin",
    "load_constellation",
    "save_constellation",
]

ENERGY_TOL = 1e-12


class ConstellationError(ValueError):
    """Raised when a constellation violates its invariants."""


def gray_code(n: int) -> int:
    """Binary-reflected Gray code of ``n``."""
    return n ^ (n >> 1)


@dataclass(frozen=True)
class LabeledConstellation:
    """Complex signal set with one bit label per point.

    Parameters
    ----------
    points : array_like of complex
        Constellation points. Rescaled to unit average energy.
    labels : sequence of str
        One ``M``-character string of ``'0'``/``'1'`` per point.
    name : str
        Identifier used in reports and cache keys.
    """

    points: np.ndarray
    labels: tuple[str, ...]
    name: str = "custom"
    bits_per_symbol: int = field(init=False)

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=complex).ravel()
        labels = tuple(str(s) for s in self.labels)
        if pts.size < 2:
            raise ConstellationError("constellation needs at least two points")
        m = int(round(np.log2(pts.size)))
        if 2**m != pts.size:
            raise ConstellationError(f"size {pts.size} is not a power of two")
        if len(labels) != pts.size:
            raise ConstellationError(
                f"{len(labels)} labels given for {pts.size} points")
        for lab in labels:
            if len(lab) != m or set(lab) - {"0", "1"}:
                raise ConstellationError(f"label {lab!r} is not an {m}-bit string")
        if len(set(labels)) != len(labels):
            raise ConstellationError("labels are not a bijection onto {0,1}^M")

        energy = np.mean(np.abs(pts) ** 2)
        if energy <= 0:
            raise ConstellationError("constellation has zero energy")
        pts = pts / np.sqrt(energy)
        if abs(np.mean(np.abs(pts) ** 2) - 1.0) > ENERGY_TOL:
            raise ConstellationError("energy normalization failed")
        # exact uniqueness on the (re, im) pairs
        pairs = {(float(z.real), float(z.imag)) for z in pts}
        if len(pairs) != pts.size:
            raise ConstellationError("two constellation points coincide")

        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "bits_per_symbol", m)

    @property
    def M(self) -> int:
        return self.bits_per_symbol

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def bits(self) -> np.ndarray:
        """``(2**M, M)`` integer array of label bits, position 1 first."""
        return np.array([[int(b) for b in lab] for lab in self.labels], dtype=np.int8)

    def digest(self) -> str:
        """Stable hash of the points and labels, used as a cache key."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.points).tobytes())
        h.update(",".join(self.labels).encode())
        return h.hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "M": self.M,
            "points": [[float(z.real), float(z.imag)] for z in self.points],
            "labels": list(self.labels),
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabeledConstellation):
            return NotImplemented
        return (self.labels == other.labels
                and np.array_equal(self.points, other.points))

    def __hash__(self) -> int:
        return hash(self.digest())

    def __repr__(self) -> str:
        return f"LabeledConstellation(name={self.name!r}, M={self.M})"


@dataclass(frozen=True)
class BitSubset:
    """Indices of the points whose label has bit ``value`` at ``position``."""

    position: int
    value: int
    members: tuple[int, ...]


def _labels(codes: Sequence[int], m: int) -> tuple[str, ...]:
    return tuple(format(c, f"0{m}b") for c in codes)


def make_psk(M: int) -> LabeledConstellation:
    """Gray-labeled ``2**M``-PSK on the unit circle.

    >>> make_psk(1).points
    array([ 1.+0.j, -1.+0.j])
    """
    if not 1 <= M <= 8:
        raise ConstellationError(f"PSK needs 1 <= M <= 8, got {M}")
    n = 2**M
    k = np.arange(n)
    pts = np.exp(2j * np.pi * k / n)
    # snap the exact axis points so BPSK/QPSK are exactly real/imaginary
    pts = np.where(np.abs(pts.real) < 1e-15, 1j * np.round(pts.imag), pts)
    pts = np.where(np.abs(pts.imag) < 1e-15, np.round(pts.real) + 0j, pts)
    name = {1: "bpsk", 2: "qpsk"}.get(M, f"psk{n}")
    return LabeledConstellation(pts, _labels([gray_code(i) for i in k], M), name)


def make_qam(M: int) -> LabeledConstellation:
    """Square ``2**M``-QAM with per-axis Gray labeling.

    The first ``M/2`` label bits select the in-phase level and the last
    ``M/2`` the quadrature level.
    """
    if M % 2 or not 2 <= M <= 8:
        raise ConstellationError(f"square QAM needs even 2 <= M <= 8, got {M}")
    h = M // 2
    side = 2**h
    levels = 2 * np.arange(side) - (side - 1)
    pts, codes = [], []
    for i in range(side):
        for q in range(side):
            pts.append(levels[i] + 1j * levels[q])
            codes.append((gray_code(i) << h) | gray_code(q))
    return LabeledConstellation(np.array(pts), _labels(codes, M), f"qam{2**M}")


def bit_subset(k: LabeledConstellation, j: int, c: int) -> BitSubset:
    """Points of ``k`` whose ``j``-th label bit (1-based) equals ``c``."""
    if not 1 <= j <= k.M:
        raise ConstellationError(f"bit position {j} outside 1..{k.M}")
    if c not in (0, 1):
        raise ConstellationError(f"bit value must be 0 or 1, got {c}")
    ch = str(c)
    members = tuple(i for i, lab in enumerate(k.labels) if lab[j - 1] == ch)
    return BitSubset(j, c, members)


_BUILTIN = {
    "bpsk": lambda: make_psk(1),
    "qpsk": lambda: make_psk(2),
    "psk8": lambda: make_psk(3),
    "8psk": lambda: make_psk(3),
    "qam4": lambda: make_qam(2),
    "qam16": lambda: make_qam(4),
    "16qam": lambda: make_qam(4),
    "qam64": lambda: make_qam(6),
    "64qam": lambda: make_qam(6),
    "qam256": lambda: make_qam(8),
}


def builtin(name: str) -> LabeledConstellation:
    """Look up a built-in constellation by name (``bpsk``, ``qam16``, ...)."""
    try:
        return _BUILTIN[name.lower()]()
    except KeyError:
        raise ConstellationError(
            f"unknown constellation {name!r}; choose from {sorted(_BUILTIN)}"
        ) from None


def load_constellation(path: str | Path) -> LabeledConstellation:
    """Read a JSON constellation file and validate it.

    The file holds ``{"name", "M", "points": [[re, im], ...], "labels"}``.
    """
    data = json.loads(Path(path).read_text())
    try:
        pts = np.array([complex(re, im) for re, im in data["points"]])
        labels = data["labels"]
        m = int(data["M"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConstellationError(f"malformed constellation file {path}: {exc}") from exc
    k = LabeledConstellation(pts, labels, data.get("name", Path(path).stem))
    if k.M != m:
        raise ConstellationError(f"file declares M={m} but holds {k.size} points")
    return k


def save_constellation(k: LabeledConstellation, path: str | Path) -> None:
    Path(path).write_text(json.dumps(k.to_dict(), indent=2))
