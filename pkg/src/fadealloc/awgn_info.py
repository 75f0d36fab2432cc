"""Mutual information and MMSE of the scalar complex AWGN channel.

Discrete inputs are uniform over a :class:`LabeledConstellation`. The
expectation over circularly symmetric noise ``Z ~ CN(0, 1)`` is taken with a
tensor-product Gauss-Hermite rule, so every quantity here is a deterministic
smooth function of the SNR.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from .constellation import LabeledConstellation, bit_subset

__all__ = [
    "DEFAULT_NODES",
    "noise_nodes",
    "mutual_info_cm",
    "mmse_cm",
    "mutual_info_bicm",
    "mmse_bicm",
    "mmse_subset",
    "mutual_info_subset",
    "gaussian_info",
    "gaussian_mmse",
    "evaluate_model",
    "subsets_of",
]

DEFAULT_NODES = 160
# product weights below this are dropped; the discarded mass is ~1e-18
PRUNE_WEIGHT = 1e-20
LN2 = np.log(2.0)

# rows of the (points x points x nodes) tensor handled per chunk
_CHUNK_ELEMS = 2_000_000


@lru_cache(maxsize=8)
def noise_nodes(n: int = DEFAULT_NODES) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for ``E[f(Z)]`` with ``Z ~ CN(0, 1)``.

    ``Z = t1 + i t2`` with ``t1, t2`` independent ``N(0, 1/2)``, whose
    density ``exp(-t^2)/sqrt(pi)`` is exactly the Gauss-Hermite weight.
    Corner nodes of the tensor grid whose weight falls below
    ``PRUNE_WEIGHT`` are discarded, so the weights sum to one up to ~1e-18.
    """
    t, w = np.polynomial.hermite.hermgauss(n)
    z = (t[:, None] + 1j * t[None, :]).ravel()
    wz = (w[:, None] * w[None, :]).ravel() / np.pi
    keep = wz > PRUNE_WEIGHT
    z, wz = z[keep], wz[keep]
    z.setflags(write=False)
    wz.setflags(write=False)
    return z, wz


def _check_snr(rho: float) -> float:
    rho = float(rho)
    if not rho >= 0:
        raise ValueError(f"SNR must be nonnegative, got {rho}")
    return rho


def _log_metrics(src: np.ndarray, cand: np.ndarray, rho: float,
                 z: np.ndarray) -> np.ndarray:
    """``-|sqrt(rho)(x - x') + Z|^2 + |Z|^2`` for x in src, x' in cand.

    Shape ``(len(src), len(cand), len(z))``.
    """
    d = np.sqrt(rho) * (src[:, None] - cand[None, :])
    # -|d + z|^2 + |z|^2 = -|d|^2 - 2 Re(conj(d) z)
    return (-(np.abs(d) ** 2)[:, :, None]
            - 2.0 * (d.real[:, :, None] * z.real + d.imag[:, :, None] * z.imag))


def _row_chunks(n_src: int, n_cand: int, n_z: int):
    step = max(1, _CHUNK_ELEMS // max(1, n_cand * n_z))
    for lo in range(0, n_src, step):
        yield slice(lo, min(n_src, lo + step))


def _lse_post(metr: np.ndarray, cand: np.ndarray):
    """Log-sum-exp over axis 1 and the posterior mean of ``cand``."""
    mx = metr.max(axis=1, keepdims=True)
    e = np.exp(metr - mx)
    tot = e.sum(axis=1)
    lse = mx[:, 0, :] + np.log(tot)
    xhat = np.einsum("ikn,k->in", e, cand) / tot
    return lse, xhat


def _evaluate(pts: np.ndarray, rho: float, nodes: int, subsets=None,
              want_info: bool = True, want_mmse: bool = True) -> dict:
    """Information and MMSE for a uniform input on ``pts``.

    With ``subsets`` (a list of index arrays) the BICM sums are evaluated
    too, sharing the metric tensor with the full-set quantities. Info values
    are in nats.
    """
    n = pts.size
    out = {"info": 0.0, "mmse": 0.0}
    if subsets is not None:
        out.update(sub_info=np.zeros(len(subsets)), sub_mmse=np.zeros(len(subsets)),
                   bicm_lr=0.0)
    if rho == 0.0:
        out["info"] = 0.0
        out["mmse"] = float(np.mean(np.abs(pts - pts.mean()) ** 2))
        if subsets is not None:
            for i, s in enumerate(subsets):
                sp = pts[s]
                out["sub_mmse"][i] = float(np.mean(np.abs(sp - sp.mean()) ** 2))
            # likelihoods are flat: each ratio is |X| / |X_c^j|
            out["bicm_lr"] = sum(s.size * np.log(n / s.size) for s in subsets) / n
        return out

    z, w = noise_nodes(nodes)
    where = None
    if subsets is not None:
        # position of each row inside each subset, -1 when absent
        where = np.full((len(subsets), n), -1)
        for i, s in enumerate(subsets):
            where[i, s] = np.arange(s.size)

    lse_acc = 0.0
    err_acc = 0.0
    lr_acc = 0.0
    sub_lse = np.zeros(len(subsets)) if subsets is not None else None
    sub_err = np.zeros(len(subsets)) if subsets is not None else None
    for sl in _row_chunks(n, n, z.size):
        metr = _log_metrics(pts[sl], pts, rho, z)
        lse, xhat = _lse_post(metr, pts)
        lse_acc += float(np.sum(lse @ w))
        if want_mmse:
            err_acc += float(np.sum((np.abs(pts[sl, None] - xhat) ** 2) @ w))
        if subsets is None:
            continue
        rows = np.arange(n)[sl]
        for i, s in enumerate(subsets):
            mask = where[i, rows] >= 0
            if not mask.any():
                continue
            sm = metr[mask][:, s, :]
            slse, sxhat = _lse_post(sm, pts[s])
            lr_acc += float(np.sum((lse[mask] - slse) @ w))
            sub_lse[i] += float(np.sum(slse @ w))
            if want_mmse:
                sub_err[i] += float(np.sum((np.abs(pts[rows[mask], None] - sxhat) ** 2) @ w))

    out["info"] = np.log(n) - lse_acc / n
    out["mmse"] = err_acc / n
    if subsets is not None:
        sizes = np.array([s.size for s in subsets], dtype=float)
        out["sub_info"] = np.log(sizes) - sub_lse / sizes
        out["sub_mmse"] = sub_err / sizes
        out["bicm_lr"] = lr_acc / n
    return out


def mutual_info_cm(k: LabeledConstellation, rho: float,
                   nodes: int = DEFAULT_NODES) -> float:
    """Coded-modulation mutual information in bits at SNR ``rho``.

    Parameters
    ----------
    k : LabeledConstellation
        Unit-energy input constellation (labels are ignored).
    rho : float
        Received SNR, linear scale.
    nodes : int
        Gauss-Hermite nodes per real dimension.

    Returns
    -------
    float
        Value in ``[0, M]``.
    """
    rho = _check_snr(rho)
    val = _evaluate(k.points, rho, nodes, want_mmse=False)["info"] / LN2
    return float(min(max(val, 0.0), k.M))


def mmse_cm(k: LabeledConstellation, rho: float,
            nodes: int = DEFAULT_NODES) -> float:
    """MMSE of estimating a uniform symbol of ``k`` from ``sqrt(rho) X + Z``."""
    rho = _check_snr(rho)
    return float(min(max(_evaluate(k.points, rho, nodes)["mmse"], 0.0), 1.0))


def subsets_of(k: LabeledConstellation) -> list[np.ndarray]:
    """Index arrays of the bit subsets, ordered ``(1,0), (1,1), (2,0), ...``."""
    return [np.asarray(bit_subset(k, j, c).members)
            for j in range(1, k.M + 1) for c in (0, 1)]


def mutual_info_subset(k: LabeledConstellation, members, rho: float,
                       nodes: int = DEFAULT_NODES) -> float:
    """Mutual information in bits for a uniform input on a point subset.

    The subset keeps its original coordinates.
    """
    rho = _check_snr(rho)
    return _evaluate(k.points[np.asarray(members)], rho, nodes,
                     want_mmse=False)["info"] / LN2


def mmse_subset(k: LabeledConstellation, members, rho: float,
                nodes: int = DEFAULT_NODES) -> float:
    """MMSE for a uniform input on a point subset, original coordinates."""
    rho = _check_snr(rho)
    return _evaluate(k.points[np.asarray(members)], rho, nodes)["mmse"]


def mutual_info_bicm(k: LabeledConstellation, rho: float,
                     nodes: int = DEFAULT_NODES) -> float:
    """BICM mutual information in bits (sum over bit positions).

    For each label position ``j`` and bit value ``c`` the log-ratio of the
    full-constellation and subset likelihood sums is averaged over the
    points of the subset and the noise.
    """
    rho = _check_snr(rho)
    res = _evaluate(k.points, rho, nodes, subsets_of(k), want_mmse=False)
    val = k.M - res["bicm_lr"] / LN2
    return float(min(max(val, 0.0), k.M))


def mmse_bicm(k: LabeledConstellation, rho: float,
              nodes: int = DEFAULT_NODES) -> float:
    """Derivative of the BICM mutual information, times ``ln 2``.

    ``sum_j (1/2) sum_c (MMSE_X - MMSE_{X_c^j})``. Despite the name this is
    not an estimation error; it is only used as ``ln 2 * dI/drho``.
    """
    rho = _check_snr(rho)
    res = _evaluate(k.points, rho, nodes, subsets_of(k))
    return float(max(0.5 * np.sum(res["mmse"] - res["sub_mmse"]), 0.0))


def evaluate_model(k: LabeledConstellation, rho: float, bicm: bool,
                   nodes: int = DEFAULT_NODES) -> tuple[float, float]:
    """``(info_bits, mmse)`` for CM or BICM from one shared pass."""
    rho = _check_snr(rho)
    if not bicm:
        res = _evaluate(k.points, rho, nodes)
        return (min(max(res["info"] / LN2, 0.0), k.M),
                min(max(res["mmse"], 0.0), 1.0))
    res = _evaluate(k.points, rho, nodes, subsets_of(k))
    info = min(max(k.M - res["bicm_lr"] / LN2, 0.0), k.M)
    return info, max(0.5 * float(np.sum(res["mmse"] - res["sub_mmse"])), 0.0)


def gaussian_info(rho):
    """``log2(1 + rho)``."""
    return np.log2(1.0 + np.asarray(rho, dtype=float))


def gaussian_mmse(rho):
    """``1 / (1 + rho)``."""
    return 1.0 / (1.0 + np.asarray(rho, dtype=float))
