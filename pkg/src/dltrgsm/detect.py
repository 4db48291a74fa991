"""Joint ML detection (both schemes) and the two-step separate detector.

All scans are exhaustive. ``np.argmin`` returns the first minimum of the
flattened ``(s, i, m)`` hypothesis grid, which gives lowest-lexicographic
tie-breaking.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .config import (SystemConfig, digits_to_index, index_to_digits, psk_alphabet,
                     receive_combinations, spatial_pattern)
from .precoder import DlCache, MuCache


@dataclass(frozen=True)
class DetectionResult:
    s: np.ndarray
    i: np.ndarray
    positions: np.ndarray   # (..., n_streams) detected PSK positions
    metric: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def m(self) -> np.ndarray:
        return digits_to_index(self.positions, self.positions_base)

    @property
    def positions_base(self) -> int:
        return self.info["M"]


@lru_cache(maxsize=None)
def dl_candidates(n_r: int, m: int, p1: float, p2: float) -> np.ndarray:
    """``P_i x_m`` for every ``(i, m)``, i-major; shape ``(2**n_r * m**n_r, n_r)``."""
    amps = np.sqrt(np.array([p1, p2]))[spatial_pattern(np.arange(2**n_r), n_r)]   # (2^Nr, Nr)
    syms = psk_alphabet(m)[index_to_digits(np.arange(m**n_r), m, n_r)]          # (M^Nr, Nr)
    cand = amps[:, None, :] * syms[None, :, :]
    cand.setflags(write=False)
    return cand.reshape(-1, n_r)


@lru_cache(maxsize=None)
def iq_candidates(n_streams: int, m: int) -> np.ndarray:
    cand = psk_alphabet(m)[index_to_digits(np.arange(m**n_streams), m, n_streams)]
    cand.setflags(write=False)
    return cand


def ml_detect_dl(y: np.ndarray, cache: DlCache, config: SystemConfig, user: int = 0) -> DetectionResult:
    """Joint ML over ``(s, i, m)`` of ``||y - G_s P_i x_m||^2``; ``y`` is ``(..., N_r)``."""
    pw = config.power
    cand = dl_candidates(config.n_r, config.m, pw.p1, pw.p2)           # (Q, N_r)
    G = cache.G[..., :, user, :, :]                                    # (..., S, N_r, N_r)
    sup = G @ cand.T                                                   # (..., S, N_r, Q)
    diff = np.asarray(y)[..., None, :, None] - sup
    metric = np.einsum("...rq,...rq->...q", diff.real, diff.real) + \
        np.einsum("...rq,...rq->...q", diff.imag, diff.imag)           # (..., S, Q)
    flat = metric.reshape(metric.shape[:-2] + (-1,))
    best = np.argmin(flat, axis=-1)
    n_q = cand.shape[0]
    n_iq = config.m**config.n_r
    s, q = np.divmod(best, n_q)
    i, m = np.divmod(q, n_iq)
    return DetectionResult(
        s=s, i=i, positions=index_to_digits(m, config.m, config.n_r),
        metric=np.take_along_axis(flat, best[..., None], axis=-1)[..., 0],
        info={"M": config.m, "hypotheses": flat.shape[-1]})


def separate_detect(y: np.ndarray, cache: DlCache, config: SystemConfig, user: int = 0) -> DetectionResult:
    """Two-step detector.

    Stage 1, for every hypothesized combination: rotate by ``U^H`` and pick the
    power level and PSK point independently on each subchannel. Stage 2: pick
    the combination whose stage-1 candidate has the smallest full metric.
    """
    y = np.asarray(y)
    pw = config.power
    U = cache.U[..., :, user, :, :]                                    # (..., S, N_r, N_r)
    lam = cache.lam[..., :, user, :]                                   # (..., S, N_r)
    beta = cache.beta                                                  # (..., S)
    y_rot = (np.conj(np.swapaxes(U, -1, -2)) @ y[..., None, :, None])[..., 0]   # (..., S, N_r)
    scalar = pw.amplitudes[:, None] * psk_alphabet(config.m)[None, :]           # (2, M)
    gain = (lam * beta[..., None])[..., None, None]                             # (..., S, N_r, 1, 1)
    diff = y_rot[..., None, None] - gain * scalar
    cost = (diff.real**2 + diff.imag**2).reshape(diff.shape[:-2] + (-1,))       # (..., S, N_r, 2M)
    pick = np.argmin(cost, axis=-1)
    level, pos = np.divmod(pick, config.m)                                      # (..., S, N_r)

    amps = pw.amplitudes[level]
    x_hat = amps * psk_alphabet(config.m)[pos]
    recon = (U @ (lam * beta[..., None] * x_hat)[..., None])[..., 0]
    r = y[..., None, :] - recon
    full = np.sum(r.real**2 + r.imag**2, axis=-1)                               # (..., S)
    s = np.argmin(full, axis=-1)
    sel = s[..., None, None]
    level_s = np.take_along_axis(level, sel, axis=-2)[..., 0, :]
    pos_s = np.take_along_axis(pos, sel, axis=-2)[..., 0, :]
    weights = 1 << np.arange(config.n_r - 1, -1, -1)
    return DetectionResult(
        s=s, i=level_s @ weights, positions=pos_s,
        metric=np.take_along_axis(full, s[..., None], axis=-1)[..., 0],
        info={"M": config.m, "scalar_metrics": cost.shape[-3] * cost.shape[-2] * cost.shape[-1]})


def ml_detect_mu(y: np.ndarray, cache: MuCache, config: SystemConfig, x_tilde=None,
                 rows: str = "all") -> DetectionResult:
    """ML over ``(s, c, m)`` for MU-TR-GSM; ``y`` is ``(..., N_r)``.

    The detecting user's own receive combination ``c`` is hypothesized while
    the other users' combinations are genie-known (baked into ``cache``).

    ``rows="all"`` scores every hypothesis against the full effective channel
    ``H^(k)_s B_{s,c}`` on all ``N_r`` antennas. If ``x_tilde`` (the full
    ``K*N_ract`` symbol vector) is given, the other users' streams are
    genie-known too and included in each hypothesis; otherwise they stay in
    ``y`` as interference on the inactive antennas.

    ``rows="active"`` scores each hypothesis only on the antennas it declares
    active, where zero forcing removes the other users' streams, so no symbol
    knowledge is needed.
    """
    n_s = config.n_ract
    u = cache.user
    own = slice(u * n_s, (u + 1) * n_s)
    cand = iq_candidates(n_s, config.m)                                # (Q, N_ract)
    y = np.asarray(y)
    genie_symbols = x_tilde is not None and rows == "all"
    if rows == "all":
        sup = cache.E[..., own] @ cand.T                               # (..., S, C, N_r, Q)
        if genie_symbols:
            others = np.array(x_tilde, dtype=complex, copy=True)
            others[..., own] = 0
            intf = (cache.E @ others[..., None, None, :, None])[..., 0]  # (..., S, C, N_r)
            sup = sup + intf[..., None]
        diff = y[..., None, None, :, None] - sup
    elif rows == "active":
        table = np.array(receive_combinations(config.n_r, n_s))       # (C, N_ract)
        e_act = cache.E[..., own][..., np.arange(len(table))[:, None], table, :]  # (..., S, C, N_ract, N_ract)
        sup = e_act @ cand.T
        diff = y[..., table][..., None, :, :, None] - sup
    else:
        raise ValueError(f"rows must be 'all' or 'active', got {rows!r}")
    metric = np.sum(diff.real**2 + diff.imag**2, axis=-2)              # (..., S, C, Q)
    flat = metric.reshape(metric.shape[:-3] + (-1,))
    best = np.argmin(flat, axis=-1)
    n_q = cand.shape[0]
    n_c = metric.shape[-2]
    s, rest = np.divmod(best, n_c * n_q)
    c, m = np.divmod(rest, n_q)
    return DetectionResult(
        s=s, i=c, positions=index_to_digits(m, config.m, n_s),
        metric=np.take_along_axis(flat, best[..., None], axis=-1)[..., 0],
        info={"M": config.m, "hypotheses": flat.shape[-1], "rows": rows,
              "genie_other_combinations": True, "genie_other_symbols": genie_symbols})
