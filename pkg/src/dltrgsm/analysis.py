"""Closed-form analytics: Q-function, pairwise error probabilities, union
bound, optimal power ratio, operation counts and receive power."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .channel import frame_rng, sample_channel
from .config import (DL, MU, SystemConfig, index_to_digits, optimal_alpha, user_bits,
                     validate_config)
from .detect import dl_candidates
from .precoder import build_dl_cache

__all__ = [
    "q_function", "pep", "pep_iq_max", "pep_rsp_max", "optimal_alpha", "bep_union_bound",
    "UnionBound", "EnumerationTooLarge", "ComplexityReport", "complexity_dl", "complexity_mu",
    "PowerReport", "receive_power", "dl_supersymbols",
]

MAX_ENUMERATION = 4096
BOUND_STREAM = 0xB0
_SQRT2 = math.sqrt(2.0)


class EnumerationTooLarge(ValueError):
    pass


def q_function(x):
    """Gaussian tail probability ``Q(x) = erfc(x / sqrt(2)) / 2``."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / _SQRT2)


def pep(a, b, n0: float):
    """Pairwise error probability between two noiseless receive vectors.

    ``Q(||a - b|| / sqrt(2 n0))``. Broadcasts over leading axes of ``a``/``b``.
    """
    a, b = np.asarray(a), np.asarray(b)
    return pep_from_distance(np.sqrt(np.sum(np.abs(a - b) ** 2, axis=-1)), n0)


def pep_iq_max(beta, lambda_min, p1, n0, m):
    """Worst-case IQ-domain PEP on the weakest subchannel (adjacent PSK points)."""
    return q_function(beta * lambda_min * np.sqrt(2.0 * p1 / n0) * np.sin(np.pi / m))


def pep_rsp_max(beta, lambda_min, p1, p2, n0):
    """Worst-case receive-spatial PEP: one antenna's level flipped on the weakest subchannel."""
    return q_function(beta * lambda_min * (np.sqrt(p2) - np.sqrt(p1)) / np.sqrt(2.0 * n0))


def dl_supersymbols(cache, config: SystemConfig, user: int = 0) -> np.ndarray:
    """Every supersymbol ``G_s P_i x_m`` of one user, ordered ``(s, i, m)``: shape ``(..., 2**eta, N_r)``."""
    pw = config.power
    cand = dl_candidates(config.n_r, config.m, pw.p1, pw.p2)
    sup = np.swapaxes(cache.G[..., :, user, :, :] @ cand.T, -1, -2)   # (..., S, Q, N_r)
    return sup.reshape(sup.shape[:-3] + (-1, config.n_r))


def dl_hypothesis_labels(config: SystemConfig) -> np.ndarray:
    """Per-user bit labels of all hypotheses in detector order ``(s, i, m)``."""
    n_q_iq = config.m**config.n_r
    idx = np.arange(config.n_tcomb * 2**config.n_r * n_q_iq)
    s, q = np.divmod(idx, 2**config.n_r * n_q_iq)
    i, m = np.divmod(q, n_q_iq)
    return user_bits(s, i, index_to_digits(m, config.m, config.n_r), config)


@dataclass(frozen=True)
class UnionBound:
    bound: float
    n_channels: int
    exceeds_one: bool


def bep_union_bound(config: SystemConfig, n0: float, channels=100, user: int = 0,
                    stream: int = BOUND_STREAM) -> UnionBound:
    """Hamming-weighted union bound on the per-user BEP of DL-TR-GSM.

    The channel expectation is a sample mean over ``channels``: either an int
    (that many i.i.d. draws seeded from ``config.seed``) or an array of channel
    matrices ``(n, K*N_r, N_t)``.
    """
    if config.scheme != DL:
        raise ValueError("the union bound is implemented for DL_TR_GSM only")
    eta = config.eta
    n_hyp = config.n_tcomb * 2**config.n_r * config.m**config.n_r
    if n_hyp > MAX_ENUMERATION:
        raise EnumerationTooLarge(f"{n_hyp} supersymbols exceed the guard of {MAX_ENUMERATION}")
    if isinstance(channels, (int, np.integer)):
        channels = np.stack([sample_channel(config, frame_rng(config.seed, j, stream)).H
                             for j in range(int(channels))])
    channels = np.asarray(channels)
    labels = dl_hypothesis_labels(config).astype(np.int64)
    hamming = np.sum(labels[:, None, :] != labels[None, :, :], axis=-1)

    mean_pep = np.zeros((n_hyp, n_hyp))
    for H in channels:
        sup = dl_supersymbols(build_dl_cache(H, config), config, user)
        gram = sup @ np.conj(sup.T)
        norms = np.real(np.diag(gram))
        dist2 = np.maximum(norms[:, None] + norms[None, :] - 2.0 * gram.real, 0.0)
        mean_pep += pep_from_distance(np.sqrt(dist2), n0)
    mean_pep /= len(channels)
    bound = float(np.sum(hamming * mean_pep) / (eta * 2**eta))
    return UnionBound(bound=bound, n_channels=len(channels), exceeds_one=bound > 1.0)


def pep_from_distance(distance, n0: float):
    distance = np.asarray(distance, dtype=float)
    if n0 == 0:
        return np.where(distance > 0, 0.0, 0.5)
    return q_function(distance / math.sqrt(2.0 * n0))


# ---- complexity -------------------------------------------------------------------

@dataclass(frozen=True)
class ComplexityReport:
    scheme: str
    total: int
    svd_term: int
    beta_term: int


def _svd_ops(rows: int, n_tact: int) -> int:
    return 4 * rows**2 * n_tact + 22 * n_tact


def _beta_ops(n_streams: int, n_tact: int) -> int:
    # n^3 + n^2 (N_tact + 1/2) + n (N_tact + 3/2) + 2, kept in integers
    twice = 2 * n_streams**3 + n_streams**2 * (2 * n_tact + 1) + n_streams * (2 * n_tact + 3) + 4
    assert twice % 2 == 0
    return twice // 2


def complexity_dl(config: SystemConfig) -> ComplexityReport:
    """Operations for all SVDs and scaling coefficients of DL-TR-GSM."""
    svd = config.k * config.n_tcomb * _svd_ops(config.n_r, config.n_tact)
    beta = config.n_tcomb * _beta_ops(config.k * config.n_r, config.n_tact)
    return ComplexityReport(DL, svd + beta, svd, beta)


def complexity_mu(config: SystemConfig) -> ComplexityReport:
    """Operations for all SVDs and scaling coefficients of MU-TR-GSM."""
    n_rcomb = config.n_rcomb
    svd = config.k * config.n_tcomb * n_rcomb * _svd_ops(config.n_ract, config.n_tact)
    beta = config.n_tcomb * n_rcomb**config.k * _beta_ops(config.k * config.n_ract, config.n_tact)
    return ComplexityReport(MU, svd + beta, svd, beta)


def user_scaling_configs(k: int) -> tuple[SystemConfig, SystemConfig]:
    """DL and MU configurations used when sweeping the user count.

    ``N_tact = 2K`` and ``N_t = 8K``; DL users have 2 receive antennas, MU users
    have 4 with 2 active.
    """
    dl = validate_config(SystemConfig(n_t=8 * k, n_tact=2 * k, k=k, n_r=2, scheme=DL))
    mu = validate_config(SystemConfig(n_t=8 * k, n_tact=2 * k, k=k, n_r=4, n_ract=2, scheme=MU))
    return dl, mu


# ---- receive power ------------------------------------------------------------------

@dataclass(frozen=True)
class PowerReport:
    n_r: int
    p_lna: float
    p_rfc: float
    p_adc: float
    p_bb: float
    total: float


def receive_power(n_r: int, p_ref: float = 20.0) -> PowerReport:
    """Receiver power in mW: ``N_r (P_LNA + P_RFC + P_ADC) + P_BB``."""
    if n_r < 0 or not p_ref > 0:
        raise ValueError("need N_r >= 0 and P_ref > 0")
    p_lna, p_rfc, p_adc, p_bb = p_ref, 2 * p_ref, 10 * p_ref, 10 * p_ref
    return PowerReport(n_r, p_lna, p_rfc, p_adc, p_bb, n_r * (p_lna + p_rfc + p_adc) + p_bb)
