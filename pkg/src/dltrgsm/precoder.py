"""Per-combination SVD caches, block-diagonalizing precoder and signal chain.

Every function broadcasts over leading axes, so a single frame and a block of
frames go through the same code. Shape comments use ``...`` for those axes,
``S`` for transmit combinations and ``C`` for receive combinations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import (LengthMismatch, PowerPair, SystemConfig, TransmitWord, index_to_digits,
                     psk_alphabet, receive_combinations, spatial_pattern)

RANK_TOL = 1e-12
GRAM_COND_MAX = 1e12


class RankDeficient(ArithmeticError):
    """A per-user channel block lost rank; ``mask`` flags the offending frames."""

    def __init__(self, msg, mask=None):
        super().__init__(msg)
        self.mask = mask


class SingularGram(ArithmeticError):
    def __init__(self, msg, mask=None):
        super().__init__(msg)
        self.mask = mask


def _herm(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


@dataclass(frozen=True)
class SvdFactors:
    U: np.ndarray       # (..., N_r, N_r)
    lam: np.ndarray     # (..., N_r), descending
    V1: np.ndarray      # (..., N_tact, N_r)
    deficient: np.ndarray = field(repr=False, default=None)


def svd_decompose(H: np.ndarray, check: bool = True) -> SvdFactors:
    """Thin SVD ``H = U diag(lam) V1^H`` with a fixed phase convention.

    Each column of ``U`` is rotated so its largest-magnitude entry is real and
    positive; the same rotation is applied to ``V1`` so the product is unchanged.
    """
    U, lam, Vh = np.linalg.svd(H, full_matrices=False)
    V1 = _herm(Vh)
    pivot = np.argmax(np.abs(U), axis=-2)[..., None, :]
    lead = np.take_along_axis(U, pivot, axis=-2)
    rot = np.conj(lead) / np.abs(lead)
    U = U * rot
    V1 = V1 * rot
    deficient = lam[..., -1] < RANK_TOL * lam[..., 0]
    if check and np.any(deficient):
        raise RankDeficient("channel block is rank deficient", mask=deficient)
    return SvdFactors(U=U, lam=lam, V1=V1, deficient=deficient)


def _gram_solve(V1_bar: np.ndarray, check: bool = True):
    """Zero-forcing directions, ``Tr[Gram^-1]`` and the singular-Gram mask from one solve."""
    gram = _herm(V1_bar) @ V1_bar
    # 2-norm condition number from eigenvalues of the Hermitian Gram matrix
    ev = np.linalg.eigvalsh(gram)
    singular = ~(ev[..., 0] > ev[..., -1] / GRAM_COND_MAX)
    if np.any(singular):
        if check:
            raise SingularGram("Gram matrix of the stacked right singular vectors is singular",
                               mask=singular)
        gram = np.where(singular[..., None, None], np.eye(gram.shape[-1]), gram)
    n = gram.shape[-1]
    rhs = np.concatenate([_herm(V1_bar), np.broadcast_to(np.eye(n), gram.shape)], axis=-1)
    sol = np.linalg.solve(gram, rhs)
    directions = _herm(sol[..., :V1_bar.shape[-2]])
    inv_trace = np.trace(sol[..., V1_bar.shape[-2]:], axis1=-2, axis2=-1).real
    return directions, inv_trace, singular


def scaling_coefficient(V1_bar: np.ndarray, numerator: int | None = None,
                        check: bool = True) -> np.ndarray:
    """``sqrt(numerator / Tr[(V1_bar^H V1_bar)^-1])``; numerator defaults to the stream count."""
    n = V1_bar.shape[-1] if numerator is None else numerator
    _, inv_trace, _ = _gram_solve(V1_bar, check)
    return np.sqrt(n / inv_trace)


def zero_forcing_directions(V1_bar: np.ndarray, check: bool = True) -> np.ndarray:
    """``V1_bar (V1_bar^H V1_bar)^-1`` via linear solves instead of an explicit inverse."""
    return _gram_solve(V1_bar, check)[0]


def build_precoder(V1_bar: np.ndarray, beta, p_bar=None) -> np.ndarray:
    """Precoder ``V1_bar (V1_bar^H V1_bar)^-1 beta P_bar``.

    ``p_bar`` is the diagonal of the power-level matrix (``None`` for the MU
    scheme, which has no power levels).
    """
    B = zero_forcing_directions(V1_bar) * np.asarray(beta)[..., None, None]
    if p_bar is not None:
        B = B * np.asarray(p_bar)[..., None, :]
    return B


def power_matrix(spatial_bits, power: PowerPair, n_r: int | None = None) -> np.ndarray:
    """Diagonal of the power-level matrix: ``sqrt(P2)`` where the bit is 1."""
    bits = np.asarray(spatial_bits)
    if n_r is not None and bits.shape[-1] != n_r:
        raise LengthMismatch(f"expected {n_r} spatial bits, got {bits.shape[-1]}")
    return power.amplitudes[bits.astype(np.int64)]


def _select_columns(H: np.ndarray, n_tcomb: int, n_tact: int) -> np.ndarray:
    """(..., rows, N_t) -> (..., S, rows, N_tact) for every transmit combination."""
    used = H[..., :n_tcomb * n_tact]
    blocks = used.reshape(H.shape[:-1] + (n_tcomb, n_tact))
    return np.moveaxis(blocks, -2, -3)


@dataclass(frozen=True)
class DlCache:
    """DL-TR-GSM precoder cache over all transmit combinations.

    ``B0`` is the zero-forcing part ``V1_bar (V1_bar^H V1_bar)^-1``; the full
    precoder is ``B0 * beta * P_bar``. ``G[..., s, k]`` is the effective gain
    ``U diag(lam) beta`` of user ``k``.
    """

    U: np.ndarray       # (..., S, K, N_r, N_r)
    lam: np.ndarray     # (..., S, K, N_r)
    V1: np.ndarray      # (..., S, K, N_tact, N_r)
    beta: np.ndarray    # (..., S)
    B0: np.ndarray      # (..., S, N_tact, K*N_r)
    G: np.ndarray       # (..., S, K, N_r, N_r)
    invalid: np.ndarray = field(repr=False, default=None)  # (...,) frames with a degenerate block

    def precoder(self, s: int, p_bar=None) -> np.ndarray:
        B = self.B0[..., s, :, :] * self.beta[..., s, None, None]
        if p_bar is not None:
            B = B * np.asarray(p_bar)[..., None, :]
        return B


def build_dl_cache(H: np.ndarray, config: SystemConfig, check: bool = True) -> DlCache:
    K, n_r, n_tact = config.k, config.n_r, config.n_tact
    Hs = _select_columns(H, config.n_tcomb, n_tact)                  # (..., S, K*N_r, N_tact)
    Hsk = Hs.reshape(Hs.shape[:-2] + (K, n_r, n_tact))                # (..., S, K, N_r, N_tact)
    f = svd_decompose(Hsk, check=check)
    V1_bar = np.moveaxis(f.V1, -3, -2).reshape(f.V1.shape[:-3] + (n_tact, K * n_r))
    B0, inv_trace, singular = _gram_solve(V1_bar, check=check)
    beta = np.sqrt(K * n_r / inv_trace) if config.scaling else np.ones(V1_bar.shape[:-2])
    G = f.U * (f.lam * beta[..., None, None])[..., None, :]
    invalid = np.any(f.deficient, axis=(-1, -2)) | np.any(singular, axis=-1)
    return DlCache(U=f.U, lam=f.lam, V1=f.V1, beta=beta, B0=B0, G=G, invalid=invalid)


@dataclass(frozen=True)
class MuCache:
    """MU-TR-GSM precoders for every transmit combination and every receive
    combination of the detecting ``user`` (other users' combinations fixed).

    ``E[..., s, c]`` is the effective channel ``H^(user)_s B_{s,c}`` seen on all
    ``N_r`` receive antennas of the detecting user, shape ``(N_r, K*N_ract)``.
    """

    user: int
    combos: np.ndarray  # (..., K) receive combinations the cache was built for
    lam: np.ndarray     # (..., S, C, K, N_ract)
    beta: np.ndarray    # (..., S, C)
    B: np.ndarray       # (..., S, C, N_tact, K*N_ract), beta included
    E: np.ndarray       # (..., S, C, N_r, K*N_ract)
    invalid: np.ndarray = field(repr=False, default=None)


def build_mu_cache(H: np.ndarray, config: SystemConfig, combos, user: int = 0,
                   check: bool = True) -> MuCache:
    K, n_r, n_ract, n_tact = config.k, config.n_r, config.n_ract, config.n_tact
    n_rcomb = config.n_rcomb
    table = np.array(receive_combinations(n_r, n_ract))              # (C, N_ract)
    combos = np.asarray(combos, dtype=np.int64)
    lead = combos.shape[:-1]
    offsets = (np.arange(K) * n_r)[:, None]
    rows = table[combos] + offsets                                    # (..., K, N_ract)
    rows = np.broadcast_to(rows[..., None, :, :], lead + (n_rcomb, K, n_ract)).copy()
    rows[..., user, :] = table + user * n_r                           # hypothesis axis C
    rows = rows.reshape(lead + (1, n_rcomb, K * n_ract, 1))

    Hs = _select_columns(H, config.n_tcomb, n_tact)                   # (..., S, K*N_r, N_tact)
    Hsel = np.take_along_axis(Hs[..., :, None, :, :], rows, axis=-2)  # (..., S, C, K*N_ract, N_tact)
    Hsk = Hsel.reshape(Hsel.shape[:-2] + (K, n_ract, n_tact))
    f = svd_decompose(Hsk, check=check)
    V1_bar = np.moveaxis(f.V1, -3, -2).reshape(f.V1.shape[:-3] + (n_tact, K * n_ract))
    B0, inv_trace, singular = _gram_solve(V1_bar, check=check)
    beta = np.sqrt(K * n_ract / inv_trace) if config.scaling else np.ones(V1_bar.shape[:-2])
    B = B0 * beta[..., None, None]
    H_user = Hs[..., user * n_r:(user + 1) * n_r, :]                  # (..., S, N_r, N_tact)
    E = H_user[..., :, None, :, :] @ B
    invalid = np.any(f.deficient, axis=(-1, -2, -3)) | np.any(singular, axis=(-1, -2))
    return MuCache(user=user, combos=combos, lam=f.lam, beta=beta, B=B, E=E, invalid=invalid)


# ---- signal chain ---------------------------------------------------------------

def stream_symbols(positions, m: int) -> np.ndarray:
    return psk_alphabet(m)[np.asarray(positions, dtype=np.int64)]


def place_on_block(x_active: np.ndarray, s, n_tact: int, n_t: int) -> np.ndarray:
    """Embed ``(..., N_tact)`` vectors onto antenna block ``s`` of an ``N_t`` array."""
    s = np.asarray(s, dtype=np.int64)
    x_full = np.zeros(x_active.shape[:-1] + (n_t,), dtype=complex)
    idx = s[..., None] * n_tact + np.arange(n_tact)
    np.put_along_axis(x_full, idx, x_active, axis=-1)
    return x_full


def _take_s(a: np.ndarray, s, ndim_tail: int) -> np.ndarray:
    """Select transmit combination ``s`` (per frame) from an ``(..., S, *tail)`` array."""
    s = np.asarray(s, dtype=np.int64)
    missing = s.ndim - (a.ndim - ndim_tail - 1)
    if missing > 0:
        # one cache shared by a batch of words
        a = a.reshape((1,) * missing + a.shape)
    idx = s.reshape(s.shape + (1,) * (ndim_tail + 1))
    axis = -(ndim_tail + 1)
    return np.squeeze(np.take_along_axis(a, idx, axis=axis), axis=axis)


def transmit_dl(s, i, positions, cache: DlCache, config: SystemConfig) -> np.ndarray:
    """Full ``N_t`` transmit vector(s) for DL indices; ``i`` is ``(..., K)``, positions ``(..., K, N_r)``."""
    x_tilde = stream_symbols(positions, config.m).reshape(np.shape(positions)[:-2] + (-1,))
    p_bar = power_matrix(spatial_pattern(i, config.n_r), config.power).reshape(x_tilde.shape)
    B0 = _take_s(cache.B0, s, 2)
    beta = _take_s(cache.beta, s, 0)
    x_active = (B0 @ (p_bar * x_tilde)[..., None])[..., 0] * np.asarray(beta)[..., None]
    return place_on_block(x_active, s, config.n_tact, config.n_t)


def transmit_mu(s, positions, cache: MuCache, config: SystemConfig) -> np.ndarray:
    """Full transmit vector(s) for MU indices; the receive combinations are ``cache.combos``."""
    x_tilde = stream_symbols(positions, config.m).reshape(np.shape(positions)[:-2] + (-1,))
    c_user = cache.combos[..., cache.user]
    B_s = _take_s(cache.B, s, 3)                                       # (..., C, N_tact, K*N_ract)
    B = _take_s(B_s, c_user, 2)
    x_active = (B @ x_tilde[..., None])[..., 0]
    return place_on_block(x_active, s, config.n_tact, config.n_t)


def transmit(word: TransmitWord, cache, config: SystemConfig) -> np.ndarray:
    """Single-word transmit for either scheme."""
    positions = index_to_digits(np.array(word.m), config.m, config.n_streams)
    if config.is_dl:
        return transmit_dl(word.s, np.array(word.i), positions, cache, config)
    if not np.array_equal(np.asarray(cache.combos), np.array(word.i)):
        raise ValueError("MU cache was built for different receive combinations")
    return transmit_mu(word.s, positions, cache, config)


def receive(H: np.ndarray, x_full: np.ndarray, noise, n_r: int) -> np.ndarray:
    """``y = H x + n`` split into per-user views of shape ``(..., K, N_r)``."""
    y = (H @ x_full[..., None])[..., 0] + noise
    return y.reshape(y.shape[:-1] + (-1, n_r))
