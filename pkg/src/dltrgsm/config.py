"""Scenario configuration, antenna-combination combinatorics and bit mapping.

All indices are zero-based: transmit combination ``s`` in ``[0, n_tcomb)``,
power pattern / receive combination ``i`` in ``[0, 2**n_r)`` (DL) or
``[0, n_rcomb)`` (MU), and IQ vector index ``m`` in ``[0, M**n_streams)``.

Frame bit layout::

    [ s bits | user 0: spatial bits, IQ bits | user 1: ... | ... ]

The transmit-spatial bits are shared by all users, so the per-user bit image
(length ``eta``) is the ``s`` bits followed by that user's own bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import combinations
from pathlib import Path
from typing import Optional, Union

import numpy as np

DL = "DL_TR_GSM"
MU = "MU_TR_GSM"
SCHEMES = (DL, MU)
SNR_REFERENCES = ("precoder_input", "transmit")
MU_DETECTORS = ("genie", "interference", "active")


class ConfigError(ValueError):
    """Base class for configuration problems (CLI exit code 2)."""


class ConstraintViolation(ConfigError):
    pass


class InvalidAlpha(ConfigError):
    pass


class LengthMismatch(ValueError):
    pass


class IndexOutOfRange(IndexError):
    pass


def _is_pow2(x: int) -> bool:
    return x >= 1 and (x & (x - 1)) == 0


def num_transmit_combinations(n_t: int, n_tact: int) -> int:
    """Number of disjoint transmit antenna combinations, ``2**floor(log2(n_t/n_tact))``."""
    if n_tact < 1 or n_t < n_tact:
        raise ConstraintViolation(f"need 1 <= N_tact <= N_t, got N_t={n_t}, N_tact={n_tact}")
    # integer floor(log2(n_t // n_tact)) == floor(log2(n_t / n_tact))
    return 1 << ((n_t // n_tact).bit_length() - 1)


def num_receive_combinations(n_r: int, n_ract: int) -> int:
    """Number of usable receive antenna subsets, ``2**floor(log2(C(n_r, n_ract)))``."""
    if not 0 < n_ract < n_r:
        raise ConstraintViolation(f"need 0 < N_ract < N_r, got N_r={n_r}, N_ract={n_ract}")
    return 1 << (math.comb(n_r, n_ract).bit_length() - 1)


def receive_combinations(n_r: int, n_ract: int) -> list[tuple[int, ...]]:
    """Receive antenna subsets in use: the first ``n_rcomb`` in lexicographic order."""
    n = num_receive_combinations(n_r, n_ract)
    return list(combinations(range(n_r), n_ract))[:n]


def transmit_combination_antennas(s: int, n_tact: int, n_t: Optional[int] = None) -> np.ndarray:
    """Antenna indices of transmit combination ``s`` (contiguous block)."""
    if s < 0:
        raise IndexOutOfRange(f"transmit combination {s} < 0")
    if n_t is not None and s >= num_transmit_combinations(n_t, n_tact):
        raise IndexOutOfRange(f"transmit combination {s} out of range for N_t={n_t}, N_tact={n_tact}")
    return np.arange(s * n_tact, (s + 1) * n_tact)


def power_levels_from_alpha(alpha: float) -> "PowerPair":
    """Split unit average power into two levels with ratio ``alpha = P2/P1``."""
    if not alpha > 1:
        raise InvalidAlpha(f"alpha must be > 1, got {alpha}")
    return PowerPair(p1=2.0 / (1.0 + alpha), p2=2.0 * alpha / (1.0 + alpha))


def optimal_alpha(m: int) -> float:
    """Power ratio that equalizes the worst-case IQ and receive-spatial PEPs."""
    if m < 2:
        raise ConfigError(f"PSK order must be >= 2, got {m}")
    return (1.0 + 2.0 * math.sin(math.pi / m)) ** 2


@dataclass(frozen=True)
class PowerPair:
    p1: float
    p2: float

    @property
    def amplitudes(self) -> np.ndarray:
        return np.sqrt(np.array([self.p1, self.p2]))


@dataclass(frozen=True)
class SystemConfig:
    """Full scenario description.

    ``alpha`` may be the string ``"auto"``; :func:`validate_config` resolves it
    to the optimal ratio for ``m``. ``scaling=False`` forces the precoder
    scaling coefficient to 1. ``mu_detector`` picks the MU-TR-GSM receiver
    model (see :func:`dltrgsm.detect.ml_detect_mu`).
    """

    n_t: int = 32
    n_tact: int = 4
    k: int = 2
    n_r: int = 2
    m: int = 4
    scheme: str = DL
    n_ract: Optional[int] = None
    alpha: Union[float, str] = "auto"
    snr_db: float = 20.0
    snr_reference: str = "transmit"
    scaling: bool = True
    seed: int = 1
    mu_detector: str = "genie"

    # ---- derived quantities -------------------------------------------------
    @property
    def is_dl(self) -> bool:
        return self.scheme == DL

    @property
    def n_tcomb(self) -> int:
        return num_transmit_combinations(self.n_t, self.n_tact)

    @property
    def n_rcomb(self) -> int:
        return num_receive_combinations(self.n_r, self.n_ract)

    @property
    def n_streams(self) -> int:
        """IQ streams per user."""
        return self.n_r if self.is_dl else self.n_ract

    @property
    def n_patterns(self) -> int:
        """Receive-spatial alphabet size per user."""
        return 2**self.n_r if self.is_dl else self.n_rcomb

    @property
    def bits_s(self) -> int:
        return self.n_tcomb.bit_length() - 1

    @property
    def bits_spatial(self) -> int:
        return self.n_patterns.bit_length() - 1

    @property
    def bits_sym(self) -> int:
        return self.m.bit_length() - 1

    @property
    def bits_user(self) -> int:
        """Bits private to one user (receive-spatial + IQ)."""
        return self.bits_spatial + self.n_streams * self.bits_sym

    @property
    def eta(self) -> int:
        return data_rate(self)

    @property
    def bits_per_frame(self) -> int:
        return self.bits_s + self.k * self.bits_user

    @property
    def power(self) -> PowerPair:
        return power_levels_from_alpha(self.resolved_alpha)

    @property
    def resolved_alpha(self) -> float:
        return optimal_alpha(self.m) if self.alpha == "auto" else float(self.alpha)

    def with_(self, **changes) -> "SystemConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class StoppingRule:
    min_bit_errors: int = 200
    max_frames: int = 10_000_000

    def __post_init__(self):
        if self.min_bit_errors <= 0 or self.max_frames <= 0:
            raise ConfigError("stopping rule fields must be positive")


def validate_config(raw: SystemConfig) -> SystemConfig:
    """Check every scenario constraint and resolve ``alpha="auto"``."""
    if raw.scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {raw.scheme!r}, expected one of {SCHEMES}")
    if raw.snr_reference not in SNR_REFERENCES:
        raise ConfigError(f"unknown snr_reference {raw.snr_reference!r}")
    if raw.mu_detector not in MU_DETECTORS:
        raise ConfigError(f"unknown mu_detector {raw.mu_detector!r}, expected one of {MU_DETECTORS}")
    if raw.m < 2 or not _is_pow2(raw.m):
        raise ConstraintViolation(f"M must be a power of two >= 2, got {raw.m}")
    if min(raw.k, raw.n_r, raw.n_tact) < 1:
        raise ConstraintViolation("K, N_r and N_tact must be positive")
    if not raw.n_tact < raw.n_t:
        raise ConstraintViolation(f"N_tact < N_t violated: N_tact={raw.n_tact}, N_t={raw.n_t}")
    if raw.scheme == DL:
        if not raw.k * raw.n_r <= raw.n_tact:
            raise ConstraintViolation(
                f"K*N_r <= N_tact violated: K*N_r={raw.k * raw.n_r}, N_tact={raw.n_tact}")
    else:
        if raw.n_ract is None or not 0 < raw.n_ract < raw.n_r:
            raise ConstraintViolation(f"0 < N_ract < N_r violated: N_ract={raw.n_ract}, N_r={raw.n_r}")
        if not raw.k * raw.n_ract <= raw.n_tact:
            raise ConstraintViolation(
                f"K*N_ract <= N_tact violated: K*N_ract={raw.k * raw.n_ract}, N_tact={raw.n_tact}")
    if raw.alpha != "auto":
        alpha = float(raw.alpha)
        if not alpha > 1:
            raise InvalidAlpha(f"alpha must be > 1, got {alpha}")
    else:
        alpha = optimal_alpha(raw.m)
    if not 0 <= raw.seed < 2**64:
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {raw.seed}")
    return replace(raw, alpha=alpha)


def data_rate(config: SystemConfig) -> int:
    """Bits per user per channel use, transmit-spatial bits included."""
    bits_s = config.n_tcomb.bit_length() - 1
    bits_sym = config.m.bit_length() - 1
    if config.is_dl:
        return bits_s + config.n_r * (1 + bits_sym)
    bits_rsp = math.comb(config.n_r, config.n_ract).bit_length() - 1
    return bits_s + bits_rsp + config.n_ract * bits_sym


# ---- config file --------------------------------------------------------------

_INT_KEYS = {"n_t", "n_tact", "k", "n_r", "n_ract", "m", "seed", "min_bit_errors", "max_frames"}
_FLOAT_KEYS = {"snr_db"}
_STOP_KEYS = {"min_bit_errors", "max_frames"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | {"alpha", "scheme", "snr_reference", "scaling", "mu_detector"}


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines (``#`` comments) into typed values."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if key not in _ALL_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            if key in _INT_KEYS:
                values[key] = int(value, 0)
            elif key in _FLOAT_KEYS:
                values[key] = float(value)
            elif key == "alpha":
                values[key] = "auto" if value.lower() == "auto" else float(value)
            elif key == "scaling":
                values[key] = _parse_bool(value)
            else:
                values[key] = value
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc
    return values


def split_config_values(values: dict, base: Optional[SystemConfig] = None,
                        base_stop: Optional[StoppingRule] = None) -> tuple[SystemConfig, StoppingRule]:
    cfg_kw = {k: v for k, v in values.items() if k not in _STOP_KEYS}
    stop_kw = {k: v for k, v in values.items() if k in _STOP_KEYS}
    cfg = replace(base or SystemConfig(), **cfg_kw)
    stop = replace(base_stop or StoppingRule(), **stop_kw)
    return validate_config(cfg), stop


def load_config(path: Union[str, Path]) -> tuple[SystemConfig, StoppingRule]:
    return split_config_values(parse_config_text(Path(path).read_text()))


# ---- bit <-> word mapping ------------------------------------------------------

def gray(x):
    return x ^ (x >> 1)


def inverse_gray(g):
    g = np.asarray(g).copy()
    shift = g >> 1
    while np.any(shift):
        g ^= shift
        shift >>= 1
    return g


def psk_alphabet(m: int) -> np.ndarray:
    """Unit-modulus M-PSK points indexed by constellation position."""
    return np.exp(2j * np.pi * np.arange(m) / m)


def bits_to_int(bits: np.ndarray) -> np.ndarray:
    """MSB-first integer value along the last axis."""
    bits = np.asarray(bits, dtype=np.int64)
    n = bits.shape[-1]
    weights = 1 << np.arange(n - 1, -1, -1, dtype=np.int64)
    return bits @ weights


def int_to_bits(values, n: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((values[..., None] >> shifts) & 1).astype(np.int8)


def digits_to_index(digits: np.ndarray, base: int) -> np.ndarray:
    """Most-significant-first base-``base`` digits along the last axis to an index."""
    digits = np.asarray(digits, dtype=np.int64)
    n = digits.shape[-1]
    return digits @ (base ** np.arange(n - 1, -1, -1, dtype=np.int64))


def index_to_digits(index, base: int, n: int) -> np.ndarray:
    index = np.asarray(index, dtype=np.int64)
    powers = base ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (index[..., None] // powers) % base


@dataclass(frozen=True)
class TransmitWord:
    """One frame's message: combination ``s`` plus per-user ``i`` and ``m``."""

    s: int
    i: tuple
    m: tuple
    bits: np.ndarray = field(repr=False, compare=False)


def split_frame_bits(bits: np.ndarray, config: SystemConfig):
    """Return ``(s_bits, spatial_bits, iq_bits)`` views of frame bit arrays.

    Shapes ``(..., bits_s)``, ``(..., K, bits_spatial)``, ``(..., K, n_streams, bits_sym)``.
    """
    bits = np.asarray(bits)
    if bits.shape[-1] != config.bits_per_frame:
        raise LengthMismatch(f"expected {config.bits_per_frame} bits, got {bits.shape[-1]}")
    lead = bits.shape[:-1]
    bs = config.bits_s
    users = bits[..., bs:].reshape(lead + (config.k, config.bits_user))
    spatial = users[..., :config.bits_spatial]
    iq = users[..., config.bits_spatial:].reshape(lead + (config.k, config.n_streams, config.bits_sym))
    return bits[..., :bs], spatial, iq


def encode_indices(bits: np.ndarray, config: SystemConfig):
    """Vectorized bits -> ``(s, i, positions)``.

    ``positions`` holds the PSK constellation position of every stream,
    shape ``(..., K, n_streams)``; ``m = digits_to_index(positions, M)``.
    """
    s_bits, spatial, iq = split_frame_bits(bits, config)
    s = bits_to_int(s_bits)
    i = bits_to_int(spatial)
    positions = inverse_gray(bits_to_int(iq))
    return s, i, positions


def user_bits(s, i, positions, config: SystemConfig) -> np.ndarray:
    """Vectorized per-user bit image of length ``eta`` from detected indices."""
    s = np.asarray(s)
    parts = [
        int_to_bits(s, config.bits_s),
        int_to_bits(i, config.bits_spatial),
        int_to_bits(gray(np.asarray(positions, dtype=np.int64)), config.bits_sym).reshape(
            s.shape + (config.n_streams * config.bits_sym,)),
    ]
    return np.concatenate(parts, axis=-1)


def frame_user_bits(bits: np.ndarray, config: SystemConfig, user: int) -> np.ndarray:
    """Per-user bit image (shared s bits + the user's own bits)."""
    bits = np.asarray(bits)
    bs, bu = config.bits_s, config.bits_user
    start = bs + user * bu
    return np.concatenate([bits[..., :bs], bits[..., start:start + bu]], axis=-1)


def encode_word(bits, config: SystemConfig) -> TransmitWord:
    bits = np.asarray(bits, dtype=np.int8)
    if bits.ndim != 1:
        raise LengthMismatch("encode_word takes a single frame bit vector")
    s, i, positions = encode_indices(bits, config)
    m = digits_to_index(positions, config.m)
    return TransmitWord(s=int(s), i=tuple(int(v) for v in i), m=tuple(int(v) for v in m), bits=bits)


def decode_word(word: TransmitWord, config: SystemConfig) -> np.ndarray:
    if len(word.i) != config.k or len(word.m) != config.k:
        raise LengthMismatch(f"word carries {len(word.i)} users, config has K={config.k}")
    positions = index_to_digits(np.array(word.m), config.m, config.n_streams)
    parts = [int_to_bits(word.s, config.bits_s)]
    for k in range(config.k):
        parts.append(int_to_bits(word.i[k], config.bits_spatial))
        parts.append(int_to_bits(gray(positions[k]), config.bits_sym).ravel())
    return np.concatenate(parts).astype(np.int8)


def spatial_pattern(i, n_r: int) -> np.ndarray:
    """Receive-spatial bits of DL pattern ``i``; bit ``r`` set means antenna ``r`` is selected."""
    return int_to_bits(i, n_r)
