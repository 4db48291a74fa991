"""Random channel/noise generation and SNR to noise-density conversion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig

_MASK64 = (1 << 64) - 1


def frame_rng(seed: int, frame_index: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for one frame.

    Philox keyed by ``(seed, frame_index)``; ``stream`` selects an independent
    counter range, so ``(seed, frame_index, stream)`` fully determines the draws.
    """
    key = np.array([seed & _MASK64, frame_index & _MASK64], dtype=np.uint64)
    counter = np.array([0, 0, 0, stream & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian with the given total variance."""
    z = rng.standard_normal(tuple(shape) + (2,))
    return np.sqrt(variance / 2.0) * (z[..., 0] + 1j * z[..., 1])


@dataclass(frozen=True)
class ChannelRealization:
    H: np.ndarray
    n_r: int

    def user(self, k: int) -> np.ndarray:
        return self.H[k * self.n_r:(k + 1) * self.n_r]


def sample_channel(config: SystemConfig, rng: np.random.Generator) -> ChannelRealization:
    """i.i.d. Rayleigh block-fading draw of shape ``(K*N_r, N_t)``."""
    H = complex_normal(rng, (config.k * config.n_r, config.n_t))
    return ChannelRealization(H=H, n_r=config.n_r)


def sample_noise(length: int, n0: float, rng: np.random.Generator) -> np.ndarray:
    """AWGN vector with ``CN(0, n0)`` entries; ``n0 == 0`` gives exact zeros."""
    if n0 < 0:
        raise ValueError(f"noise density must be non-negative, got {n0}")
    z = complex_normal(rng, (length,))
    if n0 == 0:
        return np.zeros(length, dtype=complex)
    return np.sqrt(n0) * z


@dataclass(frozen=True)
class NoiseSpec:
    n0: float


def noise_density_from_snr(snr_db: float, config: SystemConfig) -> NoiseSpec:
    """Noise density for the configured SNR reference.

    ``precoder_input``: the precoder input symbols have unit average power per
    stream. ``transmit``: the scaling coefficient normalizes the average
    transmit power per IQ stream to one. Both references are unit power, so
    they only differ in which quantity the SNR is quoted against.
    """
    reference_power = 1.0
    return NoiseSpec(n0=reference_power * 10.0 ** (-snr_db / 10.0))
