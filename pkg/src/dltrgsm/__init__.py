"""Dual-layered transmit/receive generalized spatial modulation for multiuser MIMO.

Link-level simulator for DL-TR-GSM and the MU-TR-GSM benchmark: bit mapping,
block-diagonalizing precoders, ML and separate detectors, closed-form
analytics and a Monte Carlo BER harness.
"""

from .config import (DL, MU, ConfigError, ConstraintViolation, InvalidAlpha, StoppingRule,
                     SystemConfig, TransmitWord, data_rate, decode_word, encode_word,
                     load_config, num_receive_combinations, num_transmit_combinations,
                     optimal_alpha, power_levels_from_alpha, validate_config)
from .channel import frame_rng, noise_density_from_snr, sample_channel, sample_noise
from .precoder import (RankDeficient, SingularGram, build_dl_cache, build_mu_cache,
                       build_precoder, receive, scaling_coefficient, svd_decompose, transmit)
from .detect import ml_detect_dl, ml_detect_mu, separate_detect
from .analysis import (bep_union_bound, complexity_dl, complexity_mu, pep, pep_iq_max,
                       pep_rsp_max, q_function, receive_power)
from .simulate import BerRecord, run_ber_point, run_frame, sweep, write_results

__version__ = "0.1.0"

__all__ = [
    "DL", "MU", "ConfigError", "ConstraintViolation", "InvalidAlpha", "StoppingRule",
    "SystemConfig", "TransmitWord", "data_rate", "decode_word", "encode_word", "load_config",
    "num_receive_combinations", "num_transmit_combinations", "optimal_alpha",
    "power_levels_from_alpha", "validate_config", "frame_rng", "noise_density_from_snr",
    "sample_channel", "sample_noise", "RankDeficient", "SingularGram", "build_dl_cache",
    "build_mu_cache", "build_precoder", "receive", "scaling_coefficient", "svd_decompose",
    "transmit", "ml_detect_dl", "ml_detect_mu", "separate_detect", "bep_union_bound",
    "complexity_dl", "complexity_mu", "pep", "pep_iq_max", "pep_rsp_max", "q_function",
    "receive_power", "BerRecord", "run_ber_point", "run_frame", "sweep", "write_results",
]
