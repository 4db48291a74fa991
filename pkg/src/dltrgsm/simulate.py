"""Monte Carlo BER engine and sweeps.

Every frame draws its bits, channel and unit-variance noise from its own
counter-based generator keyed by ``(seed, frame_index)``, in that order.
Frames are evaluated in blocks for speed, but each record's stopping point is
resolved at single-frame granularity, so results do not depend on the block
size or on the number of worker processes. Sweep points reuse the same frames
(common random numbers), which keeps BER curves smooth.
"""

from __future__ import annotations

import csv
import io
import logging
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .analysis import user_scaling_configs
from .channel import complex_normal, frame_rng, noise_density_from_snr
from .config import (DL, MU, StoppingRule, SystemConfig, encode_indices, frame_user_bits,
                     psk_alphabet, user_bits, validate_config)
from .detect import ml_detect_dl, ml_detect_mu, separate_detect
from .precoder import build_dl_cache, build_mu_cache, receive, transmit_dl, transmit_mu

log = logging.getLogger(__name__)

DETECTORS = {DL: ("ml", "separate"), MU: ("ml",)}
SCHEME_STREAM = {DL: 0, MU: 1}
REDRAW_STREAM = 1 << 32
MEASURED_USER = 0

CSV_HEADER = ["scheme", "detector", "snr_db", "alpha", "K", "frames", "bits", "bit_errors",
              "ber", "stop_reason"]
STOP_ERRORS = "min_bit_errors"
STOP_CAP = "frame-capped"


@dataclass(frozen=True)
class BerRecord:
    scheme: str
    detector: str
    snr_db: float
    alpha: float
    K: int
    frames: int
    bits: int
    bit_errors: int
    stop_reason: str

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits if self.bits else float("nan")

    @property
    def std_error(self) -> float:
        """Binomial standard error of the BER estimate."""
        if not self.bits:
            return float("nan")
        p = self.ber
        return float(np.sqrt(max(p * (1 - p), 0.0) / self.bits))


def geometry_key(config: SystemConfig) -> tuple:
    return (config.scheme, config.n_t, config.n_tact, config.k, config.n_r, config.n_ract,
            config.m, config.seed)


# ---- frame evaluation -----------------------------------------------------------------

def _draw(config: SystemConfig, frame_index: int, attempt: int):
    stream = SCHEME_STREAM[config.scheme] + attempt * REDRAW_STREAM
    rng = frame_rng(config.seed, frame_index, stream)
    bits = rng.integers(0, 2, config.bits_per_frame, dtype=np.int8)
    H = complex_normal(rng, (config.k * config.n_r, config.n_t))
    noise = complex_normal(rng, (config.k * config.n_r,))
    return bits, H, noise


def _build_cache(config, H, i):
    if config.is_dl:
        return build_dl_cache(H, config, check=False)
    return build_mu_cache(H, config, i, user=MEASURED_USER, check=False)


def draw_frames(config: SystemConfig, frame_indices: Sequence[int], attempt: int = 0):
    """Draw ``(bits, H, unit_noise)`` for a block of frames."""
    draws = [_draw(config, f, attempt) for f in frame_indices]
    return tuple(np.stack(part) for part in zip(*draws))


def _valid_frames(config: SystemConfig, frame_indices: Sequence[int]):
    """Frame draws plus the precoder cache built for them.

    Frames whose channel yields a degenerate precoder (probability zero under
    the fading model) are redrawn from a fresh stream of the same frame.
    """
    frame_indices = list(frame_indices)
    bits, H, noise = draw_frames(config, frame_indices)
    for attempt in range(1, 17):
        _, i, _ = encode_indices(bits, config)
        cache = _build_cache(config, H, i)
        bad = np.flatnonzero(cache.invalid)
        if bad.size == 0:
            return bits, H, noise, cache
        log.warning("redrawing %d degenerate frame(s)", bad.size)
        for j in bad:
            bits[j], H[j], noise[j] = _draw(config, frame_indices[j], attempt)
    raise RuntimeError("could not draw a non-degenerate channel")


def detect_mu(y, cache, config: SystemConfig, x_tilde):
    """Dispatch the configured MU receiver model."""
    if config.mu_detector == "active":
        return ml_detect_mu(y, cache, config, rows="active")
    known = x_tilde if config.mu_detector == "genie" else None
    return ml_detect_mu(y, cache, config, x_tilde=known)


def frame_errors(configs: Sequence[SystemConfig], frame_indices: Sequence[int],
                 wanted: Optional[Sequence[Sequence[str]]] = None) -> list[dict[str, np.ndarray]]:
    """Per-frame bit errors of the measured user for each config variant.

    All ``configs`` must share the same geometry (same frames); they may
    differ in SNR, power ratio and scaling. Returns one ``{detector: errors}``
    dict per variant.
    """
    base = configs[0]
    if any(geometry_key(c) != geometry_key(base) for c in configs):
        raise ValueError("variants in one evaluation must share scheme, antennas, M and seed")
    if wanted is None:
        wanted = [DETECTORS[c.scheme] for c in configs]
    bits, H, unit_noise, first_cache = _valid_frames(base, frame_indices)
    s, i, positions = encode_indices(bits, base)
    truth = frame_user_bits(bits, base, MEASURED_USER)
    x_tilde = psk_alphabet(base.m)[positions].reshape(positions.shape[0], -1)

    caches = {base.scaling: first_cache}
    out = []
    for cfg, dets in zip(configs, wanted):
        if cfg.scaling not in caches:
            caches[cfg.scaling] = _build_cache(cfg, H, i)
        cache = caches[cfg.scaling]
        n0 = noise_density_from_snr(cfg.snr_db, cfg).n0
        if cfg.is_dl:
            x = transmit_dl(s, i, positions, cache, cfg)
        else:
            x = transmit_mu(s, positions, cache, cfg)
        y = receive(H, x, np.sqrt(n0) * unit_noise, cfg.n_r)[:, MEASURED_USER]
        result = {}
        for det in dets:
            if cfg.is_dl:
                fn = ml_detect_dl if det == "ml" else separate_detect
                r = fn(y, cache, cfg, user=MEASURED_USER)
            else:
                r = detect_mu(y, cache, cfg, x_tilde)
            got = user_bits(r.s, r.i, r.positions, cfg)
            result[det] = np.count_nonzero(got != truth, axis=-1)
        out.append(result)
    return out


def run_frame(config: SystemConfig, frame_index: int) -> dict[str, int]:
    """Bit errors of every detector of the scheme for a single frame."""
    errs = frame_errors([config], [frame_index])[0]
    return {det: int(e[0]) for det, e in errs.items()}


# ---- BER estimation --------------------------------------------------------------------

def _block_size(config: SystemConfig) -> int:
    hyp = config.n_tcomb * config.n_patterns * config.m**config.n_streams * config.n_r
    if not config.is_dl:
        hyp *= config.k * config.n_ract
    return int(np.clip(2**21 // hyp, 16, 1024))


def _eval_block(args):
    configs, start, stop, wanted = args
    return frame_errors(configs, range(start, stop), wanted)


def run_ber_points(configs: Sequence[SystemConfig], stopping: StoppingRule = StoppingRule(),
                   detectors: Optional[Sequence[str]] = None, workers: int = 1,
                   block: Optional[int] = None) -> list[BerRecord]:
    """BER records for several variants of one geometry on shared frames.

    Returns records variant-major, detector-minor. Each record stops on its own
    once it has ``min_bit_errors`` errors or hits ``max_frames``.
    """
    configs = [validate_config(c) for c in configs]
    base = configs[0]
    dets = list(detectors or DETECTORS[base.scheme])
    for d in dets:
        if d not in DETECTORS[base.scheme]:
            raise ValueError(f"detector {d!r} not available for {base.scheme}")
    block = block or _block_size(base)
    eta = base.eta
    n = len(configs)
    frames = np.zeros((n, len(dets)), dtype=np.int64)
    errors = np.zeros((n, len(dets)), dtype=np.int64)
    done = np.zeros((n, len(dets)), dtype=bool)

    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        start = 0
        while not done.all() and start < stopping.max_frames:
            live = [v for v in range(n) if not done[v].all()]
            wanted = [[d for j, d in enumerate(dets) if not done[v, j]] for v in live]
            jobs = []
            for _ in range(workers):
                if start >= stopping.max_frames:
                    break
                stop = min(start + block, stopping.max_frames)
                jobs.append(([configs[v] for v in live], start, stop, wanted))
                start = stop
            results = pool.map(_eval_block, jobs) if pool else map(_eval_block, jobs)
            for res in results:
                for v, per_det in zip(live, res):
                    for j, d in enumerate(dets):
                        if done[v, j] or d not in per_det:
                            continue
                        cum = errors[v, j] + np.cumsum(per_det[d])
                        hit = np.flatnonzero(cum >= stopping.min_bit_errors)
                        if hit.size:
                            frames[v, j] += hit[0] + 1
                            errors[v, j] = cum[hit[0]]
                            done[v, j] = True
                        else:
                            frames[v, j] += len(cum)
                            errors[v, j] = cum[-1]
    finally:
        if pool:
            pool.shutdown()

    records = []
    for v, cfg in enumerate(configs):
        for j, d in enumerate(dets):
            records.append(BerRecord(
                scheme=cfg.scheme, detector=d, snr_db=float(cfg.snr_db), alpha=float(cfg.alpha),
                K=cfg.k, frames=int(frames[v, j]), bits=int(frames[v, j]) * eta,
                bit_errors=int(errors[v, j]),
                stop_reason=STOP_ERRORS if done[v, j] else STOP_CAP))
    return records


def run_ber_point(config: SystemConfig, stopping: StoppingRule = StoppingRule(),
                  detector: str = "ml", workers: int = 1) -> BerRecord:
    return run_ber_points([config], stopping, [detector], workers)[0]


# ---- sweeps ---------------------------------------------------------------------------

def counterpart(config: SystemConfig, scheme: str) -> SystemConfig:
    """The configuration of ``scheme`` paired with ``config`` at the same data rate.

    A DL user with ``N_r`` antennas pairs with an MU user that has ``2 N_r``
    antennas of which ``N_r`` are active.
    """
    if scheme == config.scheme:
        return config
    if scheme == MU:
        return validate_config(replace(config, scheme=MU, n_r=2 * config.n_r, n_ract=config.n_r))
    return validate_config(replace(config, scheme=DL, n_r=config.n_ract, n_ract=None))


def users_config(config: SystemConfig, k: int) -> SystemConfig:
    """Re-derive ``config`` for ``k`` users with ``N_tact = 2K`` and ``N_t = 8K``."""
    dl, mu = user_scaling_configs(k)
    geom = dl if config.is_dl else mu
    return validate_config(replace(config, n_t=geom.n_t, n_tact=geom.n_tact, k=k,
                                   n_r=geom.n_r, n_ract=geom.n_ract))


def sweep(config: SystemConfig, axis: str, grid: Iterable[float],
          stopping: StoppingRule = StoppingRule(), schemes: Optional[Sequence[str]] = None,
          workers: int = 1) -> list[BerRecord]:
    """One record per grid point per detector per scheme, scheme-major."""
    grid = list(grid)
    if not grid:
        raise ValueError("empty sweep grid")
    config = validate_config(config)
    records = []
    for scheme in schemes or [config.scheme]:
        cfg = counterpart(config, scheme)
        if axis == "snr":
            records += run_ber_points([cfg.with_(snr_db=float(g)) for g in grid], stopping,
                                      workers=workers)
        elif axis == "alpha":
            records += run_ber_points([cfg.with_(alpha=float(g)) for g in grid], stopping,
                                      workers=workers)
        elif axis == "users":
            for k in grid:
                records += run_ber_points([users_config(cfg, int(k))], stopping, workers=workers)
        else:
            raise ValueError(f"unknown sweep axis {axis!r}")
        log.info("finished %s sweep over %s for %s", axis, grid, scheme)
    return records


# ---- persistence ------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def records_to_csv(records: Iterable[BerRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([r.scheme, r.detector, _fmt(r.snr_db), _fmt(r.alpha), r.K, r.frames, r.bits,
                    r.bit_errors, _fmt(r.ber), r.stop_reason])
    return buf.getvalue()


def write_results(records: Iterable[BerRecord], path) -> Path:
    """Write records as CSV atomically (temp file in the target directory + rename)."""
    path = Path(path)
    text = records_to_csv(records)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_results(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
