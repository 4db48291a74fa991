import math

import numpy as np
import pytest

from dltrgsm.config import DL, MU, StoppingRule, SystemConfig, validate_config
from dltrgsm.simulate import (CSV_HEADER, STOP_CAP, STOP_ERRORS, BerRecord, counterpart,
                              frame_errors, read_results, records_to_csv, run_ber_point,
                              run_ber_points, run_frame, sweep, users_config, write_results)

CFG = validate_config(SystemConfig())
MU_CFG = validate_config(SystemConfig(scheme=MU, n_r=4, n_ract=2))


class TestRunFrame:
    @pytest.mark.parametrize("cfg", [CFG, MU_CFG, MU_CFG.with_(mu_detector="active")],
                             ids=["dl", "mu-genie", "mu-active"])
    def test_noiseless(self, cfg):
        for j in range(10):
            assert set(run_frame(cfg.with_(snr_db=math.inf), j).values()) == {0}

    def test_deterministic(self):
        cfg = CFG.with_(snr_db=5.0)
        assert [run_frame(cfg, j) for j in range(5)] == [run_frame(cfg, j) for j in range(5)]

    def test_seed_changes_draws(self):
        a = [run_frame(CFG.with_(snr_db=0.0, seed=1), j)["ml"] for j in range(30)]
        b = [run_frame(CFG.with_(snr_db=0.0, seed=2), j)["ml"] for j in range(30)]
        assert a != b

    def test_detectors_agree_at_30db(self):
        errs = frame_errors([CFG.with_(snr_db=30.0)], range(2000))[0]
        agree = np.mean(errs["ml"] == errs["separate"])
        assert agree >= 0.99

    def test_block_matches_single_frames(self):
        cfg = CFG.with_(snr_db=3.0)
        block = frame_errors([cfg], range(12))[0]["ml"]
        assert block.tolist() == [run_frame(cfg, j)["ml"] for j in range(12)]


class TestRunBerPoint:
    def test_frame_cap(self):
        rec = run_ber_point(CFG.with_(snr_db=60.0), StoppingRule(200, 10))
        assert rec.stop_reason == STOP_CAP and rec.frames == 10 and rec.bits == 10 * CFG.eta

    def test_min_errors_stop_is_exact(self):
        rec = run_ber_point(CFG.with_(snr_db=0.0), StoppingRule(50, 10_000))
        assert rec.stop_reason == STOP_ERRORS and rec.bit_errors >= 50
        # the last frame is the one that crossed the threshold
        per_frame = frame_errors([CFG.with_(snr_db=0.0)], range(rec.frames))[0]["ml"]
        assert per_frame.sum() == rec.bit_errors and per_frame[:-1].sum() < 50

    @pytest.mark.parametrize("cfg", [CFG, MU_CFG], ids=["dl", "mu"])
    def test_random_guessing_limit(self, cfg):
        rec = run_ber_point(cfg.with_(snr_db=-60.0), StoppingRule(4000, 100_000))
        assert abs(rec.ber - 0.5) <= 3 * math.sqrt(0.25 / rec.bits)

    def test_block_size_independent(self):
        cfgs = [CFG.with_(snr_db=s) for s in (5.0, 10.0)]
        stop = StoppingRule(120, 3000)
        assert run_ber_points(cfgs, stop, block=16) == run_ber_points(cfgs, stop, block=300)

    def test_worker_count_independent(self):
        cfgs = [CFG.with_(snr_db=s) for s in (5.0, 12.0)]
        stop = StoppingRule(150, 4000)
        assert run_ber_points(cfgs, stop, workers=1) == run_ber_points(cfgs, stop, workers=2)

    def test_conservation_and_range(self):
        for rec in run_ber_points([CFG.with_(snr_db=s) for s in (0.0, 10.0)], StoppingRule(100, 2000)):
            assert rec.bits == rec.frames * CFG.eta
            assert 0 <= rec.bit_errors <= rec.bits
            assert 0 <= rec.ber <= 0.5 + 3 * rec.std_error

    def test_unknown_detector(self):
        with pytest.raises(ValueError):
            run_ber_point(MU_CFG, StoppingRule(1, 1), detector="separate")


class TestSweep:
    def test_users_axis_geometry(self):
        derived = [users_config(CFG, k) for k in (2, 4, 8)]
        assert [(c.n_t, c.n_tact, c.n_r) for c in derived] == [(16, 4, 2), (32, 8, 2), (64, 16, 2)]

    def test_counterpart_pairs_rates(self):
        mu = counterpart(CFG, MU)
        assert (mu.n_r, mu.n_ract) == (4, 2) and mu.eta == CFG.eta
        assert counterpart(mu, DL) == CFG

    def test_single_snr_point_equals_run_ber_point(self):
        stop = StoppingRule(100, 2000)
        cfg = CFG.with_(snr_db=8.0)
        recs = sweep(cfg, "snr", [8.0], stop)
        assert recs[0] == run_ber_point(cfg, stop, "ml")
        assert recs[1] == run_ber_point(cfg, stop, "separate")

    def test_row_count_and_order(self):
        recs = sweep(CFG, "snr", [0.0, 4.0, 8.0], StoppingRule(20, 200), schemes=[DL, MU])
        # DL has two detectors, MU one
        assert len(recs) == 3 * 2 + 3 * 1
        assert [r.scheme for r in recs] == [DL] * 6 + [MU] * 3
        assert [r.snr_db for r in recs[:6]] == [0.0, 0.0, 4.0, 4.0, 8.0, 8.0]

    def test_alpha_axis(self):
        recs = sweep(CFG, "alpha", [2.0, 6.0], StoppingRule(20, 200))
        assert [r.alpha for r in recs] == [2.0, 2.0, 6.0, 6.0]

    def test_monotone_in_snr(self):
        recs = [r for r in sweep(CFG, "snr", [0.0, 5.0, 10.0, 15.0], StoppingRule(300, 20_000))
                if r.detector == "ml"]
        for lo, hi in zip(recs, recs[1:]):
            assert hi.ber <= lo.ber + 3 * math.hypot(lo.std_error, hi.std_error)

    @pytest.mark.parametrize("axis, grid", [("snr", []), ("bogus", [1.0])])
    def test_bad_sweeps(self, axis, grid):
        with pytest.raises(ValueError):
            sweep(CFG, axis, grid, StoppingRule(1, 1))


class TestPersistence:
    def test_empty_is_header_only(self, tmp_path):
        path = write_results([], tmp_path / "empty.csv")
        assert path.read_text() == ",".join(CSV_HEADER) + "\n"

    def test_byte_identical_rerun(self, tmp_path):
        stop = StoppingRule(50, 500)
        a = write_results(sweep(CFG, "snr", [2.0, 6.0], stop, schemes=[DL, MU]), tmp_path / "a.csv")
        b = write_results(sweep(CFG, "snr", [2.0, 6.0], stop, schemes=[DL, MU]), tmp_path / "b.csv")
        assert a.read_bytes() == b.read_bytes()
        rows = read_results(a)
        assert len(rows) == 2 * 2 + 2 * 1
        assert list(rows[0]) == CSV_HEADER

    def test_no_temp_files_left(self, tmp_path):
        write_results([BerRecord(DL, "ml", 1.0, 2.0, 2, 10, 90, 3, STOP_CAP)], tmp_path / "r.csv")
        assert [p.name for p in tmp_path.iterdir()] == ["r.csv"]

    def test_float_round_trip(self):
        alpha = 5.828427124746191
        rec = BerRecord(DL, "ml", 22.5, alpha, 2, 7, 63, 1, STOP_CAP)
        row = records_to_csv([rec]).splitlines()[1].split(",")
        assert float(row[3]) == alpha and float(row[8]) == 1 / 63
