import csv

import pytest

from dltrgsm.cli import EXIT_CONFIG, EXIT_OK, main, parse_grid
from dltrgsm.simulate import CSV_HEADER


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestGrid:
    @pytest.mark.parametrize("text, expected", [
        ("0:30:10", [0.0, 10.0, 20.0, 30.0]),
        ("1.5:3:0.5", [1.5, 2.0, 2.5, 3.0]),
        ("2,4,8", [2.0, 4.0, 8.0]),
        ("7.5", [7.5]),
    ])
    def test_parse(self, text, expected):
        assert parse_grid(text) == expected

    @pytest.mark.parametrize("text", ["1:2", "3:1:1", "0:1:0", "a,b"])
    def test_bad(self, text):
        from dltrgsm.config import ConfigError
        with pytest.raises(ConfigError):
            parse_grid(text)


class TestCommands:
    def test_ber_csv(self, tmp_path):
        out = tmp_path / "ber.csv"
        code = main(["ber", "--snr-db", "0:10:5", "--min-bit-errors", "30", "--max-frames", "300",
                     "--schemes", "DL_TR_GSM,MU_TR_GSM", "--out", str(out)])
        assert code == EXIT_OK
        rows = _rows(out)
        assert list(rows[0]) == CSV_HEADER
        assert len(rows) == 3 * 2 + 3
        assert {r["stop_reason"] for r in rows} <= {"min_bit_errors", "frame-capped"}

    def test_config_file_and_override(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("n_t = 32\nn_tact = 4\nk = 2\nn_r = 2\nm = 4\nsnr_db = 4\nseed = 9\n"
                       "min_bit_errors = 20\nmax_frames = 100\n")
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["ber", "--config", str(cfg), "--out", str(a)]) == EXIT_OK
        assert main(["ber", "--config", str(cfg), "--seed", "10", "--out", str(b)]) == EXIT_OK
        ra, rb = _rows(a), _rows(b)
        assert ra[0]["snr_db"] == "4.0" and len(ra) == 2
        assert ra != rb

    def test_deterministic_output(self, tmp_path):
        args = ["ber", "--snr-db", "3", "--min-bit-errors", "40", "--max-frames", "400"]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(args + ["--out", str(a)])
        main(args + ["--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_alpha_and_users(self, tmp_path):
        out = tmp_path / "alpha.csv"
        assert main(["alpha", "--alpha-grid", "2:4:2", "--snr-db", "10", "--max-frames", "50",
                     "--out", str(out)]) == EXIT_OK
        assert [r["alpha"] for r in _rows(out)] == ["2.0", "2.0", "4.0", "4.0"]
        out = tmp_path / "users.csv"
        assert main(["users", "--users", "2,4", "--snr-db", "10", "--max-frames", "20",
                     "--out", str(out)]) == EXIT_OK
        assert [r["K"] for r in _rows(out)] == ["2", "2", "4", "4"]

    def test_bound(self, capsys):
        assert main(["bound", "--snr-db", "20,30", "--channels", "5"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "snr_db,n0,bound,exceeds_one,channels" and len(lines) == 3

    def test_complexity(self, capsys):
        assert main(["complexity"]) == EXIT_OK
        assert capsys.readouterr().out.splitlines()[1].startswith("2,3712,30208,")

    def test_power(self, capsys):
        assert main(["power"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "DL_TR_GSM,2,720.0" in out and "MU_TR_GSM,4,1240.0" in out

    def test_rate(self, capsys):
        assert main(["rate", "--n-t", "2", "--n-tact", "1", "--k", "1", "--n-r", "1", "--m", "2"]) == EXIT_OK
        assert "eta=3" in capsys.readouterr().out

    @pytest.mark.parametrize("argv", [
        ["rate", "--n-tact", "3"],
        ["ber", "--alpha", "0.5", "--max-frames", "1"],
        ["alpha", "--alpha-grid", "0.5,2", "--max-frames", "1"],
        ["alpha", "--alpha-grid", "2,3", "--snr-db", "0:10:5", "--max-frames", "1"],
        ["bound", "--m", "16"],
        ["bound", "--scheme", "MU_TR_GSM", "--n-r", "4", "--n-ract", "2"],
        ["ber", "--schemes", "XYZ", "--max-frames", "1"],
        ["rate", "--config", "/nonexistent/file.cfg"],
    ])
    def test_config_errors_exit_2(self, argv, capsys):
        assert main(argv) == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("antennas = 3\n")
        assert main(["rate", "--config", str(cfg)]) == EXIT_CONFIG
