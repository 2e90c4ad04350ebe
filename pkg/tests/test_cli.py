import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from skm_lab import cli


def run_cli(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


class TestParsing:
    def test_problem_params(self):
        assert cli.parse_problem("lsq:n=2:m=4:seed=3") == ("lsq", {"n": 2, "m": 4, "seed": 3})

    @pytest.mark.parametrize("bad", ["lsq:n", "", "lsq:=3"])
    def test_problem_malformed(self, bad):
        with pytest.raises(cli.UsageError):
            cli.parse_problem(bad)

    def test_schedules(self):
        assert cli.parse_schedule("const:0.5", 16).level == 0.125
        assert cli.parse_schedule("power:0.5:0.75", None).a == 0.75
        assert cli.parse_schedule("fixed:0.3", None).lam == 0.3

    @pytest.mark.parametrize("bad", ["const", "power:0.5", "cosine:1", "const:x"])
    def test_schedule_malformed(self, bad):
        with pytest.raises((cli.UsageError, ValueError)):
            cli.parse_schedule(bad, 8)

    def test_fmt_round_trips(self):
        for v in (0.1, 1 / 3, 1e-300, -2.5e10):
            assert float(cli.fmt(v)) == v


class TestRun:
    def test_row_count_and_header(self, capsys):
        code, out, _ = run_cli(["run", "--problem", "sgd1d", "--schedule", "power:0.5:0.75", "--K", "16"], capsys)
        assert code == 0
        r = rows(out)
        assert r[0] == ["k", "x_0", "lambda"]
        assert len(r) == 18
        assert r[-1][2] == ""

    def test_identity_residual_column_zero(self, capsys):
        code, out, _ = run_cli(["run", "--problem", "identity", "--K", "10", "--record-residual"], capsys)
        assert code == 0
        r = rows(out)
        assert r[0][-1] == "residual"
        assert all(float(row[-1]) == 0.0 for row in r[1:])

    def test_byte_identical_rerun(self, tmp_path, capsys):
        args = ["run", "--problem", "stos-eqls", "--schedule", "power:0.5:0.75", "--K", "100", "--seed", "5"]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run_cli(args + ["--out", str(a)], capsys)[0] == 0
        assert run_cli(args + ["--out", str(b)], capsys)[0] == 0
        assert a.read_bytes() == b.read_bytes()

    def test_matches_library(self, capsys):
        from skm_lab import catalog
        from skm_lab.skm import PowerDecay, run_skm

        _, out, _ = run_cli(["run", "--problem", "sgd1d", "--schedule", "power:0.5:0.75", "--K", "20", "--seed", "3"], capsys)
        traj = run_skm(catalog.sgd1d().op, PowerDecay(0.5, 0.75), [1.0], 20, 3)
        got = np.array([float(row[1]) for row in rows(out)[1:]])
        np.testing.assert_array_equal(got, traj.iterates[:, 0])

    def test_x0_override(self, capsys):
        _, out, _ = run_cli(["run", "--problem", "identity", "--K", "2", "--x0", "3,4"], capsys)
        assert rows(out)[1][1:3] == ["3", "4"]

    def test_x0_dimension(self, capsys):
        assert run_cli(["run", "--problem", "identity", "--K", "2", "--x0", "3"], capsys)[0] == 2

    def test_missing_K(self, capsys):
        assert run_cli(["run"], capsys)[0] == 2

    def test_unknown_problem(self, capsys):
        code, _, err = run_cli(["run", "--problem", "nope", "--K", "3"], capsys)
        assert code == 2 and "unknown problem" in err

    def test_no_abbreviation(self, capsys):
        assert run_cli(["run", "--Ks", "3"], capsys)[0] == 2

    def test_seed_from_environment(self, capsys, monkeypatch):
        base = ["run", "--problem", "sgd1d", "--K", "30"]
        monkeypatch.setenv("SKMLAB_SEED", "11")
        env_out = run_cli(base, capsys)[1]
        monkeypatch.delenv("SKMLAB_SEED")
        flag_out = run_cli(base + ["--seed", "11"], capsys)[1]
        zero_out = run_cli(base, capsys)[1]
        assert env_out == flag_out != zero_out

    def test_bad_seed_environment(self, capsys, monkeypatch):
        monkeypatch.setenv("SKMLAB_SEED", "abc")
        assert run_cli(["run", "--K", "3"], capsys)[0] == 2

    def test_config_file_and_override(self, tmp_path, capsys):
        cfg = tmp_path / "c.conf"
        cfg.write_text("# comment\nproblem = translation\nK = 5\nseed = 2\nrecord-residual = true\n")
        _, out, _ = run_cli(["run", "--config", str(cfg)], capsys)
        r = rows(out)
        assert len(r) == 7 and r[0][-1] == "residual"
        _, out, _ = run_cli(["run", "--config", str(cfg), "--K", "3"], capsys)
        assert len(rows(out)) == 5

    def test_bad_config(self, tmp_path, capsys):
        cfg = tmp_path / "c.conf"
        cfg.write_text("problem\n")
        assert run_cli(["run", "--config", str(cfg)], capsys)[0] == 2

    def test_missing_config(self, tmp_path, capsys):
        assert run_cli(["run", "--config", str(tmp_path / "none")], capsys)[0] == 2


class TestEnumerate:
    def test_negation(self, capsys):
        code, out, _ = run_cli(["enumerate", "--problem", "negation", "--schedule", "fixed:0.5", "--K", "2"], capsys)
        doc = json.loads(out)
        assert code == 0
        assert doc["expectations"]["output_residual_sq"] == pytest.approx(3.0)
        assert doc["bound"] == pytest.approx(18.0)

    def test_budget_exit(self, capsys):
        code, _, err = run_cli(["enumerate", "--K", "20", "--budget", "10"], capsys)
        assert code == 4 and "1048576" in err


class TestVerify:
    def test_pass(self, capsys):
        code, out, _ = run_cli(["verify", "--suite", "bound"], capsys)
        doc = json.loads(out)
        assert code == 0 and doc["pass"] is True
        assert {"name", "min_margin", "tolerance", "pass", "cases"} <= set(doc["checks"][0])

    def test_failure_exit(self, capsys, monkeypatch):
        from skm_lab.reports import InequalityReport

        monkeypatch.setattr(cli, "run_suite", lambda name, seed: [InequalityReport("forced", [-1.0], 0.0)])
        code, out, _ = run_cli(["verify", "--suite", "lemmas"], capsys)
        assert code == 1 and json.loads(out)["pass"] is False

    def test_unknown_suite(self, capsys):
        assert run_cli(["verify", "--suite", "nope"], capsys)[0] == 2


class TestRates:
    def test_output(self, tmp_path, capsys):
        out = tmp_path / "r.csv"
        code, stdout, _ = run_cli(["rates", "--Ks", "16,64,256", "--reps", "30", "--out", str(out)], capsys)
        assert code == 0
        r = rows(out.read_text())
        assert r[0] == ["K", "mean_residual", "stderr", "bound"]
        assert [int(x[0]) for x in r[1:]] == [16, 64, 256]
        assert stdout.startswith("slope=")
        for _, m, se, b in r[1:]:
            assert float(m) <= float(b) + 3 * float(se)

    @pytest.mark.parametrize(
        "argv",
        [
            ["rates", "--Ks", "16,64"],
            ["rates", "--Ks", "16,64,256", "--reps", "10"],
            ["rates", "--Ks", "16,64,256", "--schedule", "power:0.5:0.75"],
            ["rates", "--Ks", "16,a,256"],
        ],
    )
    def test_usage_errors(self, argv, capsys):
        assert run_cli(argv, capsys)[0] == 2


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "skm_lab.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "skm-lab" in res.stdout
