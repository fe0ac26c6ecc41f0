import json
import os

import numpy as np
import pytest

from nlslab.cli import main, read_config_file


def run_cli(*argv):
    return main(list(argv))


class TestGroundStateCommand:
    def test_d1_prints_central_value(self, capsys):
        code = run_cli("ground-state", "--d", "1", "--method", "petviashvili")
        out = capsys.readouterr().out
        assert code == 0
        assert "1.316" in out  # 3^(1/4) ~ 1.31607
        assert "residual" in out

    def test_both_methods_mass_agreement(self, capsys):
        code = run_cli("ground-state", "--d", "2")
        out = capsys.readouterr().out
        assert code == 0
        rel = float(out.strip().splitlines()[-1].split(":")[1])
        assert rel < 1e-5

    def test_missing_d_is_usage_error(self):
        assert run_cli("ground-state") == 2

    def test_invalid_d_is_usage_error(self):
        assert run_cli("ground-state", "--d", "9") == 2

    def test_run_directory_contents(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = run_cli("ground-state", "--d", "1", "--m", "2048",
                       "--method", "petviashvili", "--out", str(out))
        capsys.readouterr()
        assert code == 0
        names = sorted(os.listdir(out))
        assert names == ["Q_petviashvili.txt", "VERSION", "config.txt", "report.json"]
        assert (out / "VERSION").read_text().startswith("nlslab ")

    def test_target_miss_exit_code(self, capsys):
        # an aggressive target cannot be met: exit 1, not an exception
        code = run_cli("ground-state", "--d", "1", "--m", "2048",
                       "--method", "petviashvili", "--residual-target", "1e-30")
        capsys.readouterr()
        assert code == 1


class TestSpectralPropertyCommand:
    def test_identity_suite_all_below_threshold(self, capsys):
        code = run_cli("spectral-property", "--d", "3", "--identity-suite")
        out = capsys.readouterr().out
        assert code == 0
        residuals = [float(line.split()[-1]) for line in out.strip().splitlines()]
        assert len(residuals) == 5
        assert max(residuals) < 1e-5

    def test_constrained_positive(self, capsys):
        code = run_cli("spectral-property", "--d", "3", "--nodes", "256")
        out = capsys.readouterr().out
        assert code == 0
        val = float(out.splitlines()[0].split("=")[1].split()[0])
        assert val > 0.0

    def test_no_constraints_negative(self, capsys):
        code = run_cli("spectral-property", "--d", "3", "--nodes", "256",
                       "--no-constraints")
        out = capsys.readouterr().out
        assert code == 0
        val = float(out.splitlines()[0].split("=")[1].split()[0])
        assert val < 0.0


class TestEvolveCommand:
    def test_config_file_roundtrip(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("d = 2\nn = 128\nL = 16.0\npreset = s-explicit\n"
                       "t0 = -1.0\nt_end = -0.9\ndt = 2e-3\nmode = fixed\n"
                       "modulation = false\ndiag_stride = 20\n")
        parsed = read_config_file(cfg)
        assert parsed["preset"] == "s-explicit"
        out = tmp_path / "out"
        code = run_cli("evolve", "--config", str(cfg), "--out-dir", str(out))
        assert code == 0
        assert (out / "series.csv").exists()
        assert (out / "config.txt").exists()
        assert (out / "admissibility.json").exists()

    def test_flags_override_config(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("d = 2\nn = 128\npreset = s-explicit\nt0 = -1.0\n"
                       "t_end = -0.98\ndt = 2e-3\nmode = fixed\nmodulation = false\n")
        out1 = tmp_path / "a"
        code = run_cli("evolve", "--config", str(cfg), "--t-end", "-0.99",
                       "--out-dir", str(out1))
        capsys.readouterr()
        assert code == 0
        final_t = float((out1 / "series.csv").read_text().strip().splitlines()[-1].split(",")[0])
        assert final_t == pytest.approx(-0.99, abs=1e-9)

    def test_determinism_byte_identical(self, tmp_path, capsys):
        args = ["evolve", "--d", "2", "--n", "128", "--preset", "s-explicit",
                "--t0", "-1.0", "--t-end", "-0.95", "--dt", "2e-3",
                "--mode", "fixed", "--modulation", "false", "--seed", "11"]
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert run_cli(*args, "--out-dir", str(out1)) == 0
        assert run_cli(*args, "--out-dir", str(out2)) == 0
        capsys.readouterr()
        s1 = (out1 / "series.csv").read_bytes()
        s2 = (out2 / "series.csv").read_bytes()
        assert s1 == s2
        # config echo identical apart from the out_dir line
        c1 = [ln for ln in (out1 / "config.txt").read_text().splitlines()
              if not ln.startswith("out_dir")]
        c2 = [ln for ln in (out2 / "config.txt").read_text().splitlines()
              if not ln.startswith("out_dir")]
        assert c1 == c2

    def test_convergence_table(self, capsys):
        code = run_cli("evolve", "--preset", "s-explicit", "--d", "2",
                       "--n", "128", "--L", "16.0", "--convergence-table",
                       "--t0", "-1.0", "--t-end", "-0.9")
        out = capsys.readouterr().out
        assert code == 0
        assert "observed_order" in out


class TestLogLogFitCommand:
    def test_fit_synthetic_series(self, tmp_path, capsys):
        from nlslab.evolution import DiagnosticsSeries

        T = 1.0
        tt = T - np.logspace(-2, -8, 400)
        lam = np.sqrt(2 * np.pi * (T - tt) / np.log(np.abs(np.log(T - tt))))
        series = DiagnosticsSeries.from_arrays(tt, lam)
        path = tmp_path / "series.csv"
        series.to_csv(path)
        code = run_cli("loglog-fit", str(path))
        out = capsys.readouterr().out
        assert code == 0
        fit = json.loads(out)
        assert abs(fit["c_terminal"] - 2.5066) < 1e-3
        assert fit["label"] == "log-log"

    def test_insufficient_samples_refused(self, tmp_path, capsys):
        from nlslab.evolution import DiagnosticsSeries

        tt = 1.0 - np.logspace(-2, -4, 15)
        series = DiagnosticsSeries.from_arrays(tt, np.sqrt(1.0 - tt))
        path = tmp_path / "short.csv"
        series.to_csv(path)
        code = run_cli("loglog-fit", str(path))
        err = capsys.readouterr().err
        assert code == 1
        assert "refusing" in err

    def test_missing_file_is_usage_error(self, capsys):
        code = run_cli("loglog-fit", "/nonexistent/series.csv")
        capsys.readouterr()
        assert code == 2


class TestImethodSweepCommand:
    def test_commutator_s1_zero_column(self, tmp_path, capsys):
        out = tmp_path / "sweep"
        code = run_cli("imethod-sweep", "--kind", "commutator", "--d", "2",
                       "--n", "32", "--L", "0.8", "--s", "1.0",
                       "--N-list", "4,8,16", "--out", str(out))
        stdout = capsys.readouterr().out
        assert code == 0
        rows = (out / "sweep.csv").read_text().strip().splitlines()[1:]
        assert all(float(r.split(",")[1]) == 0.0 for r in rows)

    def test_norms_no_violations(self, tmp_path, capsys):
        out = tmp_path / "norms"
        code = run_cli("imethod-sweep", "--kind", "norms", "--d", "2",
                       "--n", "64", "--L", "8.0", "--s", "0.7",
                       "--N-list", "4", "--family-size", "12",
                       "--out", str(out))
        stdout = capsys.readouterr().out
        assert code == 0
        report = json.loads((out / "norms.json").read_text())
        assert report["violations"] == 0

    def test_unknown_kind_usage_error(self):
        assert run_cli("imethod-sweep", "--kind", "bogus") == 2

    def test_summary_records_slope_and_reference(self, tmp_path, capsys):
        out = tmp_path / "comm"
        code = run_cli("imethod-sweep", "--kind", "commutator", "--d", "2",
                       "--n", "64", "--L", "1.6", "--s", "0.8",
                       "--N-list", "8,16,32", "--out", str(out))
        capsys.readouterr()
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["slope"] < 0.0
        assert summary["reference_exponent"] == pytest.approx(-0.8)


class TestTopLevel:
    def test_version_flag(self, capsys):
        assert run_cli("--version") == 0
        assert "nlslab" in capsys.readouterr().out

    def test_no_command_is_usage_error(self):
        assert run_cli() == 2
