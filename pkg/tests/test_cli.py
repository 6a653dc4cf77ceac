"""End-to-end runs of the command-line front end.

Exit-code contract: 0 success, 2 usage error, 3 fit non-convergence,
4 I/O error. Every run goes to a temp directory; nothing touches the cwd.
"""

import re
import subprocess
import sys

import numpy as np
import pytest

from nvbath import bath_model, cli, datasets

PROVENANCE = re.compile(r"^# nvbath \S+ config_sha256=[0-9a-f]{12}( seed=-?\d+)?$")


def _rows(path, columns):
    out = []
    with open(path) as fh:
        lines = [l.rstrip("\n") for l in fh if l.strip()]
    data = [l for l in lines if not l.startswith("#")]
    assert data[0] == columns
    for line in data[1:]:
        out.append([float(v) for v in line.split(",")])
    return lines[0], out


class TestPolarization:
    def test_table_values(self, tmp_path):
        rc = cli.main(
            [
                "--outdir",
                str(tmp_path),
                "polarization",
                "--temps",
                "2,11.51818337607893,1000000",
            ]
        )
        assert rc == 0
        first, rows = _rows(
            tmp_path / "polarization.csv",
            "temperature_K,polarization,flip_flop_factor",
        )
        assert PROVENANCE.match(first)
        assert rows[0][1] == pytest.approx(0.9937118823841826, rel=1e-12)
        assert rows[1][1] == pytest.approx(0.46211715726000974, rel=1e-12)
        assert rows[2][1] < 1e-5
        for _, p, ff in rows:
            assert ff == pytest.approx((1.0 - p * p) / 4.0, abs=1e-15)

    def test_range_grid_size(self, tmp_path):
        rc = cli.main(
            ["--outdir", str(tmp_path), "polarization", "--temps", "2:300:log:7"]
        )
        assert rc == 0
        _, rows = _rows(
            tmp_path / "polarization.csv",
            "temperature_K,polarization,flip_flop_factor",
        )
        assert len(rows) == 7
        assert rows[0][0] == pytest.approx(2.0)
        assert rows[-1][0] == pytest.approx(300.0)

    def test_bad_ranges_exit_2(self, tmp_path):
        base = ["--outdir", str(tmp_path), "polarization", "--temps"]
        assert cli.main(base + ["5:1:log"]) == 2
        assert cli.main(base + ["1:10:cubic"]) == 2
        assert cli.main(base + ["1:10"]) == 2
        assert cli.main(base + ["0,-3"]) == 2
        assert cli.main(base + ["warm"]) == 2


class TestSpectrum:
    def test_default_run_has_five_peaks(self, tmp_path):
        rc = cli.main(["--outdir", str(tmp_path), "spectrum"])
        assert rc == 0
        first, rows = _rows(
            tmp_path / "peaks.csv", "center_field_T,pp_width_T,pp_amplitude"
        )
        assert PROVENANCE.match(first)
        assert len(rows) == 5
        spectrum_text = (tmp_path / "spectrum.csv").read_text()
        assert "population_N=1" in spectrum_text

    def test_nv_only_config(self, tmp_path):
        config = tmp_path / "nv.ini"
        config.write_text("[populations]\nn = 0\nnv = 1\n")
        rc = cli.main(
            ["--outdir", str(tmp_path), "spectrum", "--config", str(config)]
        )
        assert rc == 0
        _, rows = _rows(
            tmp_path / "peaks.csv", "center_field_T,pp_width_T,pp_amplitude"
        )
        assert len(rows) == 2

    def test_bad_configs_exit_2(self, tmp_path):
        empty_pop = tmp_path / "a.ini"
        empty_pop.write_text("[populations]\nn = 0\nnv = 0\n")
        unknown_key = tmp_path / "b.ini"
        unknown_key.write_text("[spectrum]\nfield_units = mT\n")
        bad_value = tmp_path / "c.ini"
        bad_value.write_text("[spectrum]\ntemperature_k = warm\n")
        bad_syntax = tmp_path / "d.ini"
        bad_syntax.write_text("temperature_k = 300\n")  # key before any section
        unknown_section = tmp_path / "e.ini"
        unknown_section.write_text("[sample]\nx = 1\n")
        for config in (empty_pop, unknown_key, bad_value, bad_syntax, unknown_section):
            rc = cli.main(
                ["--outdir", str(tmp_path), "spectrum", "--config", str(config)]
            )
            assert rc == 2, config.name


class TestSimulate:
    ARGS = [
        "simulate",
        "--sources",
        "10",
        "--realizations",
        "40",
        "--tau-points",
        "9",
        "--tau-max-s",
        "2e-5",
        "--seed",
        "5",
    ]

    def test_seed_reruns_byte_identical(self, tmp_path):
        for name in ("a.csv", "b.csv"):
            rc = cli.main(
                ["--outdir", str(tmp_path)] + self.ARGS + ["--output", name]
            )
            assert rc == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_thread_count_byte_identical(self, tmp_path):
        for name, threads in (("t1.csv", "1"), ("t4.csv", "4")):
            rc = cli.main(
                ["--outdir", str(tmp_path)]
                + self.ARGS
                + ["--threads", threads, "--output", name]
            )
            assert rc == 0
        assert (tmp_path / "t1.csv").read_bytes() == (tmp_path / "t4.csv").read_bytes()

    def test_trace_contents(self, tmp_path):
        rc = cli.main(["--outdir", str(tmp_path)] + self.ARGS)
        assert rc == 0
        first, rows = _rows(
            tmp_path / "trace.csv", "delay_s,amplitude,std_error"
        )
        assert PROVENANCE.match(first)
        assert "seed=5" in first
        assert rows[0][0] == 0.0
        assert rows[0][1] == 1.0

    def test_zero_rate_is_flat(self, tmp_path):
        rc = cli.main(
            ["--outdir", str(tmp_path)] + self.ARGS + ["--base-rate", "0"]
        )
        assert rc == 0
        _, rows = _rows(tmp_path / "trace.csv", "delay_s,amplitude,std_error")
        assert all(row[1] == 1.0 for row in rows)

    def test_inversion_sequence(self, tmp_path):
        rc = cli.main(
            [
                "--outdir",
                str(tmp_path),
                "simulate",
                "--sequence",
                "inversion",
                "--t1-s",
                "1.2e-3",
                "--tau-max-s",
                "8e-3",
                "--tau-points",
                "5",
            ]
        )
        assert rc == 0
        _, rows = _rows(tmp_path / "trace.csv", "delay_s,amplitude,std_error")
        assert rows[0][1] == -1.0
        assert rows[-1][1] == pytest.approx(1.0 - 2.0 * np.exp(-8e-3 / 1.2e-3))

    def test_bad_arguments(self, tmp_path):
        base = ["--outdir", str(tmp_path), "simulate"]
        assert cli.main(base + ["--sequence", "ramsey"]) == 2
        assert cli.main(base + ["--tau-points", "1"]) == 2
        assert cli.main(base + ["--realizations", "0"]) == 2
        assert cli.main(base + ["--threads", "0"]) == 2


class TestFit:
    def test_bundled_t2_fit(self, tmp_path):
        data = tmp_path / "nv_t2.csv"
        datasets.save_csv(datasets.bundled("NV", "T2"), data)
        rc = cli.main(
            [
                "--outdir",
                str(tmp_path),
                "fit",
                "--model",
                "t2_model",
                "--data",
                str(data),
                "--output-prefix",
                "t2fit",
            ]
        )
        assert rc == 0
        text = (tmp_path / "t2fit.csv").read_text()
        lines = text.splitlines()
        assert PROVENANCE.match(lines[0])
        assert lines[1] == "parameter,value,stderr,fixed"
        values = {l.split(",")[0]: l.split(",") for l in lines[2:]}
        assert 10.0 < float(values["T_Ze"][1]) < 25.0
        assert values["Gamma_res"][3] == "1"  # fixed by default
        assert float(values["Gamma_res"][2]) == 0.0
        report = (tmp_path / "t2fit.txt").read_text()
        assert "converged: True" in report

    def test_echo_trace_fit(self, tmp_path):
        rc = cli.main(
            ["--outdir", str(tmp_path)]
            + TestSimulate.ARGS
            + ["--realizations", "120", "--output", "echo.csv"]
        )
        assert rc == 0
        rc = cli.main(
            [
                "--outdir",
                str(tmp_path),
                "fit",
                "--model",
                "echo_decay",
                "--data",
                str(tmp_path / "echo.csv"),
                "--output-prefix",
                "echofit",
            ]
        )
        assert rc == 0
        assert (tmp_path / "echofit.csv").exists()
        assert (tmp_path / "echofit.txt").exists()

    def test_non_convergence_exits_3(self, tmp_path):
        data = tmp_path / "nv_t2.csv"
        datasets.save_csv(datasets.bundled("NV", "T2"), data)
        rc = cli.main(
            [
                "--outdir",
                str(tmp_path),
                "fit",
                "--model",
                "t2_model",
                "--data",
                str(data),
                "--init",
                "T_Ze=4000",
                "--init",
                "C=40",
                "--max-iterations",
                "1",
                "--output-prefix",
                "wild",
            ]
        )
        assert rc == 3
        assert "converged: False" in (tmp_path / "wild.txt").read_text()

    def test_usage_errors_exit_2(self, tmp_path):
        data = tmp_path / "nv_t2.csv"
        datasets.save_csv(datasets.bundled("NV", "T2"), data)
        base = ["--outdir", str(tmp_path), "fit", "--data", str(data)]
        assert cli.main(base + ["--model", "lorentzian"]) == 2
        assert cli.main(base + ["--model", "t2_model", "--fix", "Gamma=1"]) == 2
        assert cli.main(base + ["--model", "t2_model", "--init", "T_Ze"]) == 2
        malformed = tmp_path / "bad.csv"
        malformed.write_text("a,b\n1,2\n")
        assert (
            cli.main(
                [
                    "--outdir",
                    str(tmp_path),
                    "fit",
                    "--model",
                    "t2_model",
                    "--data",
                    str(malformed),
                ]
            )
            == 2
        )

    def test_missing_data_exits_4(self, tmp_path):
        rc = cli.main(
            [
                "--outdir",
                str(tmp_path),
                "fit",
                "--model",
                "t2_model",
                "--data",
                str(tmp_path / "nope.csv"),
            ]
        )
        assert rc == 4


class TestModelEval:
    def test_t2_matches_closed_form(self, tmp_path):
        rc = cli.main(
            [
                "--outdir",
                str(tmp_path),
                "model-eval",
                "--model",
                "t2_model",
                "--params",
                "C=0.58,T_Ze=14.7",
                "--temps",
                "2,20,300",
            ]
        )
        assert rc == 0
        _, rows = _rows(
            tmp_path / "model_eval.csv", "temperature_K,rate,value_time"
        )
        params = bath_model.T2ModelParams(0.58, 14.7, 0.004)
        for t, rate, value in rows:
            assert rate == pytest.approx(bath_model.t2_rate(t, params), rel=1e-12)
            assert value == pytest.approx(1e-6 / rate, rel=1e-12)

    def test_t1_matches_closed_form(self, tmp_path):
        rc = cli.main(
            [
                "--outdir",
                str(tmp_path),
                "model-eval",
                "--model",
                "t1_model",
                "--temps",
                "40,300",
            ]
        )
        assert rc == 0
        _, rows = _rows(
            tmp_path / "model_eval.csv", "temperature_K,rate,value_time"
        )
        for t, rate, value in rows:
            assert rate == pytest.approx(
                bath_model.t1_rate(t, bath_model.DEFAULT_T1_PARAMS), rel=1e-12
            )
            assert value == pytest.approx(1.0 / rate, rel=1e-12)

    def test_unknown_param_exits_2(self, tmp_path):
        rc = cli.main(
            [
                "--outdir",
                str(tmp_path),
                "model-eval",
                "--model",
                "t1_model",
                "--params",
                "D=1",
            ]
        )
        assert rc == 2


class TestOutputRouting:
    def test_env_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("NVBATH_OUTPUT_DIR", str(tmp_path))
        rc = cli.main(["polarization", "--temps", "2,300"])
        assert rc == 0
        assert (tmp_path / "polarization.csv").exists()

    def test_outdir_flag_beats_env(self, tmp_path, monkeypatch):
        wrong = tmp_path / "wrong"
        right = tmp_path / "right"
        wrong.mkdir()
        right.mkdir()
        monkeypatch.setenv("NVBATH_OUTPUT_DIR", str(wrong))
        rc = cli.main(["--outdir", str(right), "polarization", "--temps", "2,300"])
        assert rc == 0
        assert (right / "polarization.csv").exists()
        assert not (wrong / "polarization.csv").exists()

    def test_missing_outdir_exits_4(self, tmp_path):
        rc = cli.main(
            [
                "--outdir",
                str(tmp_path / "absent" / "nested"),
                "polarization",
                "--temps",
                "2,300",
            ]
        )
        assert rc == 4


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "nvbath.cli",
                "--outdir",
                str(tmp_path),
                "polarization",
                "--temps",
                "2,300",
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "polarization.csv").exists()
