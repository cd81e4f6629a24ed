import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from rotornv import pipeline
from rotornv.cli import main
from rotornv.config import apply_overrides, config_from_dict
from rotornv.errors import ValidationError
from rotornv.estimation import EchoDataset, fit_rabi


def run_cli(args, **kw):
    return subprocess.run(
        [sys.executable, "-m", "rotornv.cli", *args],
        capture_output=True,
        text=True,
        **kw,
    )


class TestConfig:
    def test_defaults_round_trip(self):
        cfg = config_from_dict({})
        again = config_from_dict(json.loads(cfg.dump_json()))
        assert again == cfg
        assert again.sha256() == cfg.sha256()

    def test_unknown_key_rejected(self):
        with pytest.raises(ValidationError) as err:
            config_from_dict({"geometry": {"f_rot_khz": 3.3}})
        assert "f_rot_khz" in str(err.value)

    def test_unknown_section_rejected(self):
        with pytest.raises(ValidationError):
            config_from_dict({"geom": {}})

    def test_overrides(self):
        cfg = config_from_dict({})
        out = apply_overrides(cfg, ["field.theta_b_deg=1.0", "seed=9"])
        assert out.field_cfg.theta_b_deg == 1.0
        assert out.seed == 9

    def test_override_unknown_key(self):
        with pytest.raises(ValidationError):
            apply_overrides(config_from_dict({}), ["field.nope=1"])

    def test_mw_dir_normalised_on_load(self):
        cfg = config_from_dict({"field": {"mw_dir": [2.0, 0.0, 0.0]}})
        assert cfg.field_cfg.mw_dir == pytest.approx((1.0, 0.0, 0.0))


class TestPipeline:
    def test_echo_population_matches_model(self, cfg_tilted):
        from rotornv.spindyn import echo_phase, c13_envelope

        p = pipeline.echo_params_from_config(cfg_tilted)
        for tau in (5.0, 13.0, 21.0):
            got = pipeline.echo_population(cfg_tilted, tau)
            z = math.cos(echo_phase(p, cfg_tilted.constants, tau))
            z *= c13_envelope(p, cfg_tilted.constants, tau)
            assert got == pytest.approx(0.5 * (1.0 - z), abs=1e-6)

    def test_echo_tau_exceeding_period_rejected(self, cfg_tilted):
        with pytest.raises(ValidationError) as err:
            pipeline.echo_population(cfg_tilted, 305.0)
        assert "readout" in str(err.value)

    def test_rabi_pipeline_oscillates_at_base_rabi(self, cfg_default):
        durations = np.linspace(0.0, 1.1, 32)
        pops = [pipeline.rabi_population_pipeline(cfg_default, d) for d in durations]
        data = EchoDataset(durations + 0.0, np.array(pops), np.full(durations.size, 1e-3))
        fit = fit_rabi(data)
        assert fit.params["rabi_freq_mhz"] == pytest.approx(3.6, abs=0.01)

    def test_rabi_half_turn_starts_dark(self, cfg_default):
        p0 = pipeline.rabi_population_pipeline(cfg_default, 0.0, pulse_at="half")
        assert p0 == pytest.approx(1.0, abs=1e-3)  # prepended pi pulse

    def test_echo_scan_flat_when_aligned(self, cfg_default):
        taus = np.linspace(2.0, 21.0, 8)
        data, meta = pipeline.simulate_echo_scan(cfg_default, taus, shots_per_point=200_000)
        spread = np.max(data.signal) - np.min(data.signal)
        assert spread < 6.0 * np.median(data.sigma)

    def test_echo_scan_fringes_when_tilted(self, cfg_tilted):
        taus = np.linspace(2.0, 21.0, 16)
        data, _ = pipeline.simulate_echo_scan(cfg_tilted, taus, shots_per_point=200_000)
        spread = np.max(data.signal) - np.min(data.signal)
        assert spread > 10.0 * np.median(data.sigma)

    def test_shot_scaling_halves_error_bars(self, cfg_tilted):
        taus = np.linspace(2.0, 21.0, 8)
        d1, _ = pipeline.simulate_echo_scan(cfg_tilted, taus, shots_per_point=100_000)
        d4, _ = pipeline.simulate_echo_scan(cfg_tilted, taus, shots_per_point=400_000)
        ratio = np.median(d1.sigma) / np.median(d4.sigma)
        assert ratio == pytest.approx(2.0, rel=0.10)

    def test_dataset_round_trip(self, tmp_path, cfg_tilted):
        taus = np.linspace(2.0, 21.0, 8)
        data, meta = pipeline.simulate_echo_scan(cfg_tilted, taus, shots_per_point=50_000)
        text = pipeline.format_dataset(
            ("tau_us", "signal", "sigma"), (data.tau_us, data.signal, data.sigma),
            meta, cfg_tilted, cfg_tilted.seed,
        )
        path = tmp_path / "echo.dat"
        path.write_text(text)
        loaded, meta2 = pipeline.read_echo_dataset(str(path))
        assert np.allclose(loaded.tau_us, data.tau_us)
        assert np.allclose(loaded.signal, data.signal)
        assert meta2["kind"] == "echo-scan"

    def test_malformed_row_reports_line_number(self, tmp_path):
        path = tmp_path / "bad.dat"
        path.write_text("# columns: tau_us signal sigma\n1.0 0.5 0.01\n2.0 oops 0.01\n")
        with pytest.raises(ValidationError) as err:
            pipeline.read_echo_dataset(str(path))
        assert "line 3" in str(err.value)


class TestCliSubcommands:
    def test_dump_config_round_trip(self, tmp_path):
        res = run_cli(["dump-config"])
        assert res.returncode == 0
        data = json.loads(res.stdout)
        assert config_from_dict(data) == config_from_dict({})

    def test_simulate_echo_reproducible_byte_identical(self, tmp_path):
        args = [
            "simulate-echo",
            "--tau", "2:21:6",
            "--shots", "20000",
            "--set", "field.theta_b_deg=1.0",
            "--seed", "7",
        ]
        a = run_cli(args)
        b = run_cli(args)
        assert a.returncode == 0
        assert a.stdout == b.stdout
        c = run_cli(args[:-1] + ["8"])
        assert c.stdout != a.stdout

    def test_simulate_echo_rejects_tau_beyond_period(self):
        res = run_cli(["simulate-echo", "--tau", "2,400", "--shots", "1000"])
        assert res.returncode == 2
        assert "readout" in res.stderr

    def test_simulate_rabi_and_fit(self, tmp_path):
        scan = tmp_path / "rabi.dat"
        res = run_cli(
            [
                "simulate-rabi",
                "--durations", "0.0:1.1:24",
                "--shots", "150000",
                "-o", str(scan),
            ]
        )
        assert res.returncode == 0, res.stderr
        fit = run_cli(["fit", str(scan), "--model", "rabi"])
        assert fit.returncode == 0, fit.stderr
        line = [l for l in fit.stdout.splitlines() if l.startswith("rabi_freq_mhz")][0]
        value = float(line.split(":")[1].split("+-")[0])
        assert value == pytest.approx(3.6, abs=0.1)

    def test_fit_missing_file_is_validation_error(self):
        res = run_cli(["fit", "/nonexistent/file.dat"])
        assert res.returncode == 2

    def test_fit_empty_file_usage_error(self, tmp_path):
        p = tmp_path / "empty.dat"
        p.write_text("")
        res = run_cli(["fit", str(p)])
        assert res.returncode == 2
        assert "no data rows" in res.stderr

    def test_compile_seq_stdin(self):
        res = run_cli(["compile-seq", "-"], input="mw pi at 0us\nlaser 2us at 300us\n")
        assert res.returncode == 0
        assert "target=pi" in res.stdout
        assert res.stdout.splitlines()[1].startswith("mw 0 138.8")

    def test_compile_seq_parse_error_exit_code(self):
        res = run_cli(["compile-seq", "-"], input="bogus 2us\n")
        assert res.returncode == 2
        assert "bogus" in res.stderr

    def test_simulate_readout_trace(self, tmp_path):
        out = tmp_path / "trace.dat"
        res = run_cli(["simulate-readout", "--initial", "ms1", "--shots", "20000", "-o", str(out)])
        assert res.returncode == 0, res.stderr
        lines = out.read_text().splitlines()
        cols = [l for l in lines if l.startswith("# columns")][0]
        assert "bin_start_us" in cols and "counts" in cols
        rows = [l for l in lines if not l.startswith("#")]
        assert len(rows) == 40  # 2 us at 0.05 us bins

    def test_simulate_image_header_and_summary(self, tmp_path):
        out = tmp_path / "img.dat"
        res = run_cli(
            [
                "simulate-image",
                "--stationary",
                "--x-min", "8.5", "--x-max", "11.5",
                "--y-min", "-1.5", "--y-max", "1.5",
                "--step", "0.15",
                "--dwell-ms", "120",
                "--emitters", "10,0",
                "-o", str(out),
            ]
        )
        assert res.returncode == 0, res.stderr
        text = out.read_text()
        duty = [l for l in text.splitlines() if "duty_cycle" in l][0]
        assert float(duty.split(":")[1]) == pytest.approx(0.0067, abs=1e-4)
        assert "sigma_radial" in res.stderr

    def test_fit_nonconvergence_exit_code(self, tmp_path):
        # starve the optimizer of iterations on fringed data: exit code 4
        cfg = config_from_dict({"field": {"theta_b_deg": 1.0}})
        taus = np.linspace(2.0, 21.0, 12)
        data, meta = pipeline.simulate_echo_scan(cfg, taus, shots_per_point=50_000)
        path = tmp_path / "echo.dat"
        path.write_text(
            pipeline.format_dataset(
                ("tau_us", "signal", "sigma"),
                (data.tau_us, data.signal, data.sigma),
                meta, cfg, cfg.seed,
            )
        )
        res = run_cli(["fit", str(path), "--model", "echo", "--max-iter", "1"])
        assert res.returncode == 4
        assert "converged: no" in res.stdout

    def test_simulate_image_csv_and_depth(self, tmp_path):
        out = tmp_path / "img.csv"
        res = run_cli(
            [
                "simulate-image",
                "--stationary",
                "--plane", "xz",
                "--format", "csv",
                "--x-min", "9", "--x-max", "11",
                "--y-min", "-2", "--y-max", "2",
                "--step", "0.2",
                "--dwell-ms", "50",
                "--emitters", "10,0",
                "-o", str(out),
            ]
        )
        assert res.returncode == 0, res.stderr
        text = out.read_text()
        assert "# plane: xz" in text
        data_rows = [l for l in text.splitlines() if not l.startswith("#")]
        assert "," in data_rows[0]

    def test_env_var_config(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"seed": 42}))
        env = dict(os.environ, ROTORNV_CONFIG=str(cfg_path))
        res = run_cli(["dump-config"], env=env)
        assert res.returncode == 0
        assert json.loads(res.stdout)["seed"] == 42

    def test_main_function_inprocess(self, capsys):
        code = main(["dump-config"])
        assert code == 0
        assert '"seed"' in capsys.readouterr().out
