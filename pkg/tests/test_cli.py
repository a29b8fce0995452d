"""CLI behavior: artifacts, manifests, schema strictness, and exit codes."""

import json
import math

import pytest
from click.testing import CliRunner

from htsk.cli import main
from htsk.reporting import canonical_json, config_hash


@pytest.fixture()
def runner():
    return CliRunner()


def run_ok(runner, args):
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


class TestSampleCommand:
    def test_csv_and_report(self, runner, tmp_path):
        out = tmp_path / "run"
        run_ok(runner, ["sample", "-o", str(out), "--family", "symmetric-weibull",
                        "--alpha", "1", "--count", "500", "--seed", "42"])
        lines = (out / "samples.csv").read_text().splitlines()
        assert lines[0] == "value"
        assert len(lines) == 501
        report = read_json(out / "report.json")
        assert report["command"] == "sample"
        assert report["results"]["count"] == 500
        manifest = read_json(out / "manifest.json")
        assert manifest["config_hash"] == report["config_hash"]
        assert "samples.csv" in manifest["artifacts"]


class TestPsinormCommand:
    def test_closed_form(self, runner, tmp_path):
        out = tmp_path / "run"
        run_ok(runner, ["psinorm", "-o", str(out), "--family", "symmetric-weibull",
                        "--alpha", "0.5", "--method", "closed-form"])
        res = read_json(out / "report.json")["results"]
        assert res["value"] == pytest.approx(4.0)
        assert res["method"] == "closed-form"

    def test_bisection(self, runner, tmp_path):
        out = tmp_path / "run"
        run_ok(runner, ["psinorm", "-o", str(out), "--family", "gaussian",
                        "--alpha", "2", "--samples", "50000", "--seed", "3"])
        res = read_json(out / "report.json")["results"]
        assert res["value"] == pytest.approx(math.sqrt(8 / 3), rel=0.05)


class TestGammaCommand:
    def test_sparse_bracket_within_frozen_rate(self, runner, tmp_path, calibration):
        out = tmp_path / "run"
        run_ok(runner, ["gamma", "-o", str(out), "--set", "sparse",
                        "--n", "64", "--s", "4", "--alpha", "2"])
        res = read_json(out / "report.json")["results"]
        rate = (4 * math.log(math.e * 64 / 4)) ** 0.5
        assert res["sparse_rate"] == pytest.approx(rate)
        assert res["entropy_integral"] <= calibration.get("gamma_sparse_C", alpha=2.0) * rate
        bracket = res["bracket"]
        assert bracket["gamma_lower"] <= bracket["gamma_upper"]

    def test_finite_points_via_config(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "set": "finite", "n": 2, "alpha": 1.0,
            "points": [[0.0, 0.0], [3.0, 4.0]],
        }))
        out = tmp_path / "run"
        run_ok(runner, ["gamma", "-o", str(out), "--config", str(cfg)])
        res = read_json(out / "report.json")["results"]
        assert res["bracket"]["gamma_upper"] == pytest.approx(5.0)


class TestTailsCommand:
    def test_end_to_end_exponent_near_one(self, runner, tmp_path):
        """Full pipeline at alpha=1: the fitted exponent lands in a band
        around 1 (the folded deviation biases the windowed shape upward, so
        the band is deliberately asymmetric)."""
        out = tmp_path / "run"
        run_ok(runner, ["tails", "-o", str(out), "--alpha", "1", "--model", "row",
                        "--m", "100", "--n", "10", "--trials", "10000", "--seed", "7"])
        res = read_json(out / "report.json")["results"]
        assert 0.7 <= res["fitted_exponent"] <= 1.45
        assert (out / "tail_curve.csv").exists()
        assert (out / "plot.svg").exists()
        header = (out / "tail_curve.csv").read_text().splitlines()[0]
        assert header == "threshold,survival,ci_low,ci_high"

    def test_no_plot_flag(self, runner, tmp_path):
        out = tmp_path / "run"
        run_ok(runner, ["tails", "-o", str(out), "--trials", "500", "--m", "20",
                        "--n", "4", "--no-plot", "--seed", "1"])
        assert not (out / "plot.svg").exists()

    def test_check_mode_passes_with_envelope(self, runner, tmp_path):
        out = tmp_path / "run"
        result = runner.invoke(main, [
            "tails", "-o", str(out), "--alpha", "1", "--model", "row",
            "--m", "40", "--n", "4", "--trials", "4000", "--seed", "11", "--check",
        ])
        assert result.exit_code == 0, result.output
        assert read_json(out / "report.json")["results"]["envelope_ok"] is True


class TestManifestRoundTrip:
    def test_rerun_reproduces_artifacts_byte_identically(self, runner, tmp_path):
        first = tmp_path / "a"
        run_ok(runner, ["tails", "-o", str(first), "--alpha", "1", "--model", "row",
                        "--m", "30", "--n", "4", "--trials", "1500", "--seed", "9"])
        second = tmp_path / "b"
        run_ok(runner, ["tails", "-o", str(second),
                        "--config", str(first / "manifest.json")])
        for name in ("report.json", "tail_curve.csv", "plot.svg"):
            assert (first / name).read_bytes() == (second / name).read_bytes(), name

    def test_manifest_for_other_command_rejected(self, runner, tmp_path):
        out = tmp_path / "a"
        run_ok(runner, ["sample", "-o", str(out), "--count", "10"])
        result = runner.invoke(main, ["rip", "-o", str(tmp_path / "b"),
                                      "--config", str(out / "manifest.json")])
        assert result.exit_code == 2


class TestSchemaStrictness:
    def test_unknown_config_key_is_an_error(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"count": 10, "frobnicate": True}))
        result = runner.invoke(main, ["sample", "-o", str(tmp_path / "x"),
                                      "--config", str(cfg)])
        assert result.exit_code == 2
        assert "frobnicate" in result.output

    def test_bad_choice_value(self, runner, tmp_path):
        result = runner.invoke(main, ["tails", "-o", str(tmp_path / "x"),
                                      "--model", "diagonal", "--trials", "10"])
        assert result.exit_code == 2

    def test_unknown_command_exits_2(self, runner):
        result = runner.invoke(main, ["frobnicate"])
        assert result.exit_code == 2

    def test_unwritable_output_dir_exits_4(self, runner):
        result = runner.invoke(main, ["sample", "-o", "/dev/null/nope", "--count", "5"])
        assert result.exit_code == 4


class TestRipCommand:
    def test_deterministic_reports(self, runner, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            run_ok(runner, ["rip", "-o", str(out), "--m", "60", "--n", "12",
                            "--s", "2", "--seed", "7"])
            outs.append((out / "report.json").read_bytes())
        assert outs[0] == outs[1]

    def test_check_against_delta_target(self, runner, tmp_path):
        result = runner.invoke(main, [
            "rip", "-o", str(tmp_path / "x"), "--m", "16", "--n", "14", "--s", "4",
            "--seed", "3", "--delta-target", "0.05", "--check",
        ])
        assert result.exit_code == 3  # far too few rows for delta 0.05


class TestJlCommand:
    def test_report_and_check(self, runner, tmp_path):
        out = tmp_path / "run"
        result = runner.invoke(main, [
            "jl", "-o", str(out), "--points", "40", "--dim", "8", "--eps", "0.3",
            "--delta", "0.1", "--alpha", "1", "--trials", "5", "--seed", "2",
            "--check",
        ])
        assert result.exit_code == 0, result.output
        res = read_json(out / "report.json")["results"]
        assert res["pairwise_ok_fraction"] >= 0.9
        assert res["m_used"] == res["m_required"]

    def test_forced_tiny_m_fails_check(self, runner, tmp_path):
        result = runner.invoke(main, [
            "jl", "-o", str(tmp_path / "x"), "--points", "30", "--dim", "8",
            "--eps", "0.1", "--delta", "0.01", "--alpha", "1", "--trials", "4",
            "--seed", "2", "--m", "2", "--check",
        ])
        assert result.exit_code == 3


class TestNormalizeCommand:
    def test_report_fields(self, runner, tmp_path):
        out = tmp_path / "run"
        run_ok(runner, ["normalize", "-o", str(out), "--m", "128", "--n", "16",
                        "--alpha", "1", "--trials", "200", "--seed", "5"])
        res = read_json(out / "report.json")["results"]
        assert res["p_event_F"] >= 0.99
        lines = (out / "trials.csv").read_text().splitlines()
        assert lines[0] == "trial,min_column_norm,event_F"
        assert len(lines) == 201


class TestCalibrateCommand:
    def test_writes_fixture_file(self, runner, tmp_path, monkeypatch):
        import htsk.cli as cli_mod

        monkeypatch.setattr(
            cli_mod, "run_calibration", lambda seed, quick: {"dummy_C/alpha=1": 2.0}
        )
        out = tmp_path / "run"
        run_ok(runner, ["calibrate", "-o", str(out), "--seed", "1", "--quick"])
        obj = read_json(out / "calibration.json")
        assert obj["constants"] == {"dummy_C/alpha=1": 2.0}
        assert read_json(out / "report.json")["results"]["n_constants"] == 1


class TestFlagPrecedence:
    def test_flags_win_over_config_file(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"count": 10, "seed": 1}))
        out = tmp_path / "run"
        run_ok(runner, ["sample", "-o", str(out), "--config", str(cfg),
                        "--count", "20"])
        report = read_json(out / "report.json")
        assert report["results"]["count"] == 20  # flag wins
        assert report["seed"] == 1  # file value survives where no flag given

    def test_moment_ratio_method(self, runner, tmp_path):
        out = tmp_path / "run"
        run_ok(runner, ["psinorm", "-o", str(out), "--family", "symmetric-weibull",
                        "--alpha", "1", "--method", "moment-ratio",
                        "--samples", "20000", "--seed", "3"])
        res = read_json(out / "report.json")["results"]
        assert res["method"] == "moment-ratio"
        assert res["value"] > 0

    def test_non_integral_float_rejected_for_int_field(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"count": 10.5}))
        result = runner.invoke(main, ["sample", "-o", str(tmp_path / "x"),
                                      "--config", str(cfg)])
        assert result.exit_code == 2


class TestCalibrationOverride:
    def test_env_var_points_at_alternate_fixtures(self, tmp_path, monkeypatch):
        from htsk.calibration import load_calibration, write_calibration

        path = tmp_path / "alt.json"
        write_calibration(str(path), {"made_up_C/alpha=1": 9.0}, seed=5)
        monkeypatch.setenv("HTSK_CALIBRATION", str(path))
        calib = load_calibration()
        assert calib.get("made_up_C", alpha=1.0) == 9.0
        assert calib.seed == 5

    def test_missing_constant_has_actionable_error(self, calibration):
        from htsk.calibration import CalibrationError

        with pytest.raises(CalibrationError, match="calibrate"):
            calibration.get("definitely_not_a_constant", alpha=1.0)


class TestReporting:
    def test_floats_emitted_at_17_significant_digits(self):
        text = canonical_json({"x": 0.1})
        assert "0.10000000000000001" in text

    def test_hash_stable_under_key_order(self):
        assert config_hash({"a": 1, "b": 2.5}) == config_hash({"b": 2.5, "a": 1})

    def test_non_finite_floats_stringified(self):
        text = canonical_json({"x": math.inf})
        assert "inf" in text

    def test_round_trips_through_stdlib_json(self):
        obj = {
            "ints": [1, -2, 0],
            "floats": [0.1, 1e-300, 123456.789],
            "nested": {"flag": True, "none": None, "s": 'quo"te\n'},
        }
        assert json.loads(canonical_json(obj)) == obj
