import json

import pytest

from pimdecode.cli import main


def run_cli(*args):
    return main(list(args))


class TestCalibrate:
    def test_writes_alpha_and_sweep(self, tmp_path):
        out = tmp_path / "cal"
        assert run_cli("calibrate", "--model", "gpt3-175b", "--system", "hybrid",
                       "--sweep-max", "32", "--out", str(out)) == 0
        payload = json.loads((out / "calibration.json").read_text())
        assert payload["alpha"] == 11
        assert len(payload["sweep"]) >= 32
        assert payload["config"]["model"]["hidden_dim"] == 12288

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_cli("calibrate", "--sweep-max", "16", "--out", str(a))
        run_cli("calibrate", "--sweep-max", "16", "--out", str(b))
        assert (a / "calibration.json").read_text() == (b / "calibration.json").read_text()

    def test_missing_model_file_names_path(self, tmp_path, capsys):
        code = run_cli("calibrate", "--model", "nope/missing.json",
                       "--out", str(tmp_path))
        assert code == 2
        assert "missing.json" in capsys.readouterr().err

    def test_calibration_file_reusable_by_run(self, tmp_path):
        out = tmp_path / "o"
        run_cli("calibrate", "--model", "opt-30b", "--sweep-max", "16",
                "--out", str(out))
        code = run_cli("run", "--model", "opt-30b", "--count", "4", "--batch", "4",
                       "--out", str(out),
                       "--calibration", str(out / "calibration.json"))
        assert code == 0
        report = json.loads(
            (out / "run-opt-30b-hybrid-dynamic" / "report.json").read_text()
        )
        assert report["config"]["alpha"] == json.loads(
            (out / "calibration.json").read_text()
        )["alpha"]


class TestRun:
    def test_report_embeds_config_and_csv(self, tmp_path):
        out = tmp_path / "o"
        code = run_cli("run", "--model", "opt-30b", "--system", "hybrid",
                       "--modes", "pim-only", "--synth", "general-qa-like",
                       "--count", "8", "--batch", "8", "--out", str(out),
                       "--sweep-max", "16")
        assert code == 0
        run_dir = out / "run-opt-30b-hybrid-pim-only"
        report = json.loads((run_dir / "report.json").read_text())
        assert report["config"]["system"]["fc_pim_count"] == 30
        assert report["aggregates"]["iterations"] > 0
        csv = (run_dir / "iterations.csv").read_text()
        assert csv.startswith("# config: ")
        assert "lat_fc" in csv.splitlines()[1]

    def test_set_override_reaches_engine_and_echo(self, tmp_path):
        out = tmp_path / "o"
        code = run_cli("run", "--model", "opt-30b", "--modes", "pim-only",
                       "--count", "4", "--batch", "4", "--out", str(out),
                       "--sweep-max", "16",
                       "--set", "system.fc_pim_count=10",
                       "--set", "run.spec_len=2")
        assert code == 0
        report = json.loads(
            (out / "run-opt-30b-hybrid-pim-only" / "report.json").read_text()
        )
        assert report["config"]["system"]["fc_pim_count"] == 10
        assert report["config"]["run"]["spec_len"] == 2

    def test_bad_override_is_a_usage_error(self, tmp_path, capsys):
        code = run_cli("run", "--out", str(tmp_path), "--set", "nosuch.key=1")
        assert code == 2
        assert "nosuch" in capsys.readouterr().err


class TestCompare:
    def test_identical_mode_listed_twice(self, tmp_path):
        out = tmp_path / "o"
        code = run_cli("compare", "--model", "opt-30b", "--count", "4",
                       "--batch", "4", "--out", str(out), "--sweep-max", "16",
                       "--modes", "static-gpu-fc,static-gpu-fc")
        assert code == 0
        lines = (out / "compare.csv").read_text().splitlines()
        rows = [line.split(",") for line in lines[2:]]
        assert all(float(row[2]) == pytest.approx(1.0) for row in rows)

    def test_four_modes(self, tmp_path):
        out = tmp_path / "o"
        code = run_cli("compare", "--model", "opt-30b", "--count", "8",
                       "--batch", "8", "--out", str(out), "--sweep-max", "16")
        assert code == 0
        lines = (out / "compare.csv").read_text().splitlines()
        assert len(lines) == 2 + 4  # config header, column header, 4 modes


class TestRoofline:
    def test_fc_flips_at_batch_32(self, tmp_path, capsys):
        out = tmp_path / "o"
        code = run_cli("roofline", "--model", "opt-30b", "--spec-lens", "8",
                       "--batches", "4,8,16,32,64,128", "--out", str(out))
        assert code == 0
        rows = [line.split(",") for line in
                (out / "roofline.csv").read_text().splitlines()[2:]]
        fc = {int(r[1]): r[4] for r in rows if r[0] == "fc"}
        attn = {int(r[1]): r[4] for r in rows if r[0] == "attention"}
        assert fc[4] == fc[8] == fc[16] == "memory-bound"
        assert fc[32] == fc[64] == fc[128] == "compute-bound"
        assert set(attn.values()) == {"memory-bound"}


class TestValidate:
    def test_presets_pass(self, tmp_path, capsys):
        code = run_cli("validate", "--out", str(tmp_path))
        assert code == 0
        output = capsys.readouterr().out
        assert "[FAIL]" not in output
        payload = json.loads((tmp_path / "validate.json").read_text())
        assert payload["passed"] is True

    def test_broken_area_budget_fails_nonzero(self, tmp_path, capsys):
        code = run_cli("validate", "--out", str(tmp_path), "--set", "area.a_max=50")
        assert code == 1
        assert "[FAIL]" in capsys.readouterr().out


class TestSynthTrace:
    def test_writes_loadable_trace(self, tmp_path):
        out_file = tmp_path / "trace.csv"
        code = run_cli("synth-trace", "--preset", "general-qa-like", "--count", "32",
                       "--seed", "5", "--out-file", str(out_file))
        assert code == 0
        from pimdecode.workload import load_trace

        trace = load_trace(out_file)
        assert len(trace.requests) == 32

    def test_same_seed_same_file(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_cli("synth-trace", "--count", "16", "--seed", "3", "--out-file", str(a))
        run_cli("synth-trace", "--count", "16", "--seed", "3", "--out-file", str(b))
        assert a.read_text().splitlines()[1:] == b.read_text().splitlines()[1:]
