"""Exit codes, artifact layout, and error reports of the ``kr`` executable."""
import json

import pytest
from click.testing import CliRunner

from kroulette.cli import kr


@pytest.fixture()
def runner():
    return CliRunner()


def _write_config(path, **overrides):
    payload = {"scenario": "KR-1", "seed": 3, "n_sets": 40, "window": 16, **overrides}
    path.write_text(json.dumps(payload))
    return str(path)


class TestRunCommand:
    def test_full_run_writes_all_artifacts(self, runner, tmp_path):
        cfg = _write_config(tmp_path / "cfg.json")
        out = tmp_path / "out"
        result = runner.invoke(kr, ["run", "--config", cfg, "--out", str(out)])
        assert result.exit_code == 0, result.output
        names = {p.name for p in out.iterdir()}
        assert names == {
            "config.json", "trajectory.csv", "epsilon.csv", "words.csv", "words.json",
            "match.jsonl", "quasirandom.json", "resonance.json", "ledger.csv",
            "bet.json", "replay.json", "manifest.json",
        }
        assert "manifest hash" in result.output

    def test_seed_override_changes_the_manifest_hash(self, runner, tmp_path):
        cfg = _write_config(tmp_path / "cfg.json")
        hashes = []
        for seed, d in ((None, "a"), (99, "b")):
            args = ["run", "--config", cfg, "--out", str(tmp_path / d)]
            if seed is not None:
                args += ["--seed", str(seed)]
            result = runner.invoke(kr, args)
            assert result.exit_code == 0, result.output
            hashes.append(json.loads((tmp_path / d / "manifest.json").read_text())["hash"])
        assert hashes[0] != hashes[1]

    def test_out_dir_from_config_is_honored(self, runner, tmp_path):
        out = tmp_path / "from-config"
        cfg = _write_config(tmp_path / "cfg.json", out_dir=str(out))
        result = runner.invoke(kr, ["run", "--config", cfg])
        assert result.exit_code == 0, result.output
        assert (out / "manifest.json").exists()

    def test_reveal_hidden_adds_the_truth_export(self, runner, tmp_path):
        cfg = _write_config(tmp_path / "cfg.json")
        out = tmp_path / "out"
        result = runner.invoke(
            kr, ["simulate", "--config", cfg, "--out", str(out), "--reveal-hidden"]
        )
        assert result.exit_code == 0, result.output
        assert (out / "eps_truth.csv").exists()


class TestStageDepths:
    def test_simulate_writes_trace_without_words(self, runner, tmp_path):
        cfg = _write_config(tmp_path / "cfg.json")
        out = tmp_path / "out"
        result = runner.invoke(kr, ["simulate", "--config", cfg, "--out", str(out)])
        assert result.exit_code == 0, result.output
        names = {p.name for p in out.iterdir()}
        assert "trajectory.csv" in names and "epsilon.csv" in names
        assert "words.csv" not in names and "resonance.json" not in names

    def test_verbalize_adds_words_but_not_reports(self, runner, tmp_path):
        cfg = _write_config(tmp_path / "cfg.json")
        out = tmp_path / "out"
        result = runner.invoke(kr, ["verbalize", "--config", cfg, "--out", str(out)])
        assert result.exit_code == 0, result.output
        names = {p.name for p in out.iterdir()}
        assert "words.csv" in names and "match.jsonl" in names
        assert "resonance.json" not in names and "ledger.csv" not in names

    def test_resonance_adds_reports_but_no_ledger(self, runner, tmp_path):
        cfg = _write_config(tmp_path / "cfg.json")
        out = tmp_path / "out"
        result = runner.invoke(kr, ["resonance", "--config", cfg, "--out", str(out)])
        assert result.exit_code == 0, result.output
        names = {p.name for p in out.iterdir()}
        assert "quasirandom.json" in names and "resonance.json" in names
        assert "ledger.csv" not in names


class TestFailureModes:
    def test_unknown_scenario_exits_2_with_error_report(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"scenario": "nope"}))
        out = tmp_path / "out"
        result = runner.invoke(kr, ["run", "--config", str(cfg), "--out", str(out)])
        assert result.exit_code == 2
        report = json.loads((out / "error.json").read_text())
        assert report["code"] == "ConfigError"
        assert "registered ids" in report["message"]

    def test_missing_config_file_exits_2(self, runner, tmp_path):
        result = runner.invoke(
            kr, ["run", "--config", str(tmp_path / "absent.json"), "--out", str(tmp_path / "o")]
        )
        assert result.exit_code == 2

    def test_invalid_json_exits_2_and_names_the_position(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"scenario": "KR-1",\n  "seed": }')
        result = runner.invoke(
            kr, ["run", "--config", str(cfg), "--out", str(tmp_path / "o")]
        )
        assert result.exit_code == 2
        assert "line" in result.output

    def test_no_out_dir_anywhere_exits_2(self, runner, tmp_path):
        cfg = _write_config(tmp_path / "cfg.json")
        result = runner.invoke(kr, ["run", "--config", cfg])
        assert result.exit_code == 2
        assert "out" in result.output

    def test_runtime_failure_exits_3_with_error_report(self, runner, tmp_path):
        # an absurdly coarse step makes the stiff hidden core blow up mid-run
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "scenario": "KR-1", "seed": 3, "n_sets": 5, "dt": 0.8,
            "max_set_duration": 80.0, "window": 16,
        }))
        out = tmp_path / "out"
        result = runner.invoke(kr, ["run", "--config", str(cfg), "--out", str(out)])
        assert result.exit_code == 3, result.output
        report = json.loads((out / "error.json").read_text())
        assert report["code"] == "IntegrationDivergedError"
        assert "non-finite" in report["message"]

    def test_usage_error_exits_2(self, runner):
        result = runner.invoke(kr, ["run"])  # --config is required
        assert result.exit_code == 2
