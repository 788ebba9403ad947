import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from emergelab.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


QUICK_YAML = """\
dataset:
  instances_per_class: 6
pretrain:
  epochs: 2
train:
  epochs: 1
  batch_size: 64
"""


def _write_quick_config(tmp_path, extra=""):
    path = tmp_path / "quick.yaml"
    path.write_text(QUICK_YAML + extra)
    return str(path)


class TestUsageErrors:
    def test_missing_required_option_exits_2(self, runner):
        result = runner.invoke(main, ["dataset"])
        assert result.exit_code == 2

    def test_unknown_preset_exits_2(self, runner, tmp_path):
        result = runner.invoke(main, ["train", "--preset", "galactic",
                                      "--out", str(tmp_path)])
        assert result.exit_code == 2

    def test_bad_config_value_exits_2(self, runner, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("include: [nonexistent.yaml]\n")
        result = runner.invoke(main, ["pretrain", "--config", str(bad),
                                      "--out", str(tmp_path)])
        assert result.exit_code == 2

    def test_dataset_invalid_per_class_exits_2(self, runner, tmp_path):
        result = runner.invoke(
            main, ["dataset", "--per-class", "1", "--out", str(tmp_path / "d.bin")]
        )
        assert result.exit_code == 2

    def test_sweep_without_axes_exits_2(self, runner, tmp_path):
        cfg = _write_quick_config(tmp_path)
        result = runner.invoke(main, ["sweep", "--config", cfg,
                                      "--out", str(tmp_path / "out")])
        assert result.exit_code == 2


class TestDatasetCommand:
    def test_writes_file(self, runner, tmp_path):
        out = tmp_path / "ds.bin"
        result = runner.invoke(
            main, ["dataset", "--per-class", "4", "--seed", "1", "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        assert out.exists()
        from emergelab import world

        ds = world.ingest_external(str(out))
        assert len(ds) == 256

    def test_deterministic(self, runner, tmp_path):
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        for out in (a, b):
            result = runner.invoke(
                main, ["dataset", "--per-class", "4", "--seed", "5", "--out", str(out)]
            )
            assert result.exit_code == 0
        assert a.read_bytes() == b.read_bytes()


class TestPretrainCommand:
    def test_outputs(self, runner, tmp_path):
        cfg = _write_quick_config(tmp_path)
        out = tmp_path / "out"
        result = runner.invoke(main, ["pretrain", "--config", cfg, "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert (out / "vision_default.emrgw").exists()
        assert (out / "bias_report_default.csv").exists()
        assert (out / "rsm_default.csv").exists()
        assert (out / "rsm_default.pgm").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seeds"] == [0]
        assert len(manifest["checkpoint_hashes"]) == 1

    def test_condition_from_config(self, runner, tmp_path):
        cfg = _write_quick_config(tmp_path, "smoothing:\n  condition: scale\n")
        out = tmp_path / "out"
        result = runner.invoke(main, ["pretrain", "--config", cfg, "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert (out / "vision_scale.emrgw").exists()


class TestTrainCommand:
    def test_run_layout_and_determinism(self, runner, tmp_path):
        cfg = _write_quick_config(tmp_path)
        outs = []
        for name in ("run_a", "run_b"):
            out = tmp_path / name
            result = runner.invoke(
                main, ["train", "--config", cfg, "--seed", "3", "--out", str(out)]
            )
            assert result.exit_code == 0, result.output
            assert (out / "run_000" / "trainlog.csv").exists()
            assert (out / "run_000" / "messages.csv").exists()
            assert (out / "run_000" / "sender.emrgw").exists()
            assert (out / "summary.csv").exists()
            outs.append(out)
        # Byte-identical CSV outputs for identical config and seed.
        for rel in ("run_000/trainlog.csv", "run_000/messages.csv", "summary.csv"):
            assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes()

    def test_multiple_runs_with_ci(self, runner, tmp_path):
        cfg = _write_quick_config(tmp_path, "runs: 2\n")
        out = tmp_path / "out"
        result = runner.invoke(main, ["train", "--config", cfg, "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert (out / "run_001").exists()
        lines = (out / "summary.csv").read_text().splitlines()
        assert lines[0] == "metric,value,ci_lower,ci_upper"


class TestSweepCommand:
    def test_six_cell_grid(self, runner, tmp_path):
        extra = (
            "sweep:\n"
            "  axes:\n"
            "    train.entropy_coeff: [0.0, 0.02, 0.05]\n"
            "    game.distractors: [1, 2]\n"
        )
        cfg = _write_quick_config(tmp_path, extra)
        out = tmp_path / "sweep"
        result = runner.invoke(main, ["sweep", "--config", cfg, "--out", str(out)])
        assert result.exit_code == 0, result.output
        cells = [d for d in out.iterdir() if d.is_dir()]
        assert len(cells) == 6
        for cell in cells:
            assert (cell / "summary.csv").exists()


class TestAnalyzeAndReport:
    def test_analyze_effectiveness(self, runner, tmp_path):
        from emergelab import metrics, world

        logs = []
        for k in range(2):
            log = metrics.MessageLog()
            for c in range(64):
                log.append(c, (world.attribute_value(c, "color"), k, 0), c, 1)
            path = tmp_path / f"log{k}.csv"
            log.save_csv(path)
            logs.append(str(path))
        out = tmp_path / "out"
        result = runner.invoke(main, ["analyze", *logs, "--out", str(out)])
        assert result.exit_code == 0, result.output
        text = (out / "effectiveness.csv").read_text()
        assert "effectiveness_color" in text
        assert "effectiveness_average" in text

    def test_report_consolidates(self, runner, tmp_path):
        cfg = _write_quick_config(tmp_path)
        run_dir = tmp_path / "run"
        result = runner.invoke(main, ["train", "--config", cfg, "--out", str(run_dir)])
        assert result.exit_code == 0, result.output
        out = tmp_path / "rep"
        result = runner.invoke(main, ["report", str(run_dir), "--out", str(out)])
        assert result.exit_code == 0, result.output
        lines = (out / "report.csv").read_text().splitlines()
        assert lines[0] == "run_dir,scenario,seed,test_reward"
        assert len(lines) == 2


class TestEvolveCommand:
    def test_minimal_tournament(self, runner, tmp_path):
        extra = (
            "evolve:\n"
            "  types: [default, scale]\n"
            "  runs_per_pair: 1\n"
        )
        cfg = _write_quick_config(tmp_path, extra)
        out = tmp_path / "evo"
        result = runner.invoke(main, ["evolve", "--config", cfg, "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert (out / "payoff.csv").exists()
        assert (out / "payoff_symmetric.csv").exists()
        assert (out / "payoff_symmetric.pgm").exists()
        ess = json.loads((out / "ess.json").read_text())
        assert set(ess["is_ess"]) == {"default", "scale"}
