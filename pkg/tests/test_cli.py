"""End-to-end command-line flows via click's test runner (in-process client)."""

import numpy as np
import pytest
from click.testing import CliRunner

from mciscreen.cli import main
from mciscreen.perturb import AudioClip, read_wav, write_wav

FAST_TRAIN = ["--lr", "1e-3", "--epochs", "2", "--window", "0.3",
              "--hidden", "16", "--lstm-layers", "1"]


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def workspace(tmp_path_factory, runner):
    """Dataset and checkpoint produced through the CLI itself."""
    root = tmp_path_factory.mktemp("cli")
    feats = root / "feats"
    synth = runner.invoke(main, [
        "synth", "--out", str(feats), "--patients", "6", "--recordings", "2",
        "--layers", "4", "--frames", "40", "--dims", "6",
        "--informative-layer", "3", "--effect-size", "3.0",
        "--fps", "100", "--seed", "11"])
    assert synth.exit_code == 0, synth.output
    manifest = feats / "manifest.jsonl"
    assert manifest.exists()
    train = runner.invoke(main, [
        "train", "--manifest", str(manifest), "--out", str(root / "ckpt"),
        "--fusion", "prior", "--major-layer", "3", "--major-weight", "2.0",
        *FAST_TRAIN])
    assert train.exit_code == 0, train.output
    return {"root": root, "manifest": manifest, "train_output": train.output}


class TestPipelineFlow:
    def test_synth_reports_manifest(self, workspace):
        pass  # asserted while building the fixture

    def test_validate_features(self, runner, workspace):
        result = runner.invoke(main, ["validate-features",
                                      "--manifest", str(workspace["manifest"])])
        assert result.exit_code == 0, result.output
        assert "12 recordings, 4 layers x 6 dims at 100 fps" in result.output

    def test_split_writes_json(self, runner, workspace):
        out = workspace["root"] / "split.json"
        result = runner.invoke(main, ["split", "--manifest", str(workspace["manifest"]),
                                      "--mode", "speaker", "--ratio", "0.25",
                                      "--seed", "3", "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert out.exists()
        assert "train:" in result.output and "val:" in result.output

    def test_train_reports_epochs_and_files(self, workspace):
        out = workspace["train_output"]
        assert "epoch   1" in out and "epoch   2" in out
        assert "best epoch" in out
        assert "checkpoint:" in out
        assert (workspace["root"] / "ckpt" / "model.pt").exists()
        assert (workspace["root"] / "ckpt" / "trace.csv").exists()

    def test_predict_writes_csv(self, runner, workspace):
        out = workspace["root"] / "preds.csv"
        result = runner.invoke(main, [
            "predict", "--ckpt", str(workspace["root"] / "ckpt"),
            "--manifest", str(workspace["manifest"]),
            "--logic", "or", "--window", "0.3", "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "wrote 12 predictions" in result.output
        lines = out.read_text().splitlines()
        assert lines[0] == "recording_id,patient_id,p_nc_sum,p_mci_sum,label"
        assert len(lines) == 13

    def test_trace_export(self, runner, workspace):
        out = workspace["root"] / "trace.csv"
        result = runner.invoke(main, [
            "trace-export", "--ckpt", str(workspace["root"] / "ckpt"),
            "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "3 snapshots x 4 layers" in result.output

    def test_trace_export_final_only(self, runner, workspace):
        out = workspace["root"] / "trace_final.csv"
        result = runner.invoke(main, [
            "trace-export", "--ckpt", str(workspace["root"] / "ckpt"),
            "--out", str(out), "--final-only"])
        assert result.exit_code == 0, result.output
        assert len(out.read_text().splitlines()) == 1 + 4

    def test_cv_prints_fold_table(self, runner, workspace):
        result = runner.invoke(main, [
            "cv", "--manifest", str(workspace["manifest"]), "--k", "3",
            "--major-layer", "3", "--major-weight", "2.0", *FAST_TRAIN])
        assert result.exit_code == 0, result.output
        lines = result.output.splitlines()
        assert "Fold,ACC,Precision,Recall,F1" in lines
        start = lines.index("Fold,ACC,Precision,Recall,F1")
        assert [ln.split(",")[0] for ln in lines[start + 1:start + 4]] == ["1", "2", "3"]


class TestPerturbCommand:
    def test_pin_identity_round_trip(self, runner, tmp_path):
        rng = np.random.default_rng(3)
        wav = tmp_path / "tone.wav"
        write_wav(AudioClip(16000, 0.1 * rng.standard_normal(4000)), wav)
        result = runner.invoke(main, [
            "perturb", "--in", str(wav), "--out", str(tmp_path / "out"),
            "--seed", "9", "--pin-identity"])
        assert result.exit_code == 0, result.output
        out = tmp_path / "out" / "tone_p0.wav"
        assert out.exists()
        diff = read_wav(out).samples - read_wav(wav).samples
        assert np.sqrt(np.mean(diff ** 2)) < 1e-3

    def test_multiple_copies(self, runner, tmp_path):
        rng = np.random.default_rng(4)
        wav = tmp_path / "x.wav"
        write_wav(AudioClip(16000, 0.1 * rng.standard_normal(4000)), wav)
        result = runner.invoke(main, [
            "perturb", "--in", str(wav), "--out", str(tmp_path / "out"),
            "--seed", "9", "--copies", "2"])
        assert result.exit_code == 0, result.output
        assert "2 files written" in result.output
        assert (tmp_path / "out" / "x_p0.wav").exists()
        assert (tmp_path / "out" / "x_p1.wav").exists()


class TestErrorReporting:
    def test_missing_checkpoint_fails_cleanly(self, runner, workspace, tmp_path):
        result = runner.invoke(main, [
            "predict", "--ckpt", str(tmp_path / "nowhere"),
            "--manifest", str(workspace["manifest"]),
            "--out", str(tmp_path / "p.csv")])
        assert result.exit_code == 1
        assert "Error" in result.output
        assert "checkpoint not found" in result.output

    def test_bad_manifest_fails_cleanly(self, runner, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{not json}\n")
        result = runner.invoke(main, ["validate-features", "--manifest", str(bad)])
        assert result.exit_code == 1
        assert "Error" in result.output

    def test_help_lists_subcommands(self, runner):
        result = runner.invoke(main, ["--help"])
        assert result.exit_code == 0
        for cmd in ("synth", "split", "train", "layer-scan", "cv", "predict",
                    "perturb", "trace-export", "serve"):
            assert cmd in result.output
