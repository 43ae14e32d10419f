import json
import os

import numpy as np
import pytest

from pangram_fusion.cli import main
from pangram_fusion.io_utils import atomic_path, atomic_write_text
from pangram_fusion.trainer import TrainConfig


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    code = main([
        "synth", "--out", str(out), "--n", "120", "--delta", "3.0",
        "--seed", "7", "--sets", "wavlm,imagebind",
        "--dim", "wavlm=16", "--dim", "imagebind=12",
    ])
    assert code == 0
    return out


def fast_config(tmp_path) -> str:
    cfg = TrainConfig(num_epochs=12, learning_rate=0.3, momentum=0.5,
                      optimizer="sgd", batch_size=128, seed=11,
                      random_state=13, w_pred=1.0, w_cos=0.5, w_rec=0.5,
                      scaling_method="minmax", corr_thr=0.85)
    path = tmp_path / "config.json"
    path.write_text(cfg.to_json(), encoding="utf-8")
    return str(path)


@pytest.fixture(scope="module")
def trained_dir(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    cfg_path = fast_config(out)
    code = main([
        "train", "--manifest", str(synth_dir / "manifest.csv"),
        "--features", f"wavlm={synth_dir / 'wavlm.csv'}",
        "--features", f"imagebind={synth_dir / 'imagebind.csv'}",
        "--arch", "fusion", "--config", cfg_path,
        "--out", str(out), "--seed", "3",
    ])
    assert code == 0
    return out


class TestSynthTrainEvaluateSmoke:
    def test_synth_artifacts(self, synth_dir):
        assert (synth_dir / "manifest.csv").exists()
        assert (synth_dir / "wavlm.csv").exists()
        assert (synth_dir / "imagebind.csv").exists()

    def test_train_artifacts(self, trained_dir):
        assert (trained_dir / "checkpoint.json").exists()
        assert (trained_dir / "history.csv").exists()
        assert (trained_dir / "plan_wavlm.json").exists()

    def test_evaluate_produces_three_artifacts(self, synth_dir, trained_dir,
                                               tmp_path):
        out = tmp_path / "eval"
        code = main([
            "evaluate", "--checkpoint", str(trained_dir / "checkpoint.json"),
            "--manifest", str(synth_dir / "manifest.csv"),
            "--features", f"wavlm={synth_dir / 'wavlm.csv'}",
            "--features", f"imagebind={synth_dir / 'imagebind.csv'}",
            "--out", str(out), "--threshold", "0.5",
        ])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        for key in ("accuracy", "sensitivity", "specificity", "ppv", "npv"):
            assert key in report
        assert (out / "roc.csv").exists()
        assert (out / "confusion.csv").exists()

    def test_missing_manifest_exit_2(self, tmp_path):
        code = main([
            "train", "--manifest", str(tmp_path / "nope.csv"),
            "--features", "wavlm=x.csv", "--out", str(tmp_path),
        ])
        assert code == 2

    def test_unknown_subcommand_exit_1(self, capsys):
        assert main(["frobnicate"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_unknown_flag_exit_1(self):
        assert main(["synth", "--bogus"]) == 1


class TestBiasAndErrorTree:
    def test_bias_test(self, synth_dir, trained_dir, tmp_path):
        out = tmp_path / "bias"
        code = main([
            "bias-test", "--checkpoint", str(trained_dir / "checkpoint.json"),
            "--manifest", str(synth_dir / "manifest.csv"),
            "--features", f"wavlm={synth_dir / 'wavlm.csv'}",
            "--features", f"imagebind={synth_dir / 'imagebind.csv'}",
            "--out", str(out),
        ])
        assert code == 0
        lines = (out / "bias.csv").read_text().strip().splitlines()
        assert len(lines) == 7  # header + six comparisons

    def test_error_tree(self, synth_dir, trained_dir, tmp_path):
        out = tmp_path / "tree"
        code = main([
            "error-tree", "--checkpoint", str(trained_dir / "checkpoint.json"),
            "--manifest", str(synth_dir / "manifest.csv"),
            "--features", f"wavlm={synth_dir / 'wavlm.csv'}",
            "--features", f"imagebind={synth_dir / 'imagebind.csv'}",
            "--out", str(out), "--min-leaf", "5",
        ])
        assert code == 0
        doc = json.loads((out / "error_tree.json").read_text())
        assert doc["n"] > 0
        heatmaps = [f for f in os.listdir(out) if f.startswith("heatmap_")]
        assert len(heatmaps) == 6


class TestDeterminism:
    def test_train_byte_identical(self, synth_dir, tmp_path):
        cfg_path = fast_config(tmp_path)
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            code = main([
                "train", "--manifest", str(synth_dir / "manifest.csv"),
                "--features", f"wavlm={synth_dir / 'wavlm.csv'}",
                "--features", f"imagebind={synth_dir / 'imagebind.csv'}",
                "--arch", "fusion", "--config", cfg_path,
                "--out", str(out), "--seed", "5",
            ])
            assert code == 0
            outs.append(out)
        a = (outs[0] / "checkpoint.json").read_bytes()
        b = (outs[1] / "checkpoint.json").read_bytes()
        assert a == b

    def test_synth_byte_identical(self, tmp_path):
        for name in ("a", "b"):
            assert main(["synth", "--out", str(tmp_path / name), "--n", "30",
                         "--sets", "wavlm", "--dim", "wavlm=8",
                         "--seed", "9"]) == 0
        assert ((tmp_path / "a" / "wavlm.csv").read_bytes()
                == (tmp_path / "b" / "wavlm.csv").read_bytes())

    def test_tune_identical_rankings(self, synth_dir, tmp_path):
        logs = []
        for name in ("a", "b"):
            out = tmp_path / name
            code = main([
                "tune", "--manifest", str(synth_dir / "manifest.csv"),
                "--features", f"wavlm={synth_dir / 'wavlm.csv'}",
                "--arch", "baseline", "--trials", "3",
                "--out", str(out), "--seed", "17",
            ])
            assert code == 0
            logs.append((out / "trials.jsonl").read_bytes())
        assert logs[0] == logs[1]


class TestOtherCommands:
    def test_preprocess(self, synth_dir, tmp_path):
        out = tmp_path / "prep"
        code = main([
            "preprocess", "--manifest", str(synth_dir / "manifest.csv"),
            "--features", f"wavlm={synth_dir / 'wavlm.csv'}",
            "--out", str(out), "--seed", "3",
        ])
        assert code == 0
        plan = json.loads((out / "plan_wavlm.json").read_text())
        assert plan["scaler"] == "minmax"  # reference config default
        assert (out / "wavlm_transformed.csv").exists()

    def test_extract(self, tmp_path):
        import numpy as np

        from pangram_fusion.acoustic import AudioClip, save_wav

        wav_dir = tmp_path / "wavs"
        wav_dir.mkdir()
        fs = 16000
        t = np.arange(fs) / fs
        for i, freq in enumerate((180.0, 220.0)):
            phase = 2 * np.pi * (freq * t - 10 / (2 * np.pi * 4)
                                 * np.cos(2 * np.pi * 4 * t))
            save_wav(AudioClip(0.6 * np.sin(phase)),
                     wav_dir / f"clip{i}.wav")
        out = tmp_path / "acoustic.csv"
        assert main(["extract", "--in", str(wav_dir), "--out", str(out)]) == 0
        from pangram_fusion.dataset import load_feature_csv

        fm = load_feature_csv(out, "acoustic")
        assert fm.dim == 38
        assert set(fm.rows) == {"clip0", "clip1"}

    def test_crossval(self, synth_dir, tmp_path):
        out = tmp_path / "cv"
        cfg_path = fast_config(tmp_path)
        code = main([
            "crossval", "--manifest", str(synth_dir / "manifest.csv"),
            "--features", f"wavlm={synth_dir / 'wavlm.csv'}",
            "--arch", "baseline", "--config", cfg_path,
            "--k", "3", "--out", str(out), "--seed", "2",
        ])
        assert code == 0
        lines = (out / "crossval.csv").read_text().strip().splitlines()
        assert len(lines) == 4
        summary = json.loads((out / "crossval_summary.json").read_text())
        assert summary["k"] == 3

    def test_tune_resume_skips(self, synth_dir, tmp_path):
        out = tmp_path / "tune"
        base_args = [
            "tune", "--manifest", str(synth_dir / "manifest.csv"),
            "--features", f"wavlm={synth_dir / 'wavlm.csv'}",
            "--arch", "baseline", "--out", str(out), "--seed", "23",
        ]
        assert main(base_args + ["--trials", "2"]) == 0
        first = (out / "trials.jsonl").read_text().splitlines()
        assert main(base_args + ["--trials", "4", "--resume"]) == 0
        second = (out / "trials.jsonl").read_text().splitlines()
        assert len(first) == 2 and len(second) == 4
        assert second[:2] == first


class TestAtomicWrites:
    def test_no_partial_file_on_failure(self, tmp_path):
        target = tmp_path / "artifact.json"
        with pytest.raises(RuntimeError):
            with atomic_path(target) as tmp:
                with open(tmp, "w") as fh:
                    fh.write("partial")
                raise RuntimeError("crash mid-write")
        assert not target.exists()
        assert list(tmp_path.iterdir()) == []

    def test_successful_write_replaces(self, tmp_path):
        target = tmp_path / "artifact.json"
        atomic_write_text(target, "v1")
        atomic_write_text(target, "v2")
        assert target.read_text() == "v2"
