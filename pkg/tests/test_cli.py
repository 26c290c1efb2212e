"""Command-line pipelines: smoke runs, exit codes, manifests."""

import json
import os

import numpy as np
import pytest

from neurosem import tensorfile
from neurosem.cli import main


def run(args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synthdata")
    code = run(["synth", "--classes", 3, "--epochs-per-class", 6,
                "--channels", 4, "--samples", 32, "--seed", 1,
                "--informative", "1,3", "--dim", 8, "--out", out])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def trained_dir(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = run(["train", "--dataset", synth_dir / "dataset.eeg",
                "--bank", synth_dir / "bank.jsonl", "--out", out,
                "--epochs", 2, "--batch-size", 6, "--seed", 0])
    assert code == 0
    return out


class TestSynth:
    def test_outputs_exist(self, synth_dir):
        assert (synth_dir / "dataset.eeg").exists()
        assert (synth_dir / "bank.jsonl").exists()
        assert (synth_dir / "layout.csv").exists()
        manifest = json.loads((synth_dir / "manifests" / "synth.json").read_text())
        assert manifest["command"] == "synth"
        assert sorted(manifest["outputs"]) == ["bank.jsonl", "dataset.eeg",
                                               "layout.csv"]

    def test_deterministic_across_runs(self, synth_dir, tmp_path):
        out2 = tmp_path / "again"
        assert run(["synth", "--classes", 3, "--epochs-per-class", 6,
                    "--channels", 4, "--samples", 32, "--seed", 1,
                    "--informative", "1,3", "--dim", 8, "--out", out2]) == 0
        for name in ("dataset.eeg", "bank.jsonl", "layout.csv",
                     "manifests/synth.json"):
            assert (synth_dir / name).read_bytes() == (out2 / name).read_bytes()


class TestTrain:
    def test_checkpoint_and_log_exist(self, trained_dir):
        assert (trained_dir / "checkpoints" / "best" / "manifest.json").exists()
        log = (trained_dir / "logs" / "train_log.csv").read_text()
        assert log.startswith("epoch,loss")
        assert len(log.strip().split("\n")) == 3  # header + 2 epochs

    def test_effective_config_reparses(self, trained_dir):
        from neurosem import config as cfgmod
        eff = trained_dir / "manifests" / "effective_config.toml"
        parsed = cfgmod.parse_config(eff)
        assert parsed.train.epochs == 2

    def test_missing_paths_is_config_error(self):
        assert run(["train"]) == 2

    def test_bad_dataset_path_is_data_error(self, synth_dir, tmp_path):
        missing = tmp_path / "nope.eeg"
        missing.write_bytes(b"junk")
        code = run(["train", "--dataset", missing,
                    "--bank", synth_dir / "bank.jsonl",
                    "--out", tmp_path / "o", "--epochs", 1])
        assert code == 3

    def test_ablation_table(self, synth_dir, tmp_path):
        out = tmp_path / "abl"
        code = run(["train", "--dataset", synth_dir / "dataset.eeg",
                    "--bank", synth_dir / "bank.jsonl", "--out", out,
                    "--epochs", 1, "--batch-size", 6, "--ablate-loss"])
        assert code == 0
        table = (out / "logs" / "ablation.csv").read_text()
        lines = table.strip().split("\n")
        assert lines[0].startswith("loss_kind,final_loss,mean_acc")
        kinds = [line.split(",")[0] for line in lines[1:]]
        assert kinds == ["contrastive", "mse"]


class TestRetrieve:
    def test_manifest_and_dominance(self, synth_dir, trained_dir, tmp_path):
        out = tmp_path / "ret"
        code = run(["retrieve", "--ckpt", trained_dir / "checkpoints" / "best",
                    "--dataset", synth_dir / "dataset.eeg",
                    "--bank", synth_dir / "bank.jsonl",
                    "--split", "all", "--topk", 2, "--classify", "--out", out])
        assert code == 0
        rows = [json.loads(line) for line in
                (out / "logs" / "retrieval.jsonl").read_text().strip().split("\n")]
        assert len(rows) == 18
        row = rows[0]
        assert set(row) == {"epoch", "true_class", "predicted_class",
                            "per_head", "prompt"}
        assert len(row["per_head"]) == 10
        assert all(len(v) == 2 for v in row["per_head"].values())
        dom = (out / "logs" / "dominance.csv").read_text().strip().split("\n")
        assert dom[0] == "head,fraction"
        fractions = [float(line.split(",")[1]) for line in dom[1:]]
        assert abs(sum(fractions) - 1.0) < 1e-9

    def test_classify_command(self, synth_dir, trained_dir):
        code = run(["classify", "--ckpt", trained_dir / "checkpoints" / "best",
                    "--dataset", synth_dir / "dataset.eeg",
                    "--bank", synth_dir / "bank.jsonl", "--split", "all"])
        assert code == 0


class TestSaliencyAndTsne:
    def test_saliency_outputs(self, synth_dir, trained_dir, tmp_path):
        out = tmp_path / "salout"
        code = run(["saliency", "--ckpt", trained_dir / "checkpoints" / "best",
                    "--dataset", synth_dir / "dataset.eeg",
                    "--bank", synth_dir / "bank.jsonl",
                    "--layout", synth_dir / "layout.csv",
                    "--split", "all", "--out", out])
        assert code == 0
        csv = (out / "logs" / "saliency_all.csv").read_text()
        assert csv.startswith("channel,score")
        assert (out / "figures" / "topomap_all.svg").exists()

    def test_tsne_outputs(self, synth_dir, trained_dir, tmp_path):
        out = tmp_path / "tsneout"
        code = run(["tsne", "--ckpt", trained_dir / "checkpoints" / "best",
                    "--dataset", synth_dir / "dataset.eeg",
                    "--bank", synth_dir / "bank.jsonl",
                    "--split", "all", "--perplexity", 12,
                    "--iterations", 260, "--out", out])
        assert code == 0
        csv = (out / "logs" / "tsne.csv").read_text().strip().split("\n")
        assert csv[0] == "x,y,label"
        assert len(csv) == 1 + 18 * 10  # one point per (epoch, head)
        assert (out / "figures" / "tsne.svg").exists()


class TestMetricsCli:
    def test_fid_same_file_prints_zero(self, tmp_path, capsys, rng):
        feats = tmp_path / "x.nsem"
        tensorfile.save(feats, rng.normal(size=(64, 8)))
        assert run(["metrics", "fid", "--a", feats, "--b", feats]) == 0
        payload = json.loads(capsys.readouterr().out.strip())
        assert payload["metric"] == "fid"
        assert abs(payload["value"]) < 1e-8

    def test_is_cli(self, tmp_path, capsys):
        probs = np.full((64, 8), 0.125)
        path = tmp_path / "p.nsem"
        tensorfile.save(path, probs)
        assert run(["metrics", "is", "--probs", path, "--splits", 8]) == 0
        payload = json.loads(capsys.readouterr().out.strip())
        assert payload["value"] == 1.0

    def test_ssim_cli(self, tmp_path, capsys, rng):
        from PIL import Image
        img = rng.integers(0, 256, size=(32, 32, 3)).astype(np.uint8)
        p = tmp_path / "img.png"
        Image.fromarray(img).save(p)
        assert run(["metrics", "ssim", "--a", p, "--b", p]) == 0
        payload = json.loads(capsys.readouterr().out.strip())
        assert abs(payload["value"] - 1.0) < 1e-9

    def test_unknown_subcommand_exit_2(self):
        assert run(["metrics", "nope"]) == 2


class TestPrompt:
    def test_prompt_assembly_without_endpoint(self, synth_dir, trained_dir,
                                              tmp_path):
        ret_out = tmp_path / "r"
        assert run(["retrieve", "--ckpt", trained_dir / "checkpoints" / "best",
                    "--dataset", synth_dir / "dataset.eeg",
                    "--bank", synth_dir / "bank.jsonl",
                    "--split", "all", "--out", ret_out]) == 0
        out = tmp_path / "p"
        code = run(["prompt", "--retrieval", ret_out / "logs" / "retrieval.jsonl",
                    "--bank", synth_dir / "bank.jsonl", "--out", out])
        assert code == 0
        lines = (out / "logs" / "prompts.jsonl").read_text().strip().split("\n")
        assert len(lines) == 18
        first = json.loads(lines[0])
        assert first["prompt"]
        assert len(first["sources"]) == 10


def test_reproducible_train_rerun(synth_dir, tmp_path):
    outs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        assert run(["train", "--dataset", synth_dir / "dataset.eeg",
                    "--bank", synth_dir / "bank.jsonl", "--out", out,
                    "--epochs", 2, "--batch-size", 6, "--seed", 3]) == 0
        outs.append(out)
    a, b = outs
    assert ((a / "logs" / "train_log.csv").read_bytes()
            == (b / "logs" / "train_log.csv").read_bytes())
    for f in sorted(os.listdir(a / "checkpoints" / "best")):
        assert ((a / "checkpoints" / "best" / f).read_bytes()
                == (b / "checkpoints" / "best" / f).read_bytes()), f
