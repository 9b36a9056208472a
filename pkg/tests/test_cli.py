"""Command-line verbs, exit codes and output files."""

import json

import numpy as np
import pytest

from hiergen.checkpoint import save_checkpoint
from hiergen.cli import run
from hiergen.config import toy_model_config
from hiergen.models import build
from hiergen.synthetic import write_squad_corpus
from hiergen.training import fit

from conftest import toy_instance

SMALL = ["word_dim=8", "bio_dim=2", "flag_dim=2", "enc_hidden=6", "sent_hidden=6", "dec_hidden=8", "attn_dim=6",
         "min_freq=1", "epochs=1", "batch_size=8", "decode_max_len=6"]


def sets(pairs):
    return [x for p in pairs for x in ("--set", p)]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Preprocess a 40-instance synthetic corpus and train one epoch of the hierarchical LSTM."""
    root = tmp_path_factory.mktemp("cli")
    write_squad_corpus(root / "train.json", 40, seed=0)
    data = root / "data"
    assert run(["preprocess", "--data", str(root), "--out", str(data), *sets(SMALL)]) == 0
    out = root / "run"
    assert run(["train", "--arch", "HierSeq2SeqAE", "--data", str(data), "--out", str(out), *sets(SMALL)]) == 0
    return root, data, out


class TestExitCodes:
    def test_unknown_verb(self, capsys):
        assert run(["frobnicate"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_missing_verb(self):
        assert run([]) == 1

    def test_missing_config_file(self, tmp_path, capsys):
        assert run(["gradcheck", "--config", str(tmp_path / "none.cfg")]) == 1
        assert "not found" in capsys.readouterr().err

    def test_unknown_config_key(self):
        assert run(["gradcheck", "--set", "no_such_key=1"]) == 1

    def test_bad_thread_cap(self, monkeypatch):
        monkeypatch.setenv("HIERGEN_THREADS", "zero")
        assert run(["gradcheck"]) == 1

    def test_train_without_data(self):
        assert run(["train"]) == 1

    def test_inspect_attention_on_flat_model(self, capsys):
        assert run(["inspect-attention", "--arch", "Seq2SeqAttAE"]) == 1
        assert "no hierarchical attention" in capsys.readouterr().err


class TestGradcheck:
    @pytest.mark.parametrize("arch", ["HierSeq2SeqAE", "HierTransSeq2SeqAE"])
    def test_toy_passes(self, arch, capsys, tmp_path):
        assert run(["gradcheck", "--arch", arch, "--out", str(tmp_path)]) == 0
        out = capsys.readouterr()
        assert out.out.strip().endswith("PASS")
        assert "architecture = " + arch in out.err
        assert json.loads((tmp_path / "gradcheck.json").read_text())["passed"] is True
        assert (tmp_path / "config.txt").read_text().count("=") > 10


class TestPipeline:
    def test_preprocess_outputs(self, pipeline):
        _, data, _ = pipeline
        lines = (data / "train.jsonl").read_text().splitlines() + (data / "dev.jsonl").read_text().splitlines()
        assert len(lines) == 40
        assert (data / "vocab.txt").read_text().strip()

    def test_train_outputs(self, pipeline):
        _, _, out = pipeline
        record = json.loads((out / "run_record.json").read_text())
        assert len(record["epoch_losses"]) == 1 and 0.0 <= record["dev_bleu4"][0] <= 1.0
        assert (out / "best.ckpt").read_bytes()[:4] == b"HGT1"

    def test_generate_then_evaluate(self, pipeline, capsys):
        _, data, out = pipeline
        args = ["--arch", "HierSeq2SeqAE", "--data", str(data), "--out", str(out), *sets(SMALL)]
        assert run(["generate", *args]) == 0
        gens = [json.loads(line) for line in (out / "generations.jsonl").read_text().splitlines()]
        assert len(gens) == 4 and {"id", "paragraph_id", "generated", "reference"} <= set(gens[0])
        capsys.readouterr()
        assert run(["evaluate", "--out", str(out)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["n_instances"] == 4 and 0.0 <= report["bleu4"] <= 1.0
        assert json.loads((out / "eval.json").read_text()) == report

    def test_generate_with_wrong_architecture_checkpoint(self, pipeline):
        _, data, out = pipeline
        assert run(["generate", "--arch", "Seq2SeqAttAE", "--data", str(data), "--out", str(out), *sets(SMALL)]) == 1

    def test_evaluate_text_files(self, tmp_path, capsys):
        (tmp_path / "h.txt").write_text("a b c d\n")
        (tmp_path / "r.txt").write_text("a c d\n")
        files = ["--set", f"hypotheses={tmp_path / 'h.txt'}", "--set", f"references={tmp_path / 'r.txt'}"]
        assert run(["evaluate", *files]) == 0
        assert json.loads(capsys.readouterr().out)["rouge_l"] == pytest.approx(33 / 38, rel=1e-15)
        (tmp_path / "r.txt").write_text("a c d\nx\n")
        assert run(["evaluate", *files]) == 1


@pytest.fixture(scope="module")
def memorised(tmp_path_factory):
    """Checkpoint of the hierarchical LSTM after memorising the toy instance."""
    model = build(toy_model_config("HierSeq2SeqAE"))
    fit(model, [toy_instance()], 500, lr=1e-2, target=0.05)
    path = tmp_path_factory.mktemp("att") / "toy.ckpt"
    save_checkpoint(path, model.params.state_dict())
    return path


class TestInspectAttention:
    def test_weights_are_distributions_with_exact_zeros(self, memorised, capsys):
        assert run(["inspect-attention", "--arch", "HierSeq2SeqAE", "--set", f"checkpoint={memorised}"]) == 0
        dump = json.loads(capsys.readouterr().out)
        assert dump["architecture"] == "HierSeq2SeqAE"
        assert [s["input"] for s in dump["steps"]] == ["<bos>", "10", "11", "5"]
        weights = np.array([[s["weight"] for s in step["sentences"]] for step in dump["steps"]])
        np.testing.assert_allclose(weights.sum(axis=1), 1.0, atol=1e-12)
        assert np.any(weights == 0.0)
        for step in dump["steps"]:
            for s in step["sentences"]:
                w = [t["weight"] for t in s["top_words"]]
                assert w == sorted(w, reverse=True)

    def test_transformer_variant(self, capsys):
        assert run(["inspect-attention", "--arch", "HierTransSeq2SeqAE"]) == 0
        dump = json.loads(capsys.readouterr().out)
        assert len(dump["steps"]) >= 1
