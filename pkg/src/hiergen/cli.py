"""Command-line entry point: ``hiergen <verb> [flags]``.

Verbs and the files they read and write (``--data`` is an input directory,
``--out`` an output directory):

* ``preprocess``: raw ``train_file`` (and optional ``test_file``) under ``--data``
  -> ``train.jsonl``, ``dev.jsonl`` [, ``test.jsonl``], ``vocab.txt``.
* ``train``: a preprocessed directory -> ``best.ckpt``, ``train_log.jsonl``,
  ``run_record.json``.
* ``generate``: a preprocessed directory plus ``checkpoint`` -> ``generations.jsonl``.
* ``evaluate``: ``generations`` JSON-lines, or ``hypotheses``/``references`` text
  files with one tokenized sentence per line -> ``eval.json``.
* ``gradcheck``: finite-difference check on a toy instance, or on instance
  ``instance`` of the ``split`` file when ``--data`` is given.
* ``inspect-attention``: per-step sentence and word weights of one instance as JSON.

Every command writes its resolved configuration to stderr (and to
``config.txt`` under ``--out``).  Exit codes: 0 success, 1 invalid input or
configuration, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import data as D
from .checkpoint import load_checkpoint
from .config import ARCHITECTURES, RunConfig, load_config, toy_model_config
from .decoding import generate, greedy_decode, read_generations, write_generations
from .evaluation import evaluate, split_tokens
from .exceptions import ConfigError, DataFormatError, DimensionError, DomainError
from .models import build
from .training import gradcheck, train

logger = logging.getLogger("hiergen")

VERBS = ("preprocess", "train", "generate", "evaluate", "gradcheck", "inspect-attention")

_INPUT_ERRORS = (ConfigError, DataFormatError, DimensionError, DomainError, FileNotFoundError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hiergen", description="Question generation with hierarchical paragraph encoders.")
    parser.add_argument("verb", choices=VERBS)
    parser.add_argument("--config", metavar="PATH", help="key = value config file")
    parser.add_argument("--set", metavar="KEY=VALUE", action="append", default=[], help="override one config key (repeatable)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--arch", choices=ARCHITECTURES)
    parser.add_argument("--data", metavar="DIR")
    parser.add_argument("--out", metavar="DIR")
    return parser


@contextlib.contextmanager
def _thread_cap():
    value = os.environ.get("HIERGEN_THREADS")
    if not value:
        yield
        return
    try:
        n = int(value)
    except ValueError:
        raise ConfigError(f"HIERGEN_THREADS must be a positive integer, got {value!r}") from None
    if n < 1:
        raise ConfigError(f"HIERGEN_THREADS must be a positive integer, got {value!r}")
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=n):
        yield


def _require(path: Optional[str], what: str) -> Path:
    if not path:
        raise ConfigError(f"{what} is required")
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_split(data_dir: Path, split: str, cfg: RunConfig) -> List[D.QGInstance]:
    vocab = D.Vocab.load(_require(str(data_dir / "vocab.txt"), "vocabulary"))
    examples = D.read_examples(_require(str(data_dir / f"{split}.jsonl"), f"{split} split"))
    m = cfg.model
    return D.encode_examples(examples, vocab, m.max_sentences, m.max_sentence_len, m.max_question_len)


def _vocab(data_dir: Path, cfg: RunConfig) -> D.Vocab:
    vocab = D.Vocab.load(_require(str(data_dir / "vocab.txt"), "vocabulary"))
    cfg.model.vocab_size = len(vocab)
    return vocab


def _model(cfg: RunConfig, checkpoint: Optional[str] = None):
    model = build(cfg.model)
    if checkpoint:
        state = load_checkpoint(_require(checkpoint, "checkpoint"))
        try:
            model.params.load_state_dict(state)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"checkpoint {checkpoint} does not fit the configured model: {exc}") from None
    return model


def _checkpoint_path(cfg: RunConfig, args) -> Optional[str]:
    if cfg.data.checkpoint:
        return cfg.data.checkpoint
    if args.out and (Path(args.out) / "best.ckpt").exists():
        return str(Path(args.out) / "best.ckpt")
    return None


# ---------------------------------------------------------------------------
# verbs


def cmd_preprocess(cfg: RunConfig, args) -> int:
    d = cfg.data
    data_dir = Path(args.data or ".")
    loader = {"squad": D.load_squad, "marco": D.load_marco}.get(d.dataset)
    if loader is None:
        raise ConfigError(f"dataset must be squad or marco, got {d.dataset!r}")
    records = loader(_require(str(data_dir / d.train_file), "train_file"))
    if not records:
        raise DataFormatError(f"{data_dir / d.train_file}: no usable records")
    train_ex, dev_ex, vocab = D.preprocess(records, d.split_ratio, cfg.seed, d.vocab_max_size, d.min_freq)
    out = _out_dir(args)
    D.write_examples(out / "train.jsonl", train_ex)
    D.write_examples(out / "dev.jsonl", dev_ex)
    counts = {"train": len(train_ex), "dev": len(dev_ex)}
    if d.test_file:
        test_ex = [D.make_example(r) for r in loader(_require(str(data_dir / d.test_file), "test_file"))]
        D.write_examples(out / "test.jsonl", test_ex)
        counts["test"] = len(test_ex)
    vocab.save(out / "vocab.txt")
    print(json.dumps({"records": len(records), "vocab_size": len(vocab), **counts}, sort_keys=True))
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    data_dir = Path(_require(args.data, "--data"))
    vocab = _vocab(data_dir, cfg)
    train_data = _load_split(data_dir, "train", cfg)
    dev_data = _load_split(data_dir, "dev", cfg) if (data_dir / "dev.jsonl").exists() else []
    model = _model(cfg, cfg.data.checkpoint or None)
    if cfg.data.embeddings_file:
        table = D.load_embeddings(_require(cfg.data.embeddings_file, "embeddings_file"), vocab, cfg.model.word_dim, cfg.seed)
        model.load_embedding_matrix(table.matrix)
        logger.info("embeddings: %d found, %d initialised randomly", table.hits, table.misses)
    _, record = train(cfg, train_data, dev_data, _out_dir(args), model)
    print(record.to_json())
    return 0


def cmd_generate(cfg: RunConfig, args) -> int:
    data_dir = Path(_require(args.data, "--data"))
    vocab = _vocab(data_dir, cfg)
    instances = _load_split(data_dir, cfg.data.split, cfg)
    model = _model(cfg, _checkpoint_path(cfg, args))
    t = cfg.train
    records = generate(model, instances, vocab, t.beam_size, t.decode_max_len, t.length_alpha)
    path = Path(cfg.data.generations) if cfg.data.generations else _out_dir(args) / "generations.jsonl"
    write_generations(path, records)
    print(json.dumps({"generations": str(path), "count": len(records)}))
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    d = cfg.data
    if d.hypotheses or d.references:
        hyp_lines = _require(d.hypotheses, "hypotheses").read_text(encoding="utf-8").splitlines()
        ref_lines = _require(d.references, "references").read_text(encoding="utf-8").splitlines()
    else:
        path = d.generations or (str(Path(args.out) / "generations.jsonl") if args.out else "")
        gens = read_generations(_require(path, "generations"))
        hyp_lines = [g["generated"] for g in gens]
        ref_lines = [g["reference"] for g in gens]
    if len(hyp_lines) != len(ref_lines):
        raise ConfigError(f"corpus length mismatch: {len(hyp_lines)} hypotheses vs {len(ref_lines)} references")
    report = evaluate(split_tokens(hyp_lines), split_tokens(ref_lines))
    text = report.to_json(cfg.config_hash(), cfg.seed)
    if args.out:
        (_out_dir(args) / "eval.json").write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def _toy_instance() -> D.QGInstance:
    return D.QGInstance(
        sentences=[[2, 5, 6, 7, 3], [2, 8, 9, 3]],
        question=[10, 11, 5],
        bio_tags=[[0, 1, 2, 0, 0], [0, 0, 0, 0]],
        sentence_has_answer=[True, False],
        answer_span=(0, 1, 2),
        answer=[5, 6],
        id="toy",
    )


def cmd_gradcheck(cfg: RunConfig, args) -> int:
    if args.data:
        _vocab(Path(args.data), cfg)
        instance = _load_split(Path(args.data), cfg.data.split, cfg)[cfg.data.instance]
        model_cfg = cfg.model
    else:
        instance = _toy_instance()
        model_cfg = toy_model_config(cfg.model.architecture, 12, cfg.seed)
    report = gradcheck(model_cfg, instance, seed=cfg.seed)
    print(report.to_text())
    if args.out:
        (_out_dir(args) / "gradcheck.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return 0 if report.passed else 2


def attention_dump(model, instance: D.QGInstance, tokens: Sequence[int], vocab: Optional[D.Vocab] = None, top_k: int = 5) -> dict:
    """Per-step sentence weights and the top-``top_k`` word weights of each sentence."""
    steps = model.attention_trace(instance, tokens)
    words = [vocab.decode(s, strip_special=False) if vocab else [str(t) for t in s] for s in instance.sentences]
    prev = ["<bos>"] + ([vocab.itos[t] for t in tokens] if vocab else [str(t) for t in tokens])
    out = []
    for t, step in enumerate(steps):
        a = np.asarray(step["sentence_weights"], dtype=np.float64)
        b = np.asarray(step["word_weights"], dtype=np.float64)
        sentences, offset = [], 0
        for i, n in enumerate(step["lengths"]):
            w = b[offset : offset + n]
            top = sorted(range(n), key=lambda j: (-w[j], j))[:top_k]
            sentences.append({
                "index": i,
                "weight": float(a[i]),
                "top_words": [{"position": j, "token": words[i][j], "weight": float(w[j])} for j in top],
            })
            offset += n
        out.append({"step": t, "input": prev[t], "sentences": sentences})
    return {"id": instance.id, "architecture": model.config.architecture, "steps": out}


def cmd_inspect_attention(cfg: RunConfig, args) -> int:
    if not cfg.model.is_hierarchical:
        print(f"{cfg.model.architecture} has no hierarchical attention; use HierSeq2SeqAE or HierTransSeq2SeqAE",
              file=sys.stderr)
        return 1
    if args.data:
        vocab = _vocab(Path(args.data), cfg)
        instances = _load_split(Path(args.data), cfg.data.split, cfg)
        if not 0 <= cfg.data.instance < len(instances):
            raise ConfigError(f"instance {cfg.data.instance} out of range (split has {len(instances)})")
        instance = instances[cfg.data.instance]
    else:
        vocab = None
        instance = _toy_instance()
        cfg.model = toy_model_config(cfg.model.architecture, 12, cfg.seed)
    model = _model(cfg, _checkpoint_path(cfg, args))
    tokens = greedy_decode(model, instance, cfg.train.decode_max_len)
    text = json.dumps(attention_dump(model, instance, tokens, vocab), indent=1)
    if args.out:
        (_out_dir(args) / "attention.json").write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


COMMANDS = {
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
    "inspect-attention": cmd_inspect_attention,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Execute one command and return its exit code."""
    try:
        args = make_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    cfg = None
    try:
        cfg = load_config(args.config, args.set, args.seed, args.arch)
        cfg.model.validate()
        with _thread_cap():
            return COMMANDS[args.verb](cfg, args)
    except _INPUT_ERRORS as exc:
        print(f"hiergen {args.verb}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        logger.debug("runtime failure", exc_info=True)
        print(f"hiergen {args.verb}: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    finally:
        if cfg is not None:
            sys.stderr.write(cfg.to_text())
            if args.out and Path(args.out).is_dir():
                (Path(args.out) / "config.txt").write_text(cfg.to_text(), encoding="utf-8")


def main() -> None:
    logging.basicConfig(level=os.environ.get("HIERGEN_LOG", "WARNING"), format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run())
