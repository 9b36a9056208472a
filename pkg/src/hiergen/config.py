"""Configuration dataclasses and the ``key = value`` config-file format.

All keys live in one flat namespace shared by :class:`ModelConfig`,
:class:`TrainConfig` and :class:`DataConfig`.  Blank lines and ``#`` comments are
ignored; unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple

from .exceptions import ConfigError

ARCHITECTURES = ("Seq2SeqAttAE", "HierSeq2SeqAE", "TransSeq2SeqAE", "HierTransSeq2SeqAE")


@dataclass
class ModelConfig:
    architecture: str = "HierSeq2SeqAE"
    vocab_size: int = 45004
    word_dim: int = 300
    bio_dim: int = 16
    flag_dim: int = 16
    # BiLSTM models
    enc_hidden: int = 256
    sent_hidden: int = 256
    dec_hidden: int = 512
    attn_dim: int = 256
    word_attention_norm: str = "paragraph"
    # Transformer models
    d_model: int = 128
    heads: int = 4
    d_ff: int = 512
    word_layers: int = 2
    sent_layers: int = 2
    dec_layers: int = 2
    hatt_scale: str = "sqrt_d"
    answer_feature_mode: str = "concat"
    # length limits
    max_sentences: int = 20
    max_sentence_len: int = 50
    max_question_len: int = 30
    seed: int = 0

    @property
    def is_transformer(self) -> bool:
        return self.architecture.startswith("Trans") or self.architecture.startswith("HierTrans")

    @property
    def is_hierarchical(self) -> bool:
        return self.architecture.startswith("Hier")

    def validate(self) -> "ModelConfig":
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.architecture!r}; expected one of {ARCHITECTURES}")
        positive = [f.name for f in fields(self) if f.type in ("int", int) and f.name != "seed"]
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.vocab_size < 5:
            raise ConfigError("vocab_size must cover the 4 reserved tokens plus at least one word")
        if self.is_transformer:
            if self.d_model % self.heads:
                raise ConfigError(f"d_model={self.d_model} is not divisible by heads={self.heads}")
            if self.d_ff < self.d_model:
                raise ConfigError(f"d_ff={self.d_ff} must be >= d_model={self.d_model}")
            if self.answer_feature_mode not in ("concat", "add"):
                raise ConfigError(f"answer_feature_mode must be concat or add, got {self.answer_feature_mode!r}")
            if self.answer_feature_mode == "add" and self.word_dim != self.d_model:
                raise ConfigError("answer_feature_mode=add needs word_dim == d_model")
        if self.hatt_scale not in ("sqrt_d", "d"):
            raise ConfigError(f"hatt_scale must be sqrt_d or d, got {self.hatt_scale!r}")
        if self.word_attention_norm not in ("paragraph", "sentence"):
            raise ConfigError(f"word_attention_norm must be paragraph or sentence, got {self.word_attention_norm!r}")
        return self


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 5.0
    batch_size: int = 32
    epochs: int = 20
    patience: int = 3
    decode_max_len: int = 30
    beam_size: int = 1
    length_alpha: float = 0.7


@dataclass
class DataConfig:
    dataset: str = "squad"
    train_file: str = "train.json"
    test_file: str = ""
    split_ratio: float = 0.9
    vocab_max_size: int = 45000
    min_freq: int = 2
    embeddings_file: str = ""
    split: str = "dev"
    checkpoint: str = ""
    generations: str = ""
    hypotheses: str = ""
    references: str = ""
    instance: int = 0


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)

    @property
    def seed(self) -> int:
        return self.model.seed

    def _sections(self):
        return (self.model, self.train, self.data)

    def keys(self) -> Dict[str, object]:
        out = {}
        for section in self._sections():
            for f in fields(section):
                out[f.name] = section
        return out

    def set(self, key: str, raw: str) -> None:
        owners = self.keys()
        if key not in owners:
            raise ConfigError(f"unknown config key {key!r}")
        section = owners[key]
        ftype = {f.name: f.type for f in fields(section)}[key]
        setattr(section, key, _coerce(key, raw, ftype))

    def update(self, pairs: Iterable[Tuple[str, str]]) -> "RunConfig":
        for k, v in pairs:
            self.set(k, v)
        return self

    def to_text(self) -> str:
        lines = []
        for section in self._sections():
            lines.append(f"# {type(section).__name__}")
            for f in fields(section):
                lines.append(f"{f.name} = {getattr(section, f.name)}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:16]

    def copy(self) -> "RunConfig":
        return dataclasses.replace(
            self,
            model=dataclasses.replace(self.model),
            train=dataclasses.replace(self.train),
            data=dataclasses.replace(self.data),
        )


def _coerce(key: str, raw: str, ftype) -> object:
    raw = raw.strip()
    name = ftype if isinstance(ftype, str) else ftype.__name__
    try:
        if name == "int":
            return int(raw)
        if name == "float":
            return float(raw)
        if name == "bool":
            if raw.lower() in ("1", "true", "yes"):
                return True
            if raw.lower() in ("0", "false", "no"):
                return False
            raise ValueError(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {name}") from exc
    return raw


def parse_pairs(text: str, source: str = "<config>"):
    pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        k, v = line.split("=", 1)
        pairs.append((k.strip(), v.strip()))
    return pairs


def parse_override(item: str) -> Tuple[str, str]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    k, v = item.split("=", 1)
    return k.strip(), v.strip()


def load_config(path: Optional[str] = None, overrides: Iterable[str] = (), seed: Optional[int] = None, arch: Optional[str] = None) -> RunConfig:
    """Resolve defaults < config file < ``--set`` overrides < dedicated flags."""
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        cfg.update(parse_pairs(p.read_text(encoding="utf-8"), str(p)))
    cfg.update(parse_override(o) for o in overrides)
    if seed is not None:
        cfg.model.seed = int(seed)
    if arch is not None:
        cfg.model.architecture = arch
    return cfg


def toy_model_config(architecture: str = "HierSeq2SeqAE", vocab_size: int = 12, seed: int = 0) -> ModelConfig:
    """Tiny dimensions for gradient checks and memorisation runs."""
    return ModelConfig(
        architecture=architecture,
        vocab_size=vocab_size,
        word_dim=6,
        bio_dim=3,
        flag_dim=3,
        enc_hidden=5,
        sent_hidden=4,
        dec_hidden=7,
        attn_dim=5,
        d_model=8,
        heads=2,
        d_ff=12,
        word_layers=1,
        sent_layers=1,
        dec_layers=1,
        seed=seed,
    ).validate()
