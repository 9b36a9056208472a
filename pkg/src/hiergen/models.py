"""The four question-generation architectures behind one interface.

Every model exposes:

* ``forward_loss(batch)`` - mean teacher-forced token NLL (scalar tensor);
* ``start(instance)`` / ``step(state, prev_token)`` - incremental decoding, where
  ``step`` returns next-token log-probabilities as a numpy vector;
* ``attention_trace(instance, tokens)`` - per-step attention weights (hierarchical models only).

Answer encoding: BIO features on paragraph words (and, for the BiLSTM
hierarchy, has-answer flags on sentences) plus the answer tokens themselves run
through the word-level encoder; their mean vector is fed into the decoder's
initial state (BiLSTM) or added to the decoder's BOS input (Transformer).  This
keeps the models conditioned on the answer even when it is not a span of the
paragraph.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import tensor as T
from .attention import hierarchical_context
from .config import ModelConfig
from .data import BOS_ID, EOS_ID, PAD_ID, TAG_B, TAG_I, TAG_O, QGInstance, _span_from_tags
from .params import ParamStore
from .recurrent import (
    AdditiveScorer,
    LstmParams,
    LstmState,
    encode_sentences,
    encode_words,
    lstm_cell_step,
    sentence_repr_mean,
)
from .tensor import Tensor, no_grad
from .transformer import (
    DecoderBlockParams,
    EncoderBlockParams,
    Memory,
    decode_hidden,
    encode_paragraph_transformer,
    encode_sentence_transformer,
    sentence_repr_boseos,
)

logger = logging.getLogger(__name__)


def truncate_instance(inst: QGInstance, cfg: ModelConfig) -> QGInstance:
    """Clip an instance to the configured length limits, logging a warning when it changes."""
    too_many = len(inst.sentences) > cfg.max_sentences
    too_long = any(len(s) > cfg.max_sentence_len for s in inst.sentences)
    q_long = len(inst.question) > cfg.max_question_len
    if not (too_many or too_long or q_long):
        return inst
    logger.warning("instance %s exceeds length limits; truncating", inst.id or "?")
    out = copy.copy(inst)
    sents = [list(s) for s in inst.sentences[: cfg.max_sentences]]
    tags = [list(t) for t in inst.bio_tags[: cfg.max_sentences]]
    for i, s in enumerate(sents):
        if len(s) > cfg.max_sentence_len:
            sents[i] = s[: cfg.max_sentence_len - 1] + [EOS_ID]
            tags[i] = tags[i][: cfg.max_sentence_len - 1] + [TAG_O]
    if not any(TAG_B in t for t in tags):
        tags = [[TAG_O] * len(t) for t in tags]
    out.sentences = sents
    out.bio_tags = tags
    out.sentence_has_answer = [any(x != TAG_O for x in t) for t in tags]
    out.answer_span = _span_from_tags(tags)
    out.question = list(inst.question[: cfg.max_question_len])
    return out


def _answer_tags(n: int) -> List[int]:
    return [TAG_B] + [TAG_I] * (n - 1) if n else []


class QGModel:
    """Base class: parameter store, loss, and the decoding protocol."""

    def __init__(self, config: ModelConfig):
        self.config = config.validate()
        self.params = ParamStore(config.seed)
        self._build()

    # -- construction -------------------------------------------------------

    def _build(self) -> None:
        raise NotImplementedError

    def _embedding(self) -> None:
        c = self.config
        table = self.params.rng.uniform(-0.1, 0.1, size=(c.vocab_size, c.word_dim))
        table[PAD_ID] = 0.0
        self.params.array("embed", table)

    def load_embedding_matrix(self, matrix: np.ndarray) -> None:
        emb = self.params["embed"]
        if matrix.shape != emb.shape:
            raise ValueError(f"embedding matrix {matrix.shape} does not match {emb.shape}")
        emb.data = np.array(matrix, dtype=np.float64)

    @property
    def vocab_size(self) -> int:
        return self.config.vocab_size

    def parameter_count(self) -> int:
        return self.params.count()

    # -- training -------------------------------------------------------------

    def instance_nll(self, inst: QGInstance) -> Tuple[Tensor, int]:
        """Summed NLL of ``question + [EOS]`` given ``[BOS] + question`` and the token count."""
        raise NotImplementedError

    def forward_loss(self, batch: Sequence[QGInstance]) -> Tensor:
        if len(batch) == 0:
            raise ValueError("forward_loss: empty batch")
        total, count = None, 0
        for inst in batch:
            nll, n = self.instance_nll(truncate_instance(inst, self.config))
            total = nll if total is None else total + nll
            count += n
        return T.mul(total, 1.0 / count)

    # -- decoding -------------------------------------------------------------

    def start(self, inst: QGInstance):
        raise NotImplementedError

    def step(self, state, prev_token: int):
        raise NotImplementedError

    def attention_trace(self, inst: QGInstance, tokens: Sequence[int]) -> List[dict]:
        raise NotImplementedError(f"{self.config.architecture} has no hierarchical attention to inspect")


# ---------------------------------------------------------------------------
# BiLSTM models


@dataclass
class _LstmMemory:
    R: Tensor  # all word reps, (M, 2H)
    lengths: List[int]
    word_scorer: AdditiveScorer
    sent_scorer: Optional[AdditiveScorer]
    init: LstmState


class LstmQGModel(QGModel):
    """Seq2SeqAttAE (flat) and HierSeq2SeqAE (hierarchical, selective attention)."""

    def _build(self) -> None:
        c = self.config
        p = self.params
        H, Hs, D = c.enc_hidden, c.sent_hidden, c.dec_hidden
        self._embedding()
        p.uniform("bio", (3, c.bio_dim), 0.1)
        self.word_fwd = LstmParams.create(p, "word_enc.fwd", c.word_dim + c.bio_dim, H)
        self.word_bwd = LstmParams.create(p, "word_enc.bwd", c.word_dim + c.bio_dim, H)
        p.glorot("att_w.W", c.attn_dim, 2 * H + D)
        p.uniform("att_w.v", (c.attn_dim,), np.sqrt(6.0 / (c.attn_dim + 1)))
        if c.is_hierarchical:
            p.uniform("flag", (2, c.flag_dim), 0.1)
            self.sent_fwd = LstmParams.create(p, "sent_enc.fwd", 2 * H + c.flag_dim, Hs)
            self.sent_bwd = LstmParams.create(p, "sent_enc.bwd", 2 * H + c.flag_dim, Hs)
            p.glorot("att_s.W", c.attn_dim, 2 * Hs + D)
            p.uniform("att_s.v", (c.attn_dim,), np.sqrt(6.0 / (c.attn_dim + 1)))
            final_dim = 2 * Hs
        else:
            final_dim = 2 * H
        p.glorot("init_h.w", final_dim + 2 * H, D)
        p.zeros("init_h.b", (D,))
        p.glorot("init_c.w", final_dim + 2 * H, D)
        p.zeros("init_c.b", (D,))
        self.dec = LstmParams.create(p, "dec", c.word_dim + 2 * H, D)
        p.glorot("out.w", D, c.vocab_size)
        p.zeros("out.b", (c.vocab_size,))

    def _encode(self, inst: QGInstance) -> _LstmMemory:
        c, p = self.config, self.params
        if c.is_hierarchical:
            reps, s_tilde = [], []
            for ids, tags in zip(inst.sentences, inst.bio_tags):
                r, _ = encode_words(ids, tags, p["embed"], p["bio"], self.word_fwd, self.word_bwd)
                reps.append(r)
                s_tilde.append(sentence_repr_mean(r))
            g, (gf, gb) = encode_sentences(T.stack(s_tilde), inst.sentence_has_answer, p["flag"], self.sent_fwd, self.sent_bwd)
            R = T.concat(reps, 0)
            lengths = [r.shape[0] for r in reps]
            final = T.concat([gf.h, gb.h], 0)
            sent_scorer = AdditiveScorer(g, p["att_s.W"], p["att_s.v"])
        else:
            R, (sf, sb) = encode_words(inst.flat_tokens(), inst.flat_tags(), p["embed"], p["bio"], self.word_fwd, self.word_bwd)
            lengths = [R.shape[0]]
            final = T.concat([sf.h, sb.h], 0)
            sent_scorer = None
        init_in = T.concat([final, self._answer_vector(inst)], 0)
        init = LstmState(init_in @ p["init_h.w"] + p["init_h.b"], init_in @ p["init_c.w"] + p["init_c.b"])
        word_scorer = AdditiveScorer(R, p["att_w.W"], p["att_w.v"])
        return _LstmMemory(R, lengths, word_scorer, sent_scorer, init)

    def _answer_vector(self, inst: QGInstance) -> Tensor:
        if not inst.answer:
            return Tensor(np.zeros(2 * self.config.enc_hidden))
        p = self.params
        r, _ = encode_words(inst.answer, _answer_tags(len(inst.answer)), p["embed"], p["bio"], self.word_fwd, self.word_bwd)
        return sentence_repr_mean(r)

    def _context(self, mem: _LstmMemory, d: Tensor):
        u_w = mem.word_scorer(d)
        if mem.sent_scorer is None:
            a_w = T.softmax(u_w)
            return a_w @ mem.R, a_w, None
        return hierarchical_context(mem.R, u_w, mem.sent_scorer(d), mem.lengths, self.config.word_attention_norm)

    def _advance(self, mem: _LstmMemory, state: LstmState, emb: Tensor):
        ctx, a_w, a_s = self._context(mem, state.h)
        x = T.concat([emb, ctx], 0)
        return lstm_cell_step(x, state, self.dec), a_w, a_s

    def instance_nll(self, inst: QGInstance):
        mem = self._encode(inst)
        inputs = [BOS_ID] + list(inst.question)
        targets = list(inst.question) + [EOS_ID]
        emb = T.take_rows(self.params["embed"], inputs)
        state = mem.init
        hs = []
        for t in range(len(inputs)):
            state, _, _ = self._advance(mem, state, emb[t])
            hs.append(state.h)
        logits = T.stack(hs) @ self.params["out.w"] + self.params["out.b"]
        return T.nll(logits, targets), len(targets)

    def start(self, inst: QGInstance):
        with no_grad():
            mem = self._encode(truncate_instance(inst, self.config))
        return (mem, mem.init)

    def step(self, state, prev_token: int):
        mem, lstm_state = state
        with no_grad():
            new, _, _ = self._advance(mem, lstm_state, self.params["embed"][int(prev_token)])
            logits = new.h @ self.params["out.w"] + self.params["out.b"]
            logp = T.log_softmax(logits).data
        return logp, (mem, new)

    def attention_trace(self, inst: QGInstance, tokens: Sequence[int]) -> List[dict]:
        if not self.config.is_hierarchical:
            return super().attention_trace(inst, tokens)
        mem, state = self.start(inst)
        steps = []
        with no_grad():
            for tok in [BOS_ID] + list(tokens):
                state, a_w, a_s = self._advance(mem, state, self.params["embed"][int(tok)])
                steps.append({"sentence_weights": a_s.data.copy(), "word_weights": a_w.data.copy(), "lengths": list(mem.lengths)})
        return steps


# ---------------------------------------------------------------------------
# Transformer models


class TransformerQGModel(QGModel):
    """TransSeq2SeqAE (flat encoder, multi-head source attention) and
    HierTransSeq2SeqAE (sentence + paragraph encoders, MHATT source attention)."""

    def _build(self) -> None:
        c = self.config
        p = self.params
        d = c.d_model
        self._embedding()
        if c.answer_feature_mode == "concat":
            p.uniform("bio", (3, c.bio_dim), 0.1)
            p.glorot("in_proj.w", c.word_dim + c.bio_dim, d)
            p.zeros("in_proj.b", (d,))
        else:
            p.uniform("bio", (3, d), 0.1)
        p.glorot("tgt_proj.w", c.word_dim, d)
        p.zeros("tgt_proj.b", (d,))
        self.word_blocks = [EncoderBlockParams.create(p, f"word_enc.{i}", d, c.d_ff) for i in range(c.word_layers)]
        if c.is_hierarchical:
            p.glorot("para_proj.w", 2 * d, d)
            p.zeros("para_proj.b", (d,))
            self.sent_blocks = [EncoderBlockParams.create(p, f"sent_enc.{i}", d, c.d_ff) for i in range(c.sent_layers)]
        p.glorot("ans_proj.w", d, d)
        p.zeros("ans_proj.b", (d,))
        self.dec_blocks = [DecoderBlockParams.create(p, f"dec.{i}", d, c.d_ff, c.is_hierarchical) for i in range(c.dec_layers)]
        p.glorot("out.w", d, c.vocab_size)
        p.zeros("out.b", (c.vocab_size,))

    def _token_inputs(self, ids: Sequence[int], tags: Sequence[int]) -> Tensor:
        p = self.params
        e = T.take_rows(p["embed"], ids)
        f = T.take_rows(p["bio"], tags)
        if self.config.answer_feature_mode == "concat":
            return T.concat([e, f], axis=1) @ p["in_proj.w"] + p["in_proj.b"]
        return e + f

    def _word_encoder(self, ids, tags) -> Tensor:
        return encode_sentence_transformer(self._token_inputs(ids, tags), self.word_blocks, self.config.heads)

    def _encode(self, inst: QGInstance) -> Memory:
        c, p = self.config, self.params
        if c.is_hierarchical:
            reps = [self._word_encoder(ids, tags) for ids, tags in zip(inst.sentences, inst.bio_tags)]
            s_tilde = T.stack([sentence_repr_boseos(r) for r in reps])
            s = encode_paragraph_transformer(s_tilde, p["para_proj.w"], p["para_proj.b"], self.sent_blocks, c.heads)
            mem = Memory(T.concat(reps, 0), s, [r.shape[0] for r in reps])
        else:
            mem = Memory(self._word_encoder(inst.flat_tokens(), inst.flat_tags()))
        if inst.answer:
            r = self._word_encoder(inst.answer, _answer_tags(len(inst.answer)))
            mem.answer = T.mean(r, axis=0) @ p["ans_proj.w"] + p["ans_proj.b"]
        return mem

    def _decoder_inputs(self, prefix: Sequence[int], mem: Memory) -> Tensor:
        p = self.params
        x = T.take_rows(p["embed"], prefix) @ p["tgt_proj.w"] + p["tgt_proj.b"]
        if mem.answer is None:
            return x
        first = x[0:1] + mem.answer
        return first if len(prefix) == 1 else T.concat([first, x[1:]], 0)

    def _hidden(self, prefix: Sequence[int], mem: Memory, trace=None) -> Tensor:
        c = self.config
        return decode_hidden(self._decoder_inputs(prefix, mem), mem, self.dec_blocks, c.heads, c.hatt_scale, trace)

    def decoder_logits(self, inst: QGInstance, prefix: Sequence[int]) -> Tensor:
        """Teacher-forced logits for every position of ``prefix`` (row t predicts token t+1)."""
        mem = self._encode(inst)
        return self._hidden(prefix, mem) @ self.params["out.w"] + self.params["out.b"]

    def instance_nll(self, inst: QGInstance):
        targets = list(inst.question) + [EOS_ID]
        logits = self.decoder_logits(inst, [BOS_ID] + list(inst.question))
        return T.nll(logits, targets), len(targets)

    def start(self, inst: QGInstance):
        with no_grad():
            mem = self._encode(truncate_instance(inst, self.config))
        return (mem, ())

    def step(self, state, prev_token: int):
        mem, prefix = state
        prefix = prefix + (int(prev_token),)
        with no_grad():
            h = self._hidden(prefix, mem)
            logits = h[h.shape[0] - 1] @ self.params["out.w"] + self.params["out.b"]
            logp = T.log_softmax(logits).data
        return logp, (mem, prefix)

    def attention_trace(self, inst: QGInstance, tokens: Sequence[int]) -> List[dict]:
        if not self.config.is_hierarchical:
            return super().attention_trace(inst, tokens)
        mem, _ = self.start(inst)
        trace: list = []
        with no_grad():
            self._hidden([BOS_ID] + list(tokens), mem, trace)
        heads = trace[-1]  # last decoder block: list of (a, b) per head
        a = np.mean([h[0].data for h in heads], axis=0)
        b = np.mean([h[1].data for h in heads], axis=0)
        return [{"sentence_weights": a[t], "word_weights": b[t], "lengths": list(mem.lengths)} for t in range(a.shape[0])]


def build(config: ModelConfig) -> QGModel:
    """Instantiate the architecture named in ``config`` with seeded initial parameters."""
    config.validate()
    if config.is_transformer:
        return TransformerQGModel(config)
    return LstmQGModel(config)
