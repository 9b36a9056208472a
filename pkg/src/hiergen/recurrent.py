"""LSTM building blocks and the hierarchical BiLSTM paragraph encoder."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import tensor as T
from .attention import hierarchical_context as _hier_context
from .exceptions import DimensionError
from .params import ParamStore
from .tensor import Tensor, as_tensor, record

GATES = 4  # input, forget, candidate, output


@dataclass
class LstmParams:
    w_ih: Tensor  # (in, 4H)
    w_hh: Tensor  # (H, 4H)
    b: Tensor  # (4H,)

    @property
    def hidden(self) -> int:
        return self.w_hh.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_ih.shape[0]

    @classmethod
    def create(cls, store: ParamStore, prefix: str, input_dim: int, hidden: int, forget_bias: float = 1.0):
        w_ih = store.glorot(f"{prefix}.w_ih", input_dim, GATES * hidden)
        w_hh = store.glorot(f"{prefix}.w_hh", hidden, GATES * hidden)
        bias = np.zeros(GATES * hidden)
        bias[hidden : 2 * hidden] = forget_bias
        b = store.array(f"{prefix}.b", bias)
        return cls(w_ih, w_hh, b)

    @classmethod
    def from_store(cls, store: ParamStore, prefix: str):
        return cls(store[f"{prefix}.w_ih"], store[f"{prefix}.w_hh"], store[f"{prefix}.b"])


@dataclass
class LstmState:
    h: Tensor
    c: Tensor


def lstm_gates(z, c_prev) -> Tensor:
    """Fused gate nonlinearity: from pre-activations ``z = [i f g o]`` and the
    previous cell, return ``[h; c]`` with ``c = sig(f) c_prev + sig(i) tanh(g)`` and
    ``h = sig(o) tanh(c)``."""
    z, c_prev = as_tensor(z), as_tensor(c_prev)
    H = c_prev.shape[-1]
    if z.shape[-1] != GATES * H:
        raise DimensionError(f"lstm_gates: pre-activation {z.shape} vs cell {c_prev.shape}")
    zd, cp = z.data, c_prev.data
    i = T._sigmoid(zd[..., :H])
    f = T._sigmoid(zd[..., H : 2 * H])
    g = np.tanh(zd[..., 2 * H : 3 * H])
    o = T._sigmoid(zd[..., 3 * H :])
    c = f * cp + i * g
    tc = np.tanh(c)
    h = o * tc

    def bw(grad):
        gh, gc = grad[..., :H], grad[..., H:]
        dc = gc + gh * o * (1.0 - tc * tc)
        dz = np.concatenate(
            [dc * g * i * (1.0 - i), dc * cp * f * (1.0 - f), dc * i * (1.0 - g * g), gh * tc * o * (1.0 - o)],
            axis=-1,
        )
        return dz, dc * f

    return record(np.concatenate([h, c], axis=-1), (z, c_prev), bw, "lstm_gates")


def lstm_cell_step(x, prev: Optional[LstmState], params: LstmParams) -> LstmState:
    """One LSTM step; ``prev=None`` means zero initial state."""
    x = as_tensor(x)
    if x.shape[-1] != params.input_dim:
        raise DimensionError(f"lstm_cell_step: input {x.shape} vs weights {params.w_ih.shape}")
    z = x @ params.w_ih + params.b
    return _step_from_projection(z, prev, params)


def _step_from_projection(z: Tensor, prev: Optional[LstmState], params: LstmParams) -> LstmState:
    H = params.hidden
    if prev is None:
        c_prev = Tensor(np.zeros(H))
    else:
        z = z + prev.h @ params.w_hh
        c_prev = prev.c
    hc = lstm_gates(z, c_prev)
    return LstmState(hc[:H], hc[H:])


def run_lstm(X, params: LstmParams, reverse: bool = False, init: Optional[LstmState] = None):
    """Run an LSTM over the rows of ``X``; returns ``(outputs (T, H), final state)``."""
    X = as_tensor(X)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError(f"run_lstm: need a non-empty (T, d) sequence, got {X.shape}")
    if X.shape[1] != params.input_dim:
        raise DimensionError(f"run_lstm: input width {X.shape[1]} vs weights {params.w_ih.shape}")
    xp = X @ params.w_ih + params.b
    state = init
    outs: List[Tensor] = []
    steps = range(X.shape[0] - 1, -1, -1) if reverse else range(X.shape[0])
    for t in steps:
        state = _step_from_projection(xp[t], state, params)
        outs.append(state.h)
    if reverse:
        outs.reverse()
    return T.stack(outs), state


def bilstm_encode(X, fwd: LstmParams, bwd: LstmParams):
    """Row t of the result is ``[fwd_h_t; bwd_h_t]``.  Also returns both final states."""
    X = as_tensor(X)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("bilstm_encode: empty sequence")
    hf, sf = run_lstm(X, fwd)
    hb, sb = run_lstm(X, bwd, reverse=True)
    return T.concat([hf, hb], axis=1), (sf, sb)


def encode_words(token_ids: Sequence[int], tags: Sequence[int], embeddings, bio_table, fwd: LstmParams, bwd: LstmParams):
    """Word-level BiLSTM over ``[e_t; f^w_t]``; ``tags`` index the 3-row BIO table."""
    if len(token_ids) != len(tags):
        raise ValueError(f"encode_words: {len(token_ids)} tokens but {len(tags)} tags")
    x = T.concat([T.take_rows(embeddings, token_ids), T.take_rows(bio_table, tags)], axis=1)
    return bilstm_encode(x, fwd, bwd)


def sentence_repr_mean(r, mask: Optional[np.ndarray] = None) -> Tensor:
    """Mean of the word rows of one sentence; ``mask`` excludes PAD rows."""
    r = as_tensor(r)
    if mask is None:
        if r.shape[0] == 0:
            raise ValueError("sentence_repr_mean: sentence has no words")
        return T.mean(r, axis=0)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("sentence_repr_mean: sentence has only PAD rows")
    return T.mean(r[np.flatnonzero(mask)], axis=0)


def encode_sentences(s_tilde, has_answer: Sequence[bool], flag_table, fwd: LstmParams, bwd: LstmParams):
    """Sentence-level BiLSTM over ``[s~_t; f^s_t]``."""
    s_tilde = as_tensor(s_tilde)
    if s_tilde.ndim != 2 or s_tilde.shape[0] == 0:
        raise ValueError("encode_sentences: no sentences")
    if len(has_answer) != s_tilde.shape[0]:
        raise ValueError(f"encode_sentences: {len(has_answer)} flags for {s_tilde.shape[0]} sentences")
    flags = [1 if f else 0 for f in has_answer]
    x = T.concat([s_tilde, T.take_rows(flag_table, flags)], axis=1)
    return bilstm_encode(x, fwd, bwd)


@dataclass
class EncodedParagraph:
    word_reps: List[Tensor]  # r_i, one (M_i, 2H) matrix per sentence
    sentence_reps: Tensor  # s~, (K, 2H)
    contextual_sentence_reps: Tensor  # g, (K, 2H')
    lengths: List[int]

    @property
    def num_sentences(self) -> int:
        return len(self.lengths)


class AdditiveScorer:
    """``v^T tanh(W [item; d])`` with the item half of W applied once up front."""

    def __init__(self, items: Tensor, W: Tensor, v: Tensor):
        a = items.shape[1]
        self.item_proj = items @ T.transpose(W[:, :a])
        self.w_dec = W[:, a:]
        self.v = v

    def __call__(self, d: Tensor) -> Tensor:
        return T.tanh(self.item_proj + self.w_dec @ d) @ self.v


def hierarchical_context(
    word_reps: Sequence[Tensor],
    g,
    d_t,
    W_w,
    v_w,
    W_s,
    v_s,
    word_norm: str = "paragraph",
):
    """Context vector of the selective hierarchical attention at one decoder step.

    Word scores use ``W_w [r_ij; d_t]`` over every paragraph word, sentence scores
    ``W_s [g_i; d_t]``; weights come from softmax (words) and sparsemax
    (sentences).  Returns ``(c_t, word_weights, sentence_weights)``.
    """
    if len(word_reps) == 0:
        raise ValueError("hierarchical_context: empty paragraph")
    lengths = [r.shape[0] for r in word_reps]
    R = T.concat(list(word_reps), 0)
    u_w = AdditiveScorer(R, as_tensor(W_w), as_tensor(v_w))(as_tensor(d_t))
    u_s = AdditiveScorer(as_tensor(g), as_tensor(W_s), as_tensor(v_s))(as_tensor(d_t))
    return _hier_context(R, u_w, u_s, lengths, word_norm)


def lstm_decoder_step(prev_emb, prev_state: LstmState, context, params: LstmParams, out_w, out_b) -> Tuple[Tensor, LstmState]:
    """One decoder step on ``[prev_emb; c_t]``; logits are ``h W_out + b_out``."""
    prev_emb, context = as_tensor(prev_emb), as_tensor(context)
    x = T.concat([prev_emb, context], axis=0)
    if x.shape[0] != params.input_dim:
        raise DimensionError(f"lstm_decoder_step: input width {x.shape[0]} vs weights {params.w_ih.shape}")
    state = lstm_cell_step(x, prev_state, params)
    return state.h @ as_tensor(out_w) + as_tensor(out_b), state
