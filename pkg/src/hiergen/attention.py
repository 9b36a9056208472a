"""Attention primitives: normalisers, additive scoring, scaled dot-product,
multi-head attention, and the two-level HATT/MHATT modules.

HATT attends first over sentences (weights ``a``) and then over the words of
each sentence (weights ``b_i``); the context is ``sum_i a_i (b_i @ V_i)``.  The
implementation concatenates all words into one matrix and expands ``a`` to the
word axis with a sentence-membership matrix, so each query row costs a handful
of dense ops regardless of the number of sentences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from . import tensor as T
from .exceptions import ConfigError, DimensionError
from .tensor import Tensor, as_tensor


@dataclass
class AttentionWeights:
    weights: np.ndarray
    level: str  # "word" or "sentence"


def softmax(v, mask: Optional[np.ndarray] = None) -> Tensor:
    v = as_tensor(v)
    if v.size == 0:
        raise ValueError("softmax: empty vector")
    return T.softmax(v, mask)


def sparsemax(v, mask: Optional[np.ndarray] = None) -> Tensor:
    v = as_tensor(v)
    if v.size == 0:
        raise ValueError("sparsemax: empty vector")
    return T.sparsemax(v, mask)


def additive_score(item_state, decoder_state, W, v) -> Tensor:
    """Score ``v^T tanh(W [item; decoder])``.

    ``item_state`` may be a vector or a matrix of items (one per row), in which
    case a vector of scores is returned.
    """
    item_state, decoder_state, W, v = map(as_tensor, (item_state, decoder_state, W, v))
    a = item_state.shape[-1]
    if W.ndim != 2 or W.shape[1] != a + decoder_state.shape[-1] or v.shape != (W.shape[0],):
        raise DimensionError(
            f"additive_score: W {W.shape}, v {v.shape}, item {item_state.shape}, decoder {decoder_state.shape}"
        )
    items = item_state @ T.transpose(W[:, :a])
    dec = W[:, a:] @ decoder_state
    return T.tanh(items + dec) @ v


def _scale_value(d: int, scale: Union[None, str, float]) -> float:
    if scale is None or scale == "sqrt_d":
        return float(np.sqrt(d))
    if scale == "d":
        return float(d)
    value = float(scale)
    if value <= 0:
        raise ValueError(f"attention scale must be positive, got {scale}")
    return value


def scaled_dot_attention(Q, K, V, scale=None, mask: Optional[np.ndarray] = None) -> Tuple[Tensor, Tensor]:
    """softmax(Q K^T / scale) V; ``scale`` defaults to sqrt(d_k).

    Returns ``(context, weights)``.  ``mask`` (same shape as the score matrix)
    marks admissible positions.
    """
    Q, K, V = as_tensor(Q), as_tensor(K), as_tensor(V)
    if K.ndim != 2 or V.ndim != 2 or K.shape[0] == 0:
        raise ValueError(f"scaled_dot_attention: need n >= 1 keys, got K {K.shape}")
    if Q.shape[-1] != K.shape[1] or K.shape[0] != V.shape[0]:
        raise DimensionError(f"scaled_dot_attention: Q {Q.shape}, K {K.shape}, V {V.shape}")
    s = _scale_value(K.shape[1], scale)
    scores = T.mul(Q @ T.transpose(K), 1.0 / s)
    weights = T.softmax(scores, mask)
    return weights @ V, weights


def _check_heads(d_model: int, heads: int) -> int:
    if heads < 1 or d_model % heads:
        raise ConfigError(f"d_model={d_model} is not divisible by heads={heads}")
    return d_model // heads


def multi_head(Q, K, V, heads: int, w_q, w_k, w_v, w_o, scale=None, mask: Optional[np.ndarray] = None) -> Tensor:
    """Concat(head_0 .. head_{h-1}) W^O with head_i = Attention(Q W_i^Q, K W_i^K, V W_i^V).

    ``w_q``, ``w_k`` and ``w_v`` hold the per-head projections side by side:
    columns ``i*d_k:(i+1)*d_k`` are head ``i``'s matrix.
    """
    Q, K, V, w_q, w_k, w_v, w_o = map(as_tensor, (Q, K, V, w_q, w_k, w_v, w_o))
    dk = _check_heads(w_q.shape[1], heads)
    dv = w_v.shape[1] // heads
    q, k, v = Q @ w_q, K @ w_k, V @ w_v
    outs = []
    for i in range(heads):
        ctx, _ = scaled_dot_attention(
            q[..., i * dk : (i + 1) * dk], k[:, i * dk : (i + 1) * dk], v[:, i * dv : (i + 1) * dv], scale, mask
        )
        outs.append(ctx)
    return T.concat(outs, axis=-1) @ w_o


@dataclass
class HattInputs:
    """Queries and keys/values for hierarchical attention.

    ``k_w`` and ``v_w`` hold one matrix per sentence (rows are words).  Queries
    may be single vectors or matrices with one query per row.
    """

    q_s: Tensor
    k_s: Tensor
    q_w: Tensor
    k_w: List[Tensor]
    v_w: List[Tensor]

    def __post_init__(self):
        self.q_s, self.k_s, self.q_w = as_tensor(self.q_s), as_tensor(self.k_s), as_tensor(self.q_w)
        self.k_w = [as_tensor(k) for k in self.k_w]
        self.v_w = [as_tensor(v) for v in self.v_w]
        if len(self.k_w) == 0 or self.k_s.shape[0] == 0:
            raise ValueError("hatt: paragraph has no sentences")
        if len(self.k_w) != self.k_s.shape[0] or len(self.v_w) != len(self.k_w):
            raise DimensionError(
                f"hatt: {self.k_s.shape[0]} sentence keys, {len(self.k_w)} word-key and {len(self.v_w)} value blocks"
            )
        for kw, vw in zip(self.k_w, self.v_w):
            if kw.shape[0] != vw.shape[0] or kw.shape[0] == 0:
                raise DimensionError(f"hatt: word keys {kw.shape} vs values {vw.shape}")
        if self.q_s.shape[-1] != self.k_s.shape[1] or any(self.q_w.shape[-1] != k.shape[1] for k in self.k_w):
            raise DimensionError("hatt: query and key dimensions differ")

    @property
    def lengths(self) -> List[int]:
        return [k.shape[0] for k in self.k_w]


def membership(lengths: Sequence[int]) -> np.ndarray:
    """K x M 0/1 matrix with a one where word column j belongs to sentence row i."""
    lengths = list(lengths)
    out = np.zeros((len(lengths), int(np.sum(lengths))))
    start = 0
    for i, n in enumerate(lengths):
        out[i, start : start + n] = 1.0
        start += n
    return out


def hatt_flat(q_s, k_s, q_w, k_w_all, v_w_all, lengths: Sequence[int], scale=None):
    """HATT over words stored as one concatenated matrix with per-sentence ``lengths``.

    Returns ``(context, a, b)`` where ``b`` holds every sentence's word weights
    side by side along its last axis.
    """
    d = k_s.shape[1]
    s = _scale_value(d, scale)
    a = T.softmax(T.mul(q_s @ T.transpose(k_s), 1.0 / s))
    b = T.segment_softmax(T.mul(q_w @ T.transpose(k_w_all), 1.0 / s), lengths)
    word_weights = T.mul(a @ membership(lengths), b)
    return word_weights @ v_w_all, a, b


def hatt(inputs: HattInputs, scale=None, return_weights: bool = False):
    """Hierarchical attention; ``scale`` is ``"sqrt_d"`` (default), ``"d"`` or a number."""
    ctx, a, b = hatt_flat(
        inputs.q_s, inputs.k_s, inputs.q_w, T.concat(inputs.k_w, 0), T.concat(inputs.v_w, 0), inputs.lengths, scale
    )
    return (ctx, a, b) if return_weights else ctx


def mhatt_flat(q_s, k_s, q_w, k_w_all, v_w_all, lengths, heads: int, proj: dict, scale=None, return_weights=False):
    """Multi-head HATT over concatenated word matrices.

    ``proj`` maps ``"q_s"``, ``"k_s"``, ``"q_w"``, ``"k_w"``, ``"v_w"`` to the
    side-by-side per-head projection matrices and ``"o"`` to W^O.
    """
    dk = _check_heads(proj["q_s"].shape[1], heads)
    dv = proj["v_w"].shape[1] // heads
    qs, ks = q_s @ proj["q_s"], k_s @ proj["k_s"]
    qw, kw, vw = q_w @ proj["q_w"], k_w_all @ proj["k_w"], v_w_all @ proj["v_w"]
    outs, weights = [], []
    for i in range(heads):
        hk, hv = slice(i * dk, (i + 1) * dk), slice(i * dv, (i + 1) * dv)
        ctx, a, b = hatt_flat(qs[..., hk], ks[:, hk], qw[..., hk], kw[:, hk], vw[:, hv], lengths, scale)
        outs.append(ctx)
        weights.append((a, b))
    out = T.concat(outs, axis=-1) @ proj["o"]
    return (out, weights) if return_weights else out


def mhatt(inputs: HattInputs, heads: int, proj: dict, scale=None, return_weights: bool = False):
    return mhatt_flat(
        inputs.q_s,
        inputs.k_s,
        inputs.q_w,
        T.concat(inputs.k_w, 0),
        T.concat(inputs.v_w, 0),
        inputs.lengths,
        heads,
        proj,
        scale,
        return_weights,
    )


def hierarchical_context(word_reps, word_scores, sentence_scores, lengths=None, word_norm: str = "paragraph"):
    """Selective two-level context ``c = sum_i a^s_i sum_j abar^w_ij r_ij``.

    ``word_reps`` is either a list of per-sentence matrices or one concatenated
    matrix (then ``lengths`` is required).  Word weights are a softmax over all
    paragraph words (``word_norm="paragraph"``, the rows of each sentence are not
    renormalised) or over each sentence separately (``word_norm="sentence"``).
    Sentence weights are a sparsemax, so whole sentences can drop out.

    Returns ``(context, word_weights, sentence_weights)``.
    """
    if isinstance(word_reps, (list, tuple)):
        if len(word_reps) == 0:
            raise ValueError("hierarchical_context: empty paragraph")
        lengths = [r.shape[0] for r in word_reps]
        word_reps = T.concat(list(word_reps), 0)
    if lengths is None or len(lengths) == 0 or min(lengths) < 1:
        raise ValueError("hierarchical_context: empty paragraph or sentence")
    word_scores, sentence_scores = as_tensor(word_scores), as_tensor(sentence_scores)
    if word_scores.shape != (word_reps.shape[0],) or sentence_scores.shape != (len(lengths),):
        raise DimensionError(
            f"hierarchical_context: {word_scores.shape} word scores / {sentence_scores.shape} sentence scores "
            f"for {word_reps.shape[0]} words in {len(lengths)} sentences"
        )
    if word_norm == "paragraph":
        a_w = T.softmax(word_scores)
    elif word_norm == "sentence":
        a_w = T.segment_softmax(word_scores, lengths)
    else:
        raise ConfigError(f"unknown word attention normalisation {word_norm!r}")
    a_s = T.sparsemax(sentence_scores)
    weights = T.mul(a_s @ membership(lengths), a_w)
    return weights @ word_reps, a_w, a_s
