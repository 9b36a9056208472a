"""Transformer encoder/decoder blocks and the hierarchical sentence/paragraph encoders.

All blocks are post-norm: ``x = LN(x + sublayer(x))``.  Multi-head projection
matrices store the heads side by side (see :func:`hiergen.attention.multi_head`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import tensor as T
from .attention import _check_heads, mhatt_flat, multi_head
from .exceptions import DimensionError
from .params import ParamStore
from .tensor import Tensor, as_tensor


@lru_cache(maxsize=64)
def _pe_table(length: int, d_model: int) -> np.ndarray:
    pos = np.arange(length, dtype=np.float64)[:, None]
    i2 = np.arange(0, d_model, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, i2 / d_model)
    pe = np.zeros((length, d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d_model // 2])
    pe.setflags(write=False)
    return pe


def positional_encoding(length: int, d_model: int) -> np.ndarray:
    """Sinusoidal table: sine on even dims, cosine on odd dims, wavelengths 2*pi*10000^(2i/d)."""
    if length < 1:
        raise ValueError(f"positional_encoding: length must be >= 1, got {length}")
    return _pe_table(int(length), int(d_model)).copy()


def ffn(x, w1, b1, w2, b2) -> Tensor:
    """Position-wise feed-forward network ``max(0, x W1 + b1) W2 + b2``."""
    x, w1 = as_tensor(x), as_tensor(w1)
    if x.shape[-1] != w1.shape[0]:
        raise DimensionError(f"ffn: input {x.shape} vs W1 {w1.shape}")
    return T.relu(x @ w1 + b1) @ w2 + b2


@dataclass
class AttnParams:
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor

    @classmethod
    def create(cls, store: ParamStore, prefix: str, d_model: int):
        return cls(*(store.glorot(f"{prefix}.{n}", d_model, d_model) for n in ("w_q", "w_k", "w_v", "w_o")))


@dataclass
class LayerNormParams:
    gain: Tensor
    bias: Tensor

    @classmethod
    def create(cls, store: ParamStore, prefix: str, d_model: int):
        return cls(store.full(f"{prefix}.gain", (d_model,), 1.0), store.zeros(f"{prefix}.bias", (d_model,)))

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias)


@dataclass
class FfnParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @classmethod
    def create(cls, store: ParamStore, prefix: str, d_model: int, d_ff: int):
        return cls(
            store.glorot(f"{prefix}.w1", d_model, d_ff),
            store.zeros(f"{prefix}.b1", (d_ff,)),
            store.glorot(f"{prefix}.w2", d_ff, d_model),
            store.zeros(f"{prefix}.b2", (d_model,)),
        )

    def __call__(self, x: Tensor) -> Tensor:
        return ffn(x, self.w1, self.b1, self.w2, self.b2)


@dataclass
class EncoderBlockParams:
    attn: AttnParams
    ln1: LayerNormParams
    ffn: FfnParams
    ln2: LayerNormParams

    @classmethod
    def create(cls, store: ParamStore, prefix: str, d_model: int, d_ff: int):
        if d_ff < d_model:
            raise DimensionError(f"FFN inner size {d_ff} smaller than d_model {d_model}")
        return cls(
            AttnParams.create(store, f"{prefix}.attn", d_model),
            LayerNormParams.create(store, f"{prefix}.ln1", d_model),
            FfnParams.create(store, f"{prefix}.ffn", d_model, d_ff),
            LayerNormParams.create(store, f"{prefix}.ln2", d_model),
        )


def self_attention(x: Tensor, p: AttnParams, heads: int, mask: Optional[np.ndarray] = None) -> Tensor:
    return multi_head(x, x, x, heads, p.w_q, p.w_k, p.w_v, p.w_o, mask=mask)


def encoder_block(x, p: EncoderBlockParams, heads: int) -> Tensor:
    """Self-attention then FFN, each wrapped in residual + layer norm."""
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError(f"encoder_block: need (n >= 1, d_model) input, got {x.shape}")
    if x.shape[1] != p.attn.w_q.shape[0]:
        raise DimensionError(f"encoder_block: input width {x.shape[1]} vs d_model {p.attn.w_q.shape[0]}")
    x = p.ln1(x + self_attention(x, p.attn, heads))
    return p.ln2(x + p.ffn(x))


def encoder_stack(x, blocks: Sequence[EncoderBlockParams], heads: int) -> Tensor:
    for b in blocks:
        x = encoder_block(x, b, heads)
    return x


def encode_sentence_transformer(inputs, blocks: Sequence[EncoderBlockParams], heads: int) -> Tensor:
    """Word-level encoder: add positional encodings to the (M, d_model) token inputs and run the block stack."""
    inputs = as_tensor(inputs)
    if inputs.ndim != 2 or inputs.shape[0] == 0:
        raise ValueError("encode_sentence_transformer: empty sentence")
    return encoder_stack(inputs + positional_encoding(*inputs.shape), blocks, heads)


def sentence_repr_boseos(r, has_boundaries: bool = True) -> Tensor:
    """``[r_BOS; r_EOS]``: first and last word rows of one sentence."""
    r = as_tensor(r)
    if not has_boundaries or r.ndim != 2 or r.shape[0] < 2:
        raise ValueError("sentence_repr_boseos: sentence must contain BOS and EOS rows")
    return T.concat([r[0], r[r.shape[0] - 1]], axis=0)


def encode_paragraph_transformer(s_tilde, w_proj, b_proj, blocks: Sequence[EncoderBlockParams], heads: int) -> Tensor:
    """Sentence-level encoder: project ``2 d_model -> d_model``, add sentence positions, run blocks."""
    s_tilde = as_tensor(s_tilde)
    if s_tilde.ndim != 2 or s_tilde.shape[0] == 0:
        raise ValueError("encode_paragraph_transformer: no sentences")
    x = s_tilde @ w_proj + b_proj
    return encoder_stack(x + positional_encoding(*x.shape), blocks, heads)


@dataclass
class HierSourceParams:
    """Source attention of the hierarchical decoder: query non-linearities plus MHATT projections."""

    qs_w: Tensor
    qs_b: Tensor
    qw_w: Tensor
    qw_b: Tensor
    proj: dict

    @classmethod
    def create(cls, store: ParamStore, prefix: str, d_model: int):
        qs_w = store.glorot(f"{prefix}.qs_w", d_model, d_model)
        qs_b = store.zeros(f"{prefix}.qs_b", (d_model,))
        qw_w = store.glorot(f"{prefix}.qw_w", d_model, d_model)
        qw_b = store.zeros(f"{prefix}.qw_b", (d_model,))
        proj = {n: store.glorot(f"{prefix}.{n}", d_model, d_model) for n in ("q_s", "k_s", "q_w", "k_w", "v_w", "o")}
        return cls(qs_w, qs_b, qw_w, qw_b, proj)


@dataclass
class DecoderBlockParams:
    self_attn: AttnParams
    ln1: LayerNormParams
    src: object  # AttnParams (flat) or HierSourceParams
    ln2: LayerNormParams
    ffn: FfnParams
    ln3: LayerNormParams

    @classmethod
    def create(cls, store: ParamStore, prefix: str, d_model: int, d_ff: int, hierarchical: bool):
        self_attn = AttnParams.create(store, f"{prefix}.self", d_model)
        ln1 = LayerNormParams.create(store, f"{prefix}.ln1", d_model)
        if hierarchical:
            src = HierSourceParams.create(store, f"{prefix}.src", d_model)
        else:
            src = AttnParams.create(store, f"{prefix}.src", d_model)
        ln2 = LayerNormParams.create(store, f"{prefix}.ln2", d_model)
        f = FfnParams.create(store, f"{prefix}.ffn", d_model, d_ff)
        ln3 = LayerNormParams.create(store, f"{prefix}.ln3", d_model)
        return cls(self_attn, ln1, src, ln2, f, ln3)


@dataclass
class Memory:
    """Encoder output the decoder attends to.

    Flat models fill ``words`` only.  Hierarchical models also fill
    ``sentences`` (paragraph-encoder output) and ``lengths``.
    """

    words: Tensor
    sentences: Optional[Tensor] = None
    lengths: Optional[List[int]] = None
    answer: Optional[Tensor] = None

    @property
    def hierarchical(self) -> bool:
        return self.sentences is not None


def causal_mask(n: int) -> np.ndarray:
    return np.tril(np.ones((n, n), dtype=bool))


def decoder_block(x: Tensor, memory: Memory, p: DecoderBlockParams, heads: int, hatt_scale="sqrt_d", trace=None) -> Tensor:
    n = x.shape[0]
    x = p.ln1(x + self_attention(x, p.self_attn, heads, causal_mask(n)))
    if memory.hierarchical:
        src: HierSourceParams = p.src
        q_s = T.tanh(x @ src.qs_w + src.qs_b)
        q_w = T.tanh(x @ src.qw_w + src.qw_b)
        ctx, weights = mhatt_flat(
            q_s, memory.sentences, q_w, memory.words, memory.words, memory.lengths, heads, src.proj, hatt_scale, True
        )
        if trace is not None:
            trace.append(weights)
    else:
        src: AttnParams = p.src
        ctx = multi_head(x, memory.words, memory.words, heads, src.w_q, src.w_k, src.w_v, src.w_o)
    x = p.ln2(x + ctx)
    return p.ln3(x + p.ffn(x))


@dataclass
class DecoderState:
    """Prefix generated so far (starting with BOS) and the last pre-softmax vector."""

    prefix: Tuple[int, ...]
    last_hidden: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.prefix) == 0:
            raise ValueError("DecoderState: prefix must start with BOS")


def decode_hidden(inputs: Tensor, memory: Memory, blocks: Sequence[DecoderBlockParams], heads: int, hatt_scale="sqrt_d", trace=None) -> Tensor:
    """Run the decoder stack on (T, d_model) target-side inputs; returns pre-softmax vectors."""
    x = inputs + positional_encoding(*inputs.shape)
    for b in blocks:
        x = decoder_block(x, memory, b, heads, hatt_scale, trace)
    return x


def transformer_decoder_step(state: DecoderState, embed_fn, memory: Memory, blocks, heads, out_w, out_b, hatt_scale="sqrt_d"):
    """Logits for the token following ``state.prefix``.

    ``embed_fn`` maps a prefix of token ids to the (T, d_model) decoder inputs.
    Returns ``(logits, new_state)`` where the new state caches the last hidden row.
    """
    _check_heads(out_w.shape[0], heads)
    h = decode_hidden(embed_fn(state.prefix), memory, blocks, heads, hatt_scale)
    last = h[h.shape[0] - 1]
    logits = last @ out_w + out_b
    return logits, DecoderState(state.prefix, last.data.copy())
