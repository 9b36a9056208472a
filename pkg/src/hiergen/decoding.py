"""Greedy and beam-search question generation.

Any object with ``start(instance)`` and ``step(state, prev_token) -> (log_probs,
state)`` can be decoded; states must not be mutated by ``step`` because beam
hypotheses share them.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Iterable, List, Sequence, Tuple

import numpy as np

from .data import BOS_ID, EOS_ID, PAD_ID, UNK_ID

logger = logging.getLogger(__name__)

_BLOCKED = (PAD_ID, BOS_ID)


@dataclass
class Hypothesis:
    tokens: Tuple[int, ...]  # begins with BOS
    logprob: float
    finished: bool = False
    state: Any = field(default=None, repr=False, compare=False)

    @property
    def length(self) -> int:
        return len(self.tokens) - 1

    def score(self, alpha: float) -> float:
        """Length-normalised log-probability ``logP / len**alpha``."""
        return self.logprob / (max(self.length, 1) ** alpha)

    def output(self) -> List[int]:
        toks = list(self.tokens[1:])
        if toks and toks[-1] == EOS_ID:
            toks.pop()
        return toks


def _next_logprobs(model, state, token: int):
    logp, state = model.step(state, token)
    logp = np.array(logp, dtype=np.float64)
    logp[list(_BLOCKED)] = -np.inf
    return logp, state


def greedy_decode(model, instance, max_len: int = 30) -> List[int]:
    """Pick the most likely token at every step until EOS or ``max_len`` tokens.

    Ties go to the lower token id.  The returned ids exclude BOS and EOS.
    """
    state = model.start(instance)
    token = BOS_ID
    out: List[int] = []
    for _ in range(max_len):
        logp, state = _next_logprobs(model, state, token)
        token = int(np.argmax(logp))
        if token == EOS_ID:
            break
        out.append(token)
    return out


def beam_search(model, instance, beam: int = 4, max_len: int = 30, alpha: float = 0.7) -> List[Hypothesis]:
    """All finished hypotheses, best first.

    Each step keeps the ``beam`` highest-probability extensions of the live
    hypotheses (ties: lower token id, then the better-ranked parent).
    Extensions ending in EOS, or reaching ``max_len`` tokens, are finished and
    leave the beam, so ``beam=1`` reproduces greedy decoding.  Finished
    hypotheses are ranked by :meth:`Hypothesis.score`, ties going to the
    lexicographically smaller token sequence, then the earlier finish.
    """
    if beam < 1:
        raise ValueError(f"beam size must be >= 1, got {beam}")
    alive = [Hypothesis((BOS_ID,), 0.0, False, model.start(instance))]
    finished: List[Hypothesis] = []
    for t in range(max_len):
        cands = []
        for rank, hyp in enumerate(alive):
            logp, st = _next_logprobs(model, hyp.state, hyp.tokens[-1])
            ids = np.arange(len(logp))
            ok = np.isfinite(logp)
            ids, lp = ids[ok], logp[ok]
            order = np.lexsort((ids, -lp))[:beam]
            for j in order:
                cands.append((hyp.logprob + float(lp[j]), int(ids[j]), rank, st))
        cands.sort(key=lambda c: (-c[0], c[1], c[2]))
        next_alive = []
        for lp, tok, rank, st in cands[:beam]:
            done = tok == EOS_ID or t == max_len - 1
            h = Hypothesis(alive[rank].tokens + (tok,), lp, done, st)
            (finished if done else next_alive).append(h)
        alive = next_alive
        if not alive:
            break
    finished.sort(key=lambda h: (-h.score(alpha), h.tokens, h.length))
    return finished


def beam_decode(model, instance, beam: int = 4, max_len: int = 30, alpha: float = 0.7) -> List[int]:
    return beam_search(model, instance, beam, max_len, alpha)[0].output()


def decode(model, instance, beam: int = 1, max_len: int = 30, alpha: float = 0.7) -> List[int]:
    if beam == 1:
        return greedy_decode(model, instance, max_len)
    return beam_decode(model, instance, beam, max_len, alpha)


def generate(model, instances: Sequence, vocab, beam: int = 1, max_len: int = 30, alpha: float = 0.7) -> List[dict]:
    """Decode every instance into ``{id, paragraph_id, generated, reference}`` records."""
    out = []
    unk = 0
    for inst in instances:
        ids = decode(model, inst, beam, max_len, alpha)
        unk += sum(1 for i in ids if i == UNK_ID)
        out.append(
            {
                "id": inst.id,
                "paragraph_id": inst.paragraph_id,
                "generated": " ".join(vocab.decode(ids)),
                "reference": " ".join(vocab.decode(inst.question)),
            }
        )
    if unk:
        logger.info("generated %d UNK tokens across %d questions", unk, len(out))
    return out


def write_generations(path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")


def read_generations(path) -> List[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
