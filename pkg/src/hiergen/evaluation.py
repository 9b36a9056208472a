"""Corpus BLEU-1..4 and ROUGE-L.

BLEU is the corpus-level variant: clipped n-gram matches and candidate n-gram
counts are summed over the corpus before forming each precision.  An order with
zero matches uses add-one smoothing, ``(0 + 1) / (count + 1)``, so scores stay
defined and comparable within this package.  Numbers are not meant to be
compared with other toolkits.

ROUGE-L is the per-pair LCS F-measure ``(1 + b2) P R / (R + b2 P)`` averaged over
the corpus, with ``b2 = 1.2`` by default.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import List, Sequence, Tuple

Tokens = Sequence[str]


def _check(hypotheses, references) -> None:
    if len(hypotheses) != len(references):
        raise ValueError(f"corpus length mismatch: {len(hypotheses)} hypotheses vs {len(references)} references")
    if len(hypotheses) == 0:
        raise ValueError("empty corpus")


def ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def modified_precision(hypotheses: Sequence[Tokens], references: Sequence[Tokens], n: int) -> Tuple[int, int]:
    """Corpus totals ``(clipped matches, candidate n-grams)`` for order ``n``."""
    matches = total = 0
    for hyp, ref in zip(hypotheses, references):
        h, r = ngrams(hyp, n), ngrams(ref, n)
        matches += sum(min(c, r[g]) for g, c in h.items())
        total += sum(h.values())
    return matches, total


def brevity_penalty(hyp_len: int, ref_len: int) -> float:
    if hyp_len == 0:
        return 0.0 if ref_len > 0 else 1.0
    if hyp_len > ref_len:
        return 1.0
    return math.exp(1.0 - ref_len / hyp_len)


def bleu(hypotheses: Sequence[Tokens], references: Sequence[Tokens], max_order: int = 4) -> float:
    """Corpus BLEU with uniform weights over orders 1..``max_order``."""
    _check(hypotheses, references)
    log_sum = 0.0
    for n in range(1, max_order + 1):
        m, c = modified_precision(hypotheses, references, n)
        p = m / c if m > 0 else 1.0 / (c + 1.0)
        log_sum += math.log(p)
    bp = brevity_penalty(sum(len(h) for h in hypotheses), sum(len(r) for r in references))
    return bp * math.exp(log_sum / max_order)


def lcs_length(a: Tokens, b: Tokens) -> int:
    """Longest common subsequence length by dynamic programming (O(len(a) len(b)))."""
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, 1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l_pair(hyp: Tokens, ref: Tokens, beta2: float = 1.2) -> float:
    if len(hyp) == 0 or len(ref) == 0:
        return 0.0
    lcs = lcs_length(hyp, ref)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(hyp), lcs / len(ref)
    return (1.0 + beta2) * p * r / (r + beta2 * p)


def rouge_l(hypotheses: Sequence[Tokens], references: Sequence[Tokens], beta2: float = 1.2) -> float:
    _check(hypotheses, references)
    return sum(rouge_l_pair(h, r, beta2) for h, r in zip(hypotheses, references)) / len(hypotheses)


@dataclass
class EvalReport:
    bleu1: float
    bleu2: float
    bleu3: float
    bleu4: float
    rouge_l: float
    n_instances: int
    brevity_penalty: float

    def to_json(self, config_hash: str = "", seed: int = 0) -> str:
        body = asdict(self)
        body["config_hash"] = config_hash
        body["seed"] = seed
        return json.dumps(body, indent=2, sort_keys=True)


def evaluate(hypotheses: Sequence[Tokens], references: Sequence[Tokens], beta2: float = 1.2) -> EvalReport:
    _check(hypotheses, references)
    scores = [bleu(hypotheses, references, k) for k in (1, 2, 3, 4)]
    bp = brevity_penalty(sum(len(h) for h in hypotheses), sum(len(r) for r in references))
    return EvalReport(*scores, rouge_l(hypotheses, references, beta2), len(hypotheses), bp)


def split_tokens(lines: Sequence[str]) -> List[List[str]]:
    return [line.split() for line in lines]
