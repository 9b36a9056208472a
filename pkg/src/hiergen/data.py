"""Reading SQuAD / MS MARCO style files and turning them into model instances.

Pipeline: ``load_squad``/``load_marco`` give raw :class:`Record` tuples,
:func:`make_example` splits sentences, tokenizes and BIO-tags them into a
string-level :class:`Example` (the preprocessed JSON-lines schema), and
:func:`encode_example` maps an example to a :class:`QGInstance` of token ids.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .exceptions import DataFormatError

logger = logging.getLogger(__name__)

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<bos>", "<eos>"
PAD_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3
RESERVED = (PAD, UNK, BOS, EOS)

TAG_O, TAG_B, TAG_I = 0, 1, 2
TAG_IDS = {"O": TAG_O, "B": TAG_B, "I": TAG_I}


class Record(NamedTuple):
    paragraph: str
    question: str
    answer: str
    answer_start: int  # character offset, -1 when the answer is not in the paragraph
    qid: str = ""
    paragraph_id: str = ""


# ---------------------------------------------------------------------------
# loaders


def _json_error(path, text: str, exc: json.JSONDecodeError, base: int = 0) -> DataFormatError:
    byte = base + len(text[: exc.pos].encode("utf-8"))
    return DataFormatError(f"{path}: malformed JSON at byte {byte}: {exc.msg}")


def load_squad(path) -> List[Record]:
    """One record per (paragraph, question) pair of a SQuAD v1.1 file (first gold answer)."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise _json_error(path, text, exc) from None
    if not isinstance(doc, dict) or not isinstance(doc.get("data"), list):
        raise DataFormatError(f"{path}: expected an object with a 'data' list of articles")
    out = []
    for a, article in enumerate(doc["data"]):
        for p, para in enumerate(article.get("paragraphs", [])):
            try:
                context = para["context"]
                qas = para["qas"]
            except (KeyError, TypeError):
                raise DataFormatError(f"{path}: article {a} paragraph {p} lacks context/qas") from None
            for q in qas:
                if "question" not in q:
                    raise DataFormatError(f"{path}: article {a} paragraph {p}: qa entry without 'question'")
                answers = q.get("answers") or []
                ans = answers[0] if answers else {"text": "", "answer_start": -1}
                out.append(Record(context, q["question"], ans.get("text", ""), int(ans.get("answer_start", -1)),
                                  str(q.get("id", "")), f"{a}-{p}"))
    return out


def load_marco(path) -> List[Record]:
    """MS MARCO v1.1 JSON-lines; keeps queries with at least one selected passage.

    The paragraph is the first selected passage.  Records whose answer does not
    occur verbatim in it are kept with ``answer_start = -1``.
    """
    out = []
    offset = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            start = offset
            offset += len(line.encode("utf-8"))
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}: line {lineno}: malformed JSON at byte {start + exc.pos}: {exc.msg}") from None
            try:
                passages = obj["passages"]
                query = obj["query"]
                answers = obj["answers"]
            except (KeyError, TypeError):
                raise DataFormatError(f"{path}: line {lineno}: missing passages/query/answers") from None
            selected = [p for p in passages if int(p.get("is_selected", 0)) == 1]
            if not selected:
                continue
            paragraph = selected[0]["passage_text"]
            answer = answers[0] if answers else ""
            pos = paragraph.find(answer) if answer else -1
            out.append(Record(paragraph, query, answer, pos, str(obj.get("query_id", lineno)), str(obj.get("query_id", lineno))))
    return out


def split_train_dev(records: Sequence, ratio: float = 0.9, seed: int = 0):
    """Seeded shuffle, then the first ``round(ratio * N)`` items form the train part."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must lie in (0, 1), got {ratio}")
    order = np.random.default_rng(seed).permutation(len(records))
    n_train = int(np.floor(ratio * len(records) + 0.5))
    return [records[i] for i in order[:n_train]], [records[i] for i in order[n_train:]]


# ---------------------------------------------------------------------------
# text processing

ABBREVIATIONS = frozenset(
    "mr. mrs. ms. dr. prof. st. jr. sr. vs. etc. e.g. i.e. u.s. u.k. u.n. inc. ltd. co. corp. no. mt. ft. "
    "gen. gov. sen. rep. rev. jan. feb. mar. apr. aug. sept. oct. nov. dec. approx. fig. est.".split()
)
_BOUNDARY = re.compile(r"[.!?][\"')\]]*(?=\s+[A-Z0-9])")


def sentence_spans(text: str) -> List[Tuple[int, int]]:
    """Character spans of sentences; the text between spans is the original whitespace."""
    stripped = text.strip()
    if not stripped:
        return []
    lo = len(text) - len(text.lstrip())
    hi = len(text.rstrip())
    spans = []
    start = lo
    for m in _BOUNDARY.finditer(text, lo, hi):
        if text[m.start()] == ".":
            word_start = max(text.rfind(" ", 0, m.start()), text.rfind("\n", 0, m.start()), text.rfind("\t", 0, m.start())) + 1
            word = text[word_start : m.start() + 1].lstrip("\"'([").lower()
            if word in ABBREVIATIONS:
                continue
        end = m.end()
        spans.append((start, end))
        nxt = end
        while nxt < hi and text[nxt].isspace():
            nxt += 1
        start = nxt
    spans.append((start, hi))
    return spans


def sentence_split(text: str) -> List[str]:
    """Split on ``.``/``!``/``?`` followed by whitespace and an uppercase letter or digit,
    except after common abbreviations."""
    return [text[a:b] for a, b in sentence_spans(text)]


_TOKEN = re.compile(r"[.,!?;:\"'()]|[^\s.,!?;:\"'()]+")


def tokenize(text: str) -> List[str]:
    """Lowercase, split on whitespace, and detach each of ``.,!?;:"'()`` as its own token."""
    return _TOKEN.findall(text.lower())


def bio_tag(tokens: Sequence[str], answer: Sequence[str]) -> List[str]:
    """Tag the leftmost exact occurrence of ``answer`` as B I..I; all else O."""
    tags = ["O"] * len(tokens)
    n = len(answer)
    if n == 0:
        return tags
    answer = list(answer)
    for i in range(len(tokens) - n + 1):
        if list(tokens[i : i + n]) == answer:
            tags[i] = "B"
            for j in range(i + 1, i + n):
                tags[j] = "I"
            break
    return tags


def bio_tag_sentences(sentences: Sequence[Sequence[str]], answer: Sequence[str]) -> List[List[str]]:
    """Per-sentence BIO tags; only the leftmost match within a single sentence is tagged."""
    out = []
    found = False
    for sent in sentences:
        tags = ["O"] * len(sent) if found else bio_tag(sent, answer)
        found = found or "B" in tags
        out.append(tags)
    return out


# ---------------------------------------------------------------------------
# vocabulary and embeddings


class Vocab:
    """Token <-> id map with reserved ids 0..3 for PAD, UNK, BOS, EOS."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: List[str] = list(RESERVED)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        for t in tokens:
            if t not in self.stoi:
                self.stoi[t] = len(self.itos)
                self.itos.append(t)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def encode(self, tokens: Sequence[str]) -> List[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Sequence[int], strip_special: bool = True) -> List[str]:
        out = []
        for i in ids:
            if strip_special and i in (PAD_ID, BOS_ID, EOS_ID):
                continue
            out.append(self.itos[i])
        return out

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.itos[len(RESERVED):]) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        return cls(t for t in lines if t)


def build_vocab(corpus: Iterable[Sequence[str]], max_size: int = 45000, min_freq: int = 2) -> Vocab:
    """Keep tokens with count >= ``min_freq``, ordered by (count desc, token asc), at most ``max_size`` of them."""
    counts = Counter()
    for toks in corpus:
        counts.update(toks)
    for r in RESERVED:
        counts.pop(r, None)
    kept = sorted((t for t, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t))
    return Vocab(kept[:max_size])


@dataclass
class EmbeddingTable:
    matrix: np.ndarray
    dim: int
    hits: int = 0
    misses: int = 0


def random_embeddings(vocab: Vocab, dim: int, seed: int = 0) -> EmbeddingTable:
    rng = np.random.default_rng(seed)
    m = rng.uniform(-0.1, 0.1, size=(len(vocab), dim))
    m[PAD_ID] = 0.0
    return EmbeddingTable(m, dim, 0, len(vocab) - 1)


def load_embeddings(path, vocab: Vocab, dim: int, seed: int = 0) -> EmbeddingTable:
    """Read a GloVe-style text file (``token v1 .. vD`` per line).

    Vocabulary tokens found in the file get their vector; the rest are drawn
    uniformly from [-0.1, 0.1]; the PAD row is zero.
    """
    table = random_embeddings(vocab, dim, seed)
    found = np.zeros(len(vocab), dtype=bool)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise DataFormatError(f"{path}:{lineno}: expected token plus {dim} values, got {len(parts) - 1}")
            idx = vocab.stoi.get(parts[0])
            if idx is None or idx == PAD_ID:
                continue
            try:
                table.matrix[idx] = [float(v) for v in parts[1:]]
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: non-numeric vector entry") from None
            found[idx] = True
    table.hits = int(found.sum())
    table.misses = len(vocab) - 1 - table.hits
    return table


# ---------------------------------------------------------------------------
# examples and instances


@dataclass
class Example:
    """String-level preprocessed instance (the JSON-lines schema).

    Sentences hold word tokens without BOS/EOS; ``bio`` is aligned to them.
    """

    sentences: List[List[str]]
    question: List[str]
    bio: List[List[str]]
    has_answer: List[bool]
    answer: List[str] = field(default_factory=list)
    id: str = ""
    paragraph_id: str = ""


def make_example(record: Record) -> Example:
    sentences = [tokenize(s) for s in sentence_split(record.paragraph)]
    sentences = [s for s in sentences if s]
    answer = tokenize(record.answer)
    bio = bio_tag_sentences(sentences, answer)
    has = [any(t != "O" for t in tags) for tags in bio]
    return Example(sentences, tokenize(record.question), bio, has, answer, record.qid, record.paragraph_id)


def write_examples(path, examples: Iterable[Example]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(asdict(ex), ensure_ascii=False, sort_keys=True) + "\n")


def read_examples(path) -> List[Example]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out.append(Example(**obj))
            except (json.JSONDecodeError, TypeError) as exc:
                raise DataFormatError(f"{path}:{lineno}: not a preprocessed instance ({exc})") from None
    return out


@dataclass
class QGInstance:
    """Token-id instance.  Each sentence starts with BOS and ends with EOS (tagged O);
    ``question`` carries no BOS/EOS; ``answer_span`` is (sentence, first, last) with
    inclusive positions counted within the BOS-prefixed sentence."""

    sentences: List[List[int]]
    question: List[int]
    bio_tags: List[List[int]]
    sentence_has_answer: List[bool]
    answer_span: Optional[Tuple[int, int, int]] = None
    answer: List[int] = field(default_factory=list)
    id: str = ""
    paragraph_id: str = ""

    @property
    def lengths(self) -> List[int]:
        return [len(s) for s in self.sentences]

    def flat_tokens(self) -> List[int]:
        return [t for s in self.sentences for t in s]

    def flat_tags(self) -> List[int]:
        return [t for s in self.bio_tags for t in s]


def _span_from_tags(bio: List[List[int]]):
    run = None
    for i, tags in enumerate(bio):
        for j, t in enumerate(tags):
            if t == TAG_B:
                run = [i, j, j]
            elif t == TAG_I and run is not None and run[0] == i and run[2] == j - 1:
                run[2] = j
    return tuple(run) if run else None


def encode_example(ex: Example, vocab: Vocab, max_sentences: int = 20, max_sentence_len: int = 50,
                   max_question_len: int = 30) -> QGInstance:
    """Map tokens to ids, add BOS/EOS, truncate to the length limits (with a warning)."""
    sents, bio = ex.sentences, ex.bio
    if len(sents) > max_sentences:
        logger.warning("instance %s: truncating %d sentences to %d", ex.id, len(sents), max_sentences)
        sents, bio = sents[:max_sentences], bio[:max_sentences]
    inner = max_sentence_len - 2
    if any(len(s) > inner for s in sents):
        logger.warning("instance %s: truncating sentences to %d tokens", ex.id, max_sentence_len)
        sents = [s[:inner] for s in sents]
        bio = [b[:inner] for b in bio]
    question = ex.question
    if len(question) > max_question_len:
        logger.warning("instance %s: truncating question to %d tokens", ex.id, max_question_len)
        question = question[:max_question_len]
    tag_ids = [[TAG_O] + [TAG_IDS[t] for t in b] + [TAG_O] for b in bio]
    if not any(TAG_B in t for t in tag_ids):
        tag_ids = [[TAG_O] * len(t) for t in tag_ids]
    span = _span_from_tags(tag_ids)
    return QGInstance(
        sentences=[[BOS_ID] + vocab.encode(s) + [EOS_ID] for s in sents],
        question=vocab.encode(question),
        bio_tags=tag_ids,
        sentence_has_answer=[any(t != TAG_O for t in tags) for tags in tag_ids],
        answer_span=span,
        answer=vocab.encode(ex.answer),
        id=ex.id,
        paragraph_id=ex.paragraph_id,
    )


def check_instance(inst: QGInstance) -> None:
    """Raise ``ValueError`` if any structural invariant of ``inst`` is violated."""
    if len(inst.bio_tags) != len(inst.sentences) or any(len(t) != len(s) for t, s in zip(inst.bio_tags, inst.sentences)):
        raise ValueError("bio_tags shape does not match sentences")
    for s in inst.sentences:
        if len(s) < 2 or s[0] != BOS_ID or s[-1] != EOS_ID:
            raise ValueError("sentence does not start with BOS and end with EOS")
    flat = inst.flat_tags()
    runs = 0
    prev = TAG_O
    for t in flat:
        if t == TAG_I and prev == TAG_O:
            raise ValueError("I tag without preceding B")
        if t == TAG_B:
            runs += 1
        prev = t
    if runs > 1:
        raise ValueError("more than one B..I run")
    if (runs == 1) != (inst.answer_span is not None):
        raise ValueError("answer_span disagrees with tags")
    if inst.answer_span is not None:
        i, a, b = inst.answer_span
        tags = inst.bio_tags[i]
        if tags[a] != TAG_B or any(t != TAG_I for t in tags[a + 1 : b + 1]) or (b + 1 < len(tags) and tags[b + 1] == TAG_I):
            raise ValueError("answer_span does not coincide with the B..I run")
    for has, tags in zip(inst.sentence_has_answer, inst.bio_tags):
        if has != any(t != TAG_O for t in tags):
            raise ValueError("sentence_has_answer disagrees with tags")


def preprocess(records: Sequence[Record], split_ratio: float = 0.9, seed: int = 0, max_size: int = 45000,
               min_freq: int = 2):
    """Split records, build examples, and fit the vocabulary on the training part only.

    Returns ``(train_examples, dev_examples, vocab)``.
    """
    train_rec, dev_rec = split_train_dev(records, split_ratio, seed)
    train = [make_example(r) for r in train_rec]
    dev = [make_example(r) for r in dev_rec]
    corpus = [t for ex in train for t in ex.sentences] + [ex.question for ex in train]
    return train, dev, build_vocab(corpus, max_size, min_freq)


def encode_examples(examples: Iterable[Example], vocab: Vocab, max_sentences: int = 20, max_sentence_len: int = 50,
                    max_question_len: int = 30) -> List[QGInstance]:
    return [encode_example(ex, vocab, max_sentences, max_sentence_len, max_question_len) for ex in examples]
