"""Seeded generator of small SQuAD-format corpora.

Paragraphs describe a few people with one fact per sentence, padded with
distractor sentences; each question asks about one fact, and its answer is a
span of exactly one sentence.  Useful wherever real data is unavailable:
tests, demos, and quick end-to-end runs.
"""

from __future__ import annotations

import json
from typing import Dict, List

import numpy as np

NAMES = ["Alice", "Bruno", "Chen", "Dana", "Emeka", "Farah", "Goran", "Hana", "Ivan", "Julia", "Kofi", "Lena",
         "Marco", "Nadia", "Omar", "Priya", "Quinn", "Rosa", "Sven", "Tara"]
CITIES = ["Paris", "Lagos", "Oslo", "Lima", "Hanoi", "Cairo", "Quito", "Dublin", "Kyoto", "Perth"]
JOBS = ["teacher", "pilot", "doctor", "chef", "painter", "lawyer", "farmer", "nurse"]
INSTRUMENTS = ["piano", "violin", "guitar", "drums", "flute", "cello"]
FOODS = ["rice", "bread", "soup", "mangoes", "cheese", "noodles"]
YEARS = [str(y) for y in range(1950, 2000, 3)]

FACTS = [
    ("{n} was born in {v}.", "Where was {n} born?", CITIES),
    ("{n} works as a {v}.", "What does {n} work as?", JOBS),
    ("{n} plays the {v}.", "Which instrument does {n} play?", INSTRUMENTS),
    ("{n} likes to eat {v}.", "What does {n} like to eat?", FOODS),
    ("{n} moved to the coast in {v}.", "When did {n} move to the coast?", YEARS),
]
DISTRACTORS = [
    "The town has a small museum.",
    "Many visitors arrive in the summer.",
    "The river floods every spring.",
    "A new bridge opened last year.",
    "Local markets sell fresh fruit.",
    "The old library was rebuilt.",
]


def make_paragraph(rng: np.random.Generator, n_people: int = 2, n_distractors: int = 1):
    """Return ``(context, facts)`` where facts are (question, answer, answer_start)."""
    people = rng.choice(NAMES, size=n_people, replace=False)
    sentences, facts = [], []
    for person in people:
        for f in rng.choice(len(FACTS), size=2, replace=False):
            template, qtemplate, values = FACTS[f]
            value = str(rng.choice(values))
            sentences.append((template.format(n=person, v=value), qtemplate.format(n=person), value))
    for d in rng.choice(len(DISTRACTORS), size=n_distractors, replace=False):
        sentences.insert(int(rng.integers(0, len(sentences) + 1)), (DISTRACTORS[d], None, None))
    context = ""
    for sent, question, value in sentences:
        if context:
            context += " "
        if question is not None:
            start = len(context) + sent.index(value)
            facts.append((question, value, start))
        context += sent
    return context, facts


def make_squad_corpus(n_instances: int, seed: int = 0, questions_per_paragraph: int = 2) -> Dict:
    """A SQuAD v1.1-shaped dict holding exactly ``n_instances`` (paragraph, question) pairs."""
    rng = np.random.default_rng(seed)
    articles: List[dict] = []
    made = 0
    while made < n_instances:
        paragraphs = []
        for _ in range(3):
            if made >= n_instances:
                break
            context, facts = make_paragraph(rng, int(rng.integers(1, 3)), int(rng.integers(0, 3)))
            take = min(questions_per_paragraph, len(facts), n_instances - made)
            qas = []
            for k in rng.choice(len(facts), size=take, replace=False):
                q, a, start = facts[k]
                qas.append({"id": f"q{made}", "question": q, "answers": [{"text": a, "answer_start": start}]})
                made += 1
            paragraphs.append({"context": context, "qas": qas})
        articles.append({"title": f"article{len(articles)}", "paragraphs": paragraphs})
    return {"version": "1.1", "data": articles}


def write_squad_corpus(path, n_instances: int, seed: int = 0) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(make_squad_corpus(n_instances, seed), fh, indent=1)
