"""Sentence-level sparsemax next to word-level softmax.

Run with ``python demos/01_sparse_sentence_attention.py``.
"""

# %% Scores for four sentences: softmax spreads mass, sparsemax cuts the tail
import numpy as np

from hiergen.attention import hierarchical_context, softmax, sparsemax

scores = np.array([1.2, 0.9, -0.4, -1.5])
print("softmax  ", np.round(softmax(scores).data, 4))
print("sparsemax", np.round(sparsemax(scores).data, 4))

# %% Shifting all scores changes nothing; scaling them up shrinks the support
for t in (0.5, 1.0, 2.0, 4.0):
    w = sparsemax(t * scores).data
    print(f"scale {t:3.1f}: support {np.flatnonzero(w).tolist()}  weights {np.round(w, 3)}")

# %% Hierarchical context: word rows weighted by sentence weight times word weight
rng = np.random.default_rng(0)
word_reps = [rng.normal(size=(n, 3)) for n in (4, 3, 5, 2)]
word_scores = rng.normal(size=sum(len(r) for r in word_reps))
c, a_w, a_s = hierarchical_context(word_reps, word_scores, scores)
print("sentence weights", np.round(a_s.data, 4))
print("context", np.round(c.data, 4))

# %% Sentences with zero weight cannot influence the context
dropped = int(np.flatnonzero(a_s.data == 0.0)[0])
noisy = list(word_reps)
noisy[dropped] = word_reps[dropped] + 1e6
c2, _, _ = hierarchical_context(noisy, word_scores, scores)
print(f"perturbing sentence {dropped} by 1e6 moves the context by {np.abs(c2.data - c.data).max():.1e}")
