"""Each architecture memorises one toy instance, then greedy decoding reads the question back.

Run with ``python demos/02_memorise_toy.py``.
"""

# %% One paragraph of two sentences, answer in the first, question of three tokens
import numpy as np

from hiergen.config import ARCHITECTURES, toy_model_config
from hiergen.data import QGInstance
from hiergen.decoding import beam_decode, greedy_decode
from hiergen.models import build
from hiergen.training import fit

toy = QGInstance(
    sentences=[[2, 5, 6, 7, 3], [2, 8, 9, 3]],
    question=[10, 11, 5],
    bio_tags=[[0, 1, 2, 0, 0], [0, 0, 0, 0]],
    sentence_has_answer=[True, False],
    answer_span=(0, 1, 2),
    answer=[5, 6],
)

# %% Train until the teacher-forced loss drops below 0.05
models = {}
for arch in ARCHITECTURES:
    model = build(toy_model_config(arch))
    losses = fit(model, [toy], steps=500, lr=1e-2, target=0.05)
    models[arch] = model
    print(f"{arch:20s} {model.parameter_count():5d} params  {len(losses):3d} steps  "
          f"loss {losses[0]:.3f} -> {losses[-1]:.4f}  greedy {greedy_decode(model, toy)}  beam {beam_decode(model, toy, 3)}")

# %% Where the hierarchical LSTM looks while it writes each token
for step in models["HierSeq2SeqAE"].attention_trace(toy, toy.question):
    a = np.asarray(step["sentence_weights"])
    print("sentence weights", np.round(a, 3))
