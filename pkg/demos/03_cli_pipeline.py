"""The command-line pipeline on a small synthetic corpus: preprocess, train, generate, evaluate.

Run with ``python demos/03_cli_pipeline.py``; everything is written to a temporary directory.
"""

# %% A SQuAD-shaped corpus of 120 generated question/answer pairs
import json
import tempfile
from pathlib import Path

from hiergen.cli import run
from hiergen.synthetic import make_squad_corpus, write_squad_corpus

print(json.dumps(make_squad_corpus(1, seed=3)["data"][0]["paragraphs"][0], indent=1))

root = Path(tempfile.mkdtemp(prefix="hiergen-demo-"))
write_squad_corpus(root / "train.json", 120, seed=0)

# %% Small dimensions keep the run under a minute
settings = ["word_dim=16", "bio_dim=4", "flag_dim=4", "enc_hidden=16", "sent_hidden=16", "dec_hidden=32",
            "attn_dim=16", "min_freq=1", "epochs=15", "batch_size=16", "lr=0.01", "decode_max_len=15"]
flags = [x for s in settings for x in ("--set", s)]
data, out = root / "data", root / "run"

# %% Each verb returns its exit code
assert run(["preprocess", "--data", str(root), "--out", str(data), *flags]) == 0
assert run(["train", "--arch", "HierSeq2SeqAE", "--data", str(data), "--out", str(out), *flags]) == 0
assert run(["generate", "--arch", "HierSeq2SeqAE", "--data", str(data), "--out", str(out), *flags]) == 0
assert run(["evaluate", "--out", str(out)]) == 0

# %% A few generated questions next to their references
for line in (out / "generations.jsonl").read_text().splitlines()[:5]:
    g = json.loads(line)
    print(f"{g['generated']!r:50s} | {g['reference']!r}")
print("outputs in", root)
