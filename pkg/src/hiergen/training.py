"""Optimisation, the epoch loop, and the finite-difference gradient check."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from .checkpoint import save_checkpoint
from .config import ModelConfig, RunConfig
from .decoding import decode
from .evaluation import bleu
from .models import QGModel, build
from .params import ParamStore
from .tensor import backward, no_grad

logger = logging.getLogger(__name__)


@dataclass
class OptimState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def _grads(params: Union[ParamStore, Mapping]) -> Dict[str, np.ndarray]:
    return {n: (t.grad if t.grad is not None else np.zeros_like(t.data)) for n, t in params.items()}


def adam_step(params: Union[ParamStore, Mapping], state: OptimState, grads: Optional[Mapping[str, np.ndarray]] = None) -> None:
    """Bias-corrected Adam update of every parameter in place; ``grads`` default to ``.grad``."""
    grads = _grads(params) if grads is None else grads
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter {name!r}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, t in params.items():
        g = grads[name]
        if g.shape != t.shape:
            raise ValueError(f"gradient for {name!r} has shape {g.shape}, parameter {t.shape}")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(t.data)
            state.v[name] = np.zeros_like(t.data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        t.data = t.data - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def global_norm(grads: Union[Mapping[str, np.ndarray], Sequence[np.ndarray]]) -> float:
    arrays = grads.values() if isinstance(grads, Mapping) else grads
    return math.sqrt(sum(float(np.sum(g * g)) for g in arrays))


def clip_global_norm(grads, max_norm: float):
    """Rescale all gradients by ``max_norm / norm`` when their joint L2 norm exceeds ``max_norm``."""
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    if isinstance(grads, Mapping):
        return {k: g * scale for k, g in grads.items()}
    return [g * scale for g in grads]


def train_step(model: QGModel, batch, state: OptimState, clip_norm: float) -> Dict[str, float]:
    model.params.zero_grad()
    loss = model.forward_loss(batch)
    backward(loss)
    grads = _grads(model.params)
    norm = global_norm(grads)
    adam_step(model.params, state, clip_global_norm(grads, clip_norm))
    return {"loss": loss.item(), "grad_norm": norm}


def fit(model: QGModel, batch, steps: int, lr: float = 1e-3, clip_norm: float = 5.0, target: Optional[float] = None) -> List[float]:
    """Repeated updates on one fixed batch; stops early once the loss falls below ``target``."""
    state = OptimState(lr=lr)
    losses = []
    for _ in range(steps):
        losses.append(train_step(model, batch, state, clip_norm)["loss"])
        if target is not None and losses[-1] < target:
            break
    return losses


def make_batches(data: Sequence, batch_size: int, rng: np.random.Generator) -> List[list]:
    """Bucket by paragraph length, then shuffle the order of the buckets."""
    order = sorted(range(len(data)), key=lambda i: (sum(len(s) for s in data[i].sentences), i))
    chunks = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    return [[data[i] for i in chunks[j]] for j in rng.permutation(len(chunks))]


def dev_bleu4(model: QGModel, dev: Sequence, max_len: int, beam: int = 1, alpha: float = 0.7) -> float:
    hyps = [[str(t) for t in decode(model, inst, beam, max_len, alpha)] for inst in dev]
    refs = [[str(t) for t in inst.question] for inst in dev]
    return bleu(hyps, refs, 4)


@dataclass
class TrainRunRecord:
    epoch_losses: List[float]
    dev_bleu4: List[float]
    best_checkpoint: str
    best_epoch: int
    config: str
    seed: int
    stopped_early: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def train(config: RunConfig, train_data: Sequence, dev_data: Sequence = (), out_dir=None, model: Optional[QGModel] = None):
    """Train for ``config.train.epochs`` epochs with early stopping on dev BLEU-4.

    Returns ``(model, record)``; the model holds the best-scoring parameters.
    When ``out_dir`` is given, ``best.ckpt`` and ``train_log.jsonl`` are written there.
    """
    if len(train_data) == 0:
        raise ValueError("train: empty training set")
    tc = config.train
    model = model if model is not None else build(config.model)
    state = OptimState(lr=tc.lr, beta1=tc.beta1, beta2=tc.beta2, eps=tc.adam_eps)
    rng = np.random.default_rng(config.seed)
    out = Path(out_dir) if out_dir is not None else None
    log_fh = None
    ckpt_path = ""
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            log_fh = open(out / "train_log.jsonl", "w", encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot write training outputs under {out}: {exc}") from exc
        ckpt_path = str(out / "best.ckpt")
    losses, history = [], []
    best_score, best_epoch, best_state = -math.inf, -1, None
    stale = 0
    stopped = False
    step = 0
    try:
        for epoch in range(tc.epochs):
            batch_losses = []
            for batch in make_batches(train_data, tc.batch_size, rng):
                stats = train_step(model, batch, state, tc.clip_norm)
                step += 1
                batch_losses.append(stats["loss"])
                if log_fh is not None:
                    log_fh.write(json.dumps({"step": step, "loss": stats["loss"], "lr": state.lr, "grad_norm": stats["grad_norm"]}) + "\n")
            losses.append(float(np.mean(batch_losses)))
            score = dev_bleu4(model, dev_data, tc.decode_max_len, tc.beam_size, tc.length_alpha) if len(dev_data) else -losses[-1]
            history.append(score if len(dev_data) else float("nan"))
            logger.info("epoch %d loss %.4f dev bleu4 %.4f", epoch + 1, losses[-1], history[-1])
            if score > best_score:
                best_score, best_epoch, stale = score, epoch, 0
                best_state = model.params.state_dict()
                if ckpt_path:
                    save_checkpoint(ckpt_path, best_state)
            else:
                stale += 1
                if stale >= tc.patience:
                    stopped = True
                    break
    finally:
        if log_fh is not None:
            log_fh.close()
    if best_state is not None:
        model.params.load_state_dict(best_state)
    record = TrainRunRecord(losses, history, ckpt_path, best_epoch + 1, config.to_text(), config.seed, stopped)
    if out is not None:
        (out / "run_record.json").write_text(record.to_json(), encoding="utf-8")
    return model, record


# ---------------------------------------------------------------------------
# gradient check


@dataclass
class GroupCheck:
    name: str
    size: int
    checked: int
    max_rel_error: float
    worst_index: int
    passed: bool


@dataclass
class GradcheckReport:
    architecture: str
    eps: float
    tol: float
    groups: List[GroupCheck]

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.groups)

    @property
    def max_rel_error(self) -> float:
        return max((g.max_rel_error for g in self.groups), default=0.0)

    def failures(self) -> List[str]:
        return [f"{g.name}[{g.worst_index}]: rel. error {g.max_rel_error:.3e}" for g in self.groups if not g.passed]

    def to_text(self) -> str:
        lines = [f"gradcheck {self.architecture}: eps={self.eps:g} tol={self.tol:g}"]
        for g in self.groups:
            flag = "ok  " if g.passed else "FAIL"
            lines.append(f"  {flag} {g.name:32s} checked {g.checked:4d}/{g.size:<7d} max rel err {g.max_rel_error:.3e}")
        lines.append("PASS" if self.passed else "FAIL: " + "; ".join(self.failures()))
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"architecture": self.architecture, "eps": self.eps, "tol": self.tol, "passed": self.passed,
                "groups": [asdict(g) for g in self.groups]}


def relative_error(analytic: float, numeric: float, floor: float = 1e-7) -> float:
    """``|a - n| / max(|a|, |n|, floor)``; the floor turns the comparison absolute for
    coordinates whose true derivative is numerically zero."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradcheck(model_or_config: Union[QGModel, ModelConfig], instance, eps: float = 1e-5, tol: float = 1e-3,
              coords: int = 200, seed: int = 0, floor: float = 1e-7) -> GradcheckReport:
    """Compare backprop gradients of the single-instance loss with central differences.

    Each parameter tensor is one group; groups with more than ``coords`` entries
    are checked on a seeded random subsample of ``coords`` entries, smaller ones
    exhaustively.  Empty groups are skipped.
    """
    model = build(model_or_config) if isinstance(model_or_config, ModelConfig) else model_or_config
    batch = [instance]
    model.params.zero_grad()
    backward(model.forward_loss(batch))
    analytic = _grads(model.params)
    rng = np.random.default_rng(seed)

    def loss_value() -> float:
        with no_grad():
            return model.forward_loss(batch).item()

    groups = []
    for name, t in model.params.items():
        if t.size == 0:
            continue
        idx = np.arange(t.size) if t.size <= coords else np.sort(rng.choice(t.size, coords, replace=False))
        flat = t.data.reshape(-1)
        worst, worst_i = 0.0, -1
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            fp = loss_value()
            flat[i] = orig - eps
            fm = loss_value()
            flat[i] = orig
            err = relative_error(float(analytic[name].reshape(-1)[i]), (fp - fm) / (2 * eps), floor)
            if err > worst or worst_i < 0:
                worst, worst_i = err, int(i)
        groups.append(GroupCheck(name, int(t.size), len(idx), worst, worst_i, worst < tol))
    return GradcheckReport(model.config.architecture, eps, tol, groups)
