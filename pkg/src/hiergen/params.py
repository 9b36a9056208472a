"""Named parameter registry with seeded initialisation."""

from __future__ import annotations

from typing import Dict, Iterator, Tuple

import numpy as np

from .tensor import Tensor


class ParamStore:
    """Ordered mapping of unique names to trainable tensors.

    Creation order is part of the contract: two stores built with the same seed
    and the same sequence of calls hold identical values.
    """

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)
        self.tensors: Dict[str, Tensor] = {}

    def _add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self.tensors:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(data, requires_grad=True, name=name)
        self.tensors[name] = t
        return t

    def glorot(self, name: str, rows: int, cols: int) -> Tensor:
        limit = np.sqrt(6.0 / (rows + cols))
        return self._add(name, self.rng.uniform(-limit, limit, size=(rows, cols)))

    def uniform(self, name: str, shape: Tuple[int, ...], limit: float) -> Tensor:
        return self._add(name, self.rng.uniform(-limit, limit, size=shape))

    def zeros(self, name: str, shape: Tuple[int, ...]) -> Tensor:
        return self._add(name, np.zeros(shape))

    def full(self, name: str, shape: Tuple[int, ...], value: float) -> Tensor:
        return self._add(name, np.full(shape, float(value)))

    def array(self, name: str, data: np.ndarray) -> Tensor:
        return self._add(name, np.array(data, dtype=np.float64))

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def values(self):
        return self.tensors.values()

    def count(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.tensors.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        missing = set(self.tensors) - set(state)
        extra = set(state) - set(self.tensors)
        if missing or extra:
            raise KeyError(f"parameter mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, t in self.tensors.items():
            if state[k].shape != t.shape:
                raise ValueError(f"parameter {k}: shape {state[k].shape} != {t.shape}")
            t.data = np.array(state[k], dtype=np.float64)
