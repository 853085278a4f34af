"""Seeded random streams and named trainable parameters.

All randomness in the package flows through Rng so that a single integer seed
pins down initialisation, shuffling, dropout masks, and synthetic data.
Derived streams come from ``child(...)``, which mixes extra integer keys into
the seed; streams with different keys are statistically independent and a
stream never depends on how much another stream has been consumed.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import Tensor

__all__ = ["Rng", "ParameterStore"]


class Rng:
    """A named PCG64 stream with deterministic child spawning."""

    def __init__(self, seed: int, _keys: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._keys = _keys
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([self.seed, *_keys]))
        )

    def child(self, *keys: int) -> "Rng":
        """A fresh stream derived from this seed and the given integer keys."""
        return Rng(self.seed, self._keys + tuple(int(k) for k in keys))

    def random(self, shape=()) -> np.ndarray:
        return self._gen.random(shape)

    def uniform(self, low: float, high: float, shape=()) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def normal(self, mean: float, std: float, shape=()) -> np.ndarray:
        return self._gen.normal(mean, std, shape)

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


class ParameterStore:
    """Insertion-ordered registry of named trainable tensors.

    Creation order is part of the model definition: every initialiser draws
    from the store's own stream, so building the same architecture with the
    same seed reproduces every weight bit for bit.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.rng = Rng(self.seed).child(0)
        self._entries: dict[str, Tensor] = {}

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __getitem__(self, name: str) -> Tensor:
        if name not in self._entries:
            raise ConfigError(f"unknown parameter {name!r}")
        return self._entries[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._entries.items())

    def names(self) -> list[str]:
        return list(self._entries)

    def total_size(self) -> int:
        return sum(t.size for t in self._entries.values())

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._entries:
            raise ConfigError(f"parameter {name!r} already registered")
        tensor = Tensor(np.array(data, dtype=np.float64), requires_grad=True)
        self._entries[name] = tensor
        return tensor

    def weight(self, name: str, shape: tuple[int, ...]) -> Tensor:
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for an (in, out) matrix."""
        if len(shape) < 1 or shape[0] < 1:
            raise ShapeError(f"weight {name!r} needs a positive fan-in, got {shape}")
        bound = 1.0 / float(np.sqrt(shape[0]))
        return self.add(name, self.rng.uniform(-bound, bound, shape))

    def uniform(self, name: str, shape: tuple[int, ...], low: float, high: float) -> Tensor:
        return self.add(name, self.rng.uniform(low, high, shape))

    def zeros(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self.add(name, np.zeros(shape))

    def ones(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self.add(name, np.ones(shape))

    def zero_grads(self) -> None:
        for tensor in self._entries.values():
            tensor.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._entries.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = [n for n in self._entries if n not in state]
        surplus = [n for n in state if n not in self._entries]
        if missing or surplus:
            raise ConfigError(
                f"parameter names do not match: missing {missing}, unexpected {surplus}"
            )
        for name, tensor in self._entries.items():
            values = np.asarray(state[name], dtype=np.float64)
            if values.shape != tensor.shape:
                raise ShapeError(
                    f"parameter {name!r} expects shape {tensor.shape}, got {values.shape}"
                )
            tensor.data = values.copy()
