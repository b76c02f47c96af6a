"""Named trainable parameters, SGD with momentum, and checkpoint I/O."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .autodiff import Tensor

CHECKPOINT_FORMAT = "megraph-params-v1"


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Fan-in/fan-out scaled uniform init for 2-d weights."""
    fan_in, fan_out = shape[0], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class ParamStore:
    """Registry of named parameter tensors plus per-parameter velocity.

    Names are unique and shapes are fixed at creation; iteration follows
    insertion order, which keeps optimizer updates deterministic.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._velocity: dict[str, np.ndarray] = {}

    def create(
        self,
        name: str,
        shape: tuple[int, ...],
        rng: np.random.Generator | None = None,
        init: str = "glorot",
    ) -> Tensor:
        if name in self._params:
            raise ValueError(f"parameter '{name}' already exists")
        if init == "glorot":
            if rng is None:
                raise ValueError("glorot init needs an rng")
            data = glorot_uniform(rng, shape)
        elif init == "zeros":
            data = np.zeros(shape)
        else:
            raise ValueError(f"unknown init '{init}'")
        t = Tensor(data, requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def n_values(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self._params):
            missing = set(self._params) - set(state)
            extra = set(state) - set(self._params)
            raise ValueError(
                f"parameter name mismatch: missing={sorted(missing)} "
                f"extra={sorted(extra)}"
            )
        for name, values in state.items():
            target = self._params[name]
            values = np.asarray(values, dtype=np.float64)
            if values.shape != target.data.shape:
                raise ValueError(
                    f"shape mismatch for '{name}': checkpoint {values.shape}, "
                    f"expected {target.data.shape}"
                )
            target.data = values.copy()

    # -- checkpoint files ---------------------------------------------------

    def save(self, path) -> None:
        write_checkpoint(self.state_dict(), path)

    def load(self, path) -> None:
        """Load a checkpoint into this store; rejects any shape mismatch."""
        state = read_checkpoint(path)
        self.load_state_dict(state)


def write_checkpoint(state: dict[str, np.ndarray], path) -> None:
    """Write name -> array values as JSON; floats round-trip exactly."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "params": {
            name: {
                "shape": list(np.asarray(values).shape),
                "values": np.asarray(values).ravel().tolist(),
            }
            for name, values in state.items()
        },
    }
    Path(path).write_text(json.dumps(payload))


def read_checkpoint(path) -> dict[str, np.ndarray]:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a parameter checkpoint: {path}")
    state = {}
    for name, entry in payload["params"].items():
        shape = tuple(entry["shape"])
        values = np.asarray(entry["values"], dtype=np.float64)
        if values.size != int(np.prod(shape)):
            raise ValueError(f"corrupt checkpoint entry for '{name}'")
        state[name] = values.reshape(shape)
    return state


def sgd_step(store: ParamStore, lr: float, momentum: float = 0.0) -> None:
    """p <- p - lr * v with v <- momentum * v + grad; zeroes grads afterwards."""
    for name, p in store.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(
                f"sgd_step: non-finite gradient for parameter '{name}'"
            )
        v = store._velocity.get(name)
        if v is None:
            v = np.zeros_like(p.data)
        v = momentum * v + g
        store._velocity[name] = v
        p.data = p.data - lr * v
        p.grad = None
