"""Fully-connected networks with hand-written backpropagation.

The network maps an encoded ``(action, state, step)`` triple to a scalar
preference.  Parameters live in one flat vector; :meth:`Mlp.layers` returns
``(W, b)`` views into it, so updates from the MPG rules (which work on flat
blocks) move the network directly.

Flat layout: for each layer ``W`` (``out × in``, row-major) then ``b``.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any, ClassVar, Literal

import numpy as np

from app.core.errors import ConfigError, DimensionMismatchError
from app.policies.base import PreferenceModel

Activation = Literal["tanh", "relu", "identity"]
HorizonMode = Literal["none", "separate", "raw", "inverse"]

_ACTIVATIONS: dict[str, tuple[Callable[[np.ndarray], np.ndarray], Callable[[np.ndarray, np.ndarray], np.ndarray]]] = {
    # (f(z), f'(z) given z and f(z))
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, a: (z > 0).astype(float)),
    "identity": (lambda z: z, lambda z, a: np.ones_like(z)),
}


# ── Input encoding ──────────────────────────────────────────────────────


@dataclass(frozen=True)
class HorizonEncoding:
    """How the remaining horizon ``i`` enters the network.

    * ``none`` / ``separate``: not an input (one network per step).
    * ``raw``: ``i`` itself.
    * ``inverse``: ``g(i) = 1 - 1/i``, bounded in ``[0, 1)``.
    """

    mode: HorizonMode = "none"

    @property
    def width(self) -> int:
        return 1 if self.mode in ("raw", "inverse") else 0

    @property
    def shared(self) -> bool:
        return self.width == 1

    def encode(self, step: int) -> np.ndarray:
        if self.mode == "raw":
            return np.array([float(step)])
        if self.mode == "inverse":
            return np.array([1.0 - 1.0 / step])
        return np.empty(0)


def _identity_features(state: Any) -> np.ndarray:
    return np.atleast_1d(np.asarray(state, dtype=float))


@dataclass
class InputEncoder:
    """Builds the network input ``[state features, one-hot(a), g(i)]``."""

    n_actions: int
    state_dim: int
    horizon: HorizonEncoding = field(default_factory=HorizonEncoding)
    state_features: Callable[[Any], np.ndarray] = _identity_features

    @property
    def width(self) -> int:
        return self.state_dim + self.n_actions + self.horizon.width

    def encode_all(self, state: Any, step: int) -> np.ndarray:
        """Inputs for every action at ``(state, step)``, shape ``(A, width)``."""
        phi = np.asarray(self.state_features(state), dtype=float).reshape(-1)
        if phi.shape[0] != self.state_dim:
            raise DimensionMismatchError(f"state features have length {phi.shape[0]}, expected {self.state_dim}")
        x = np.zeros((self.n_actions, self.width))
        x[:, : self.state_dim] = phi
        x[np.arange(self.n_actions), self.state_dim + np.arange(self.n_actions)] = 1.0
        if self.horizon.width:
            x[:, -1] = self.horizon.encode(step)[0]
        return x

    def encode(self, action: int, state: Any, step: int) -> np.ndarray:
        return self.encode_all(state, step)[action]


# ── Network ─────────────────────────────────────────────────────────────


def layer_shapes(sizes: tuple[int, ...]) -> list[tuple[int, int]]:
    return [(sizes[k + 1], sizes[k]) for k in range(len(sizes) - 1)]


def count_params(sizes: tuple[int, ...]) -> int:
    return sum(out * inp + out for out, inp in layer_shapes(sizes))


@dataclass(eq=False)
class Mlp:
    """``sizes = (in, hidden…, 1)``; hidden layers use *activation*, the output is linear."""

    sizes: tuple[int, ...]
    params: np.ndarray
    activation: Activation = "tanh"

    def __post_init__(self) -> None:
        self.sizes = tuple(int(n) for n in self.sizes)
        if len(self.sizes) < 2 or self.sizes[-1] != 1:
            raise ConfigError(f"layer sizes must run from input width to 1, got {self.sizes}")
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(f"unknown activation '{self.activation}'")
        if self.params.shape != (count_params(self.sizes),):
            raise DimensionMismatchError(
                f"params have shape {self.params.shape}, layers need ({count_params(self.sizes)},)"
            )

    @classmethod
    def init(cls, sizes: tuple[int, ...], rng: np.random.Generator, activation: Activation = "tanh") -> Mlp:
        """Gaussian weights with variance ``1/fan_in``, zero biases."""
        chunks = []
        for out, inp in layer_shapes(sizes):
            chunks.append(rng.normal(0.0, 1.0 / np.sqrt(inp), size=out * inp))
            chunks.append(np.zeros(out))
        return cls(tuple(sizes), np.concatenate(chunks), activation)

    @property
    def n_params(self) -> int:
        return self.params.shape[0]

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """``(W, b)`` views into :attr:`params`."""
        return unflatten(self.sizes, self.params)

    def forward_batch(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
        """Outputs ``(B,)`` plus the activations and pre-activations backprop needs."""
        act, _ = _ACTIVATIONS[self.activation]
        a = np.atleast_2d(x)
        acts, pres = [a], []
        layers = self.layers()
        for k, (w, b) in enumerate(layers):
            z = a @ w.T + b
            pres.append(z)
            a = z if k == len(layers) - 1 else act(z)
            acts.append(a)
        return a[:, 0], acts, pres

    def jacobian_batch(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Outputs ``(B,)`` and per-sample parameter gradients ``(B, P)``."""
        _, dact = _ACTIVATIONS[self.activation]
        out, acts, pres = self.forward_batch(x)
        layers = self.layers()
        batch = acts[0].shape[0]
        grads: list[np.ndarray] = []
        delta = np.ones((batch, 1))
        for k in range(len(layers) - 1, -1, -1):
            w, _ = layers[k]
            grads.append(delta)
            grads.append(np.einsum("bo,bi->boi", delta, acts[k]).reshape(batch, -1))
            if k:
                delta = (delta @ w) * dact(pres[k - 1], acts[k])
        return out, np.concatenate(grads[::-1], axis=1)

    def to_json(self) -> dict[str, Any]:
        return {"sizes": list(self.sizes), "activation": self.activation, "params": self.params.tolist()}

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> Mlp:
        return cls(tuple(doc["sizes"]), np.asarray(doc["params"], dtype=float), doc.get("activation", "tanh"))


def unflatten(sizes: tuple[int, ...], flat: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split a flat vector into per-layer ``(W, b)`` views."""
    views, offset = [], 0
    for out, inp in layer_shapes(sizes):
        w = flat[offset : offset + out * inp].reshape(out, inp)
        offset += out * inp
        b = flat[offset : offset + out]
        offset += out
        views.append((w, b))
    return views


def forward(mlp: Mlp, encoder: InputEncoder, action: int, state: Any, step: int) -> float:
    """``h_θ(a, s, i)``."""
    out, _, _ = mlp.forward_batch(encoder.encode(action, state, step))
    return float(out[0])


def grad_params(mlp: Mlp, encoder: InputEncoder, action: int, state: Any, step: int) -> np.ndarray:
    """``∂h_θ(a, s, i)/∂θ`` as a flat vector (split it with :func:`unflatten`)."""
    _, jac = mlp.jacobian_batch(encoder.encode(action, state, step))
    return jac[0]


# ── Preference model adapter ────────────────────────────────────────────


class NeuralPreference(PreferenceModel):
    """:class:`PreferenceModel` whose parameter block is the flat vector of an :class:`Mlp`."""

    kind: ClassVar[str] = "neural"
    supports_shared: ClassVar[bool] = True

    def __init__(
        self,
        encoder: InputEncoder,
        hidden: tuple[int, ...] = (64, 64),
        activation: Activation = "tanh",
        *,
        state_encoding: str | None = None,
    ):
        super().__init__(encoder.n_actions)
        self.encoder = encoder
        self.hidden = tuple(int(h) for h in hidden)
        self.activation = activation
        self.sizes = (encoder.width, *self.hidden, 1)
        self.state_encoding = state_encoding
        self._n_params = count_params(self.sizes)

    @property
    def n_params(self) -> int:
        return self._n_params

    def network(self, theta: np.ndarray) -> Mlp:
        return Mlp(self.sizes, theta, self.activation)

    def init_params(self, rng: np.random.Generator | None = None) -> np.ndarray:
        rng = rng if rng is not None else np.random.default_rng()
        return Mlp.init(self.sizes, rng, self.activation).params

    def preferences(self, theta: np.ndarray, state: Any, step: int) -> np.ndarray:
        out, _, _ = self.network(theta).forward_batch(self.encoder.encode_all(state, step))
        return out

    def jacobian(self, theta: np.ndarray, state: Any, step: int) -> np.ndarray:
        return self.evaluate(theta, state, step)[1]

    def evaluate(self, theta: np.ndarray, state: Any, step: int) -> tuple[np.ndarray, np.ndarray]:
        return self.network(theta).jacobian_batch(self.encoder.encode_all(state, step))

    def to_json(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "n_actions": self.n_actions,
            "state_dim": self.encoder.state_dim,
            "hidden": list(self.hidden),
            "activation": self.activation,
            "horizon_encoding": self.encoder.horizon.mode,
            "state_encoding": self.state_encoding,
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any], *, state_features: Callable[[Any], np.ndarray] | None = None):
        try:
            encoder = InputEncoder(
                int(doc["n_actions"]),
                int(doc["state_dim"]),
                HorizonEncoding(doc.get("horizon_encoding", "none")),
                state_features or _identity_features,
            )
            return cls(
                encoder,
                tuple(doc.get("hidden", (64, 64))),
                doc.get("activation", "tanh"),
                state_encoding=doc.get("state_encoding"),
            )
        except KeyError as exc:
            raise ConfigError(f"neural model document is missing field {exc}") from exc
