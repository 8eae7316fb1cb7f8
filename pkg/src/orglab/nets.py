"""Tiny feedforward networks on flat float64 parameter vectors.

Everything downstream (optimizers, snapshots, finite-difference checks)
treats a network as a single flat vector, which makes the memory layout part
of the contract: for each layer, fan_in x fan_out row-major weights followed
by fan_out biases, layers in order. There is no autodiff graph; gradients
come from the hand-written backward pass below.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "DimensionError",
    "NonFiniteGradientError",
    "Mlp",
    "AdamState",
    "adam_init",
    "adam_step",
    "clip_global_norm",
    "param_count",
]


class DimensionError(ValueError):
    """An input or parameter vector does not match the declared layout."""


class NonFiniteGradientError(ValueError):
    """A gradient handed to the optimizer contains NaN or infinity."""


_ACTIVATION_IDS = {"tanh": 0, "relu": 1}
_HEAD_IDS = {"linear": 0, "softmax": 1}
_MAGIC = b"OLN1"


def param_count(layer_sizes) -> int:
    """Length of the flat vector for the given layer sizes: sum (fan_in+1)*fan_out."""
    sizes = tuple(int(s) for s in layer_sizes)
    return sum((fi + 1) * fo for fi, fo in zip(sizes[:-1], sizes[1:]))


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _activate_deriv(name: str, h: np.ndarray) -> np.ndarray:
    # Expressed in terms of the activation output, which is what the
    # forward cache stores.
    if name == "tanh":
        return 1.0 - h * h
    return (h > 0.0).astype(np.float64)


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class Mlp:
    """Feedforward network whose ``params`` vector is the single source of truth.

    ``layer_sizes`` runs input first, output last. Hidden layers use
    ``activation``; the output layer is raw affine under the ``linear`` head
    or row-wise softmax under the ``softmax`` head.
    """

    layer_sizes: tuple[int, ...]
    params: np.ndarray
    activation: str = "tanh"
    head: str = "linear"

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2:
            raise DimensionError("layer_sizes needs at least an input and an output size")
        if any(s <= 0 for s in self.layer_sizes):
            raise DimensionError(f"layer sizes must be positive, got {self.layer_sizes}")
        if self.activation not in _ACTIVATION_IDS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.head not in _HEAD_IDS:
            raise ValueError(f"unknown head {self.head!r}")
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        expected = param_count(self.layer_sizes)
        if self.params.shape != (expected,):
            raise DimensionError(
                f"layers {self.layer_sizes} need {expected} parameters, "
                f"got array of shape {self.params.shape}"
            )

    # -- construction ------------------------------------------------------

    @classmethod
    def create(cls, layer_sizes, rng: np.random.Generator,
               activation: str = "tanh", head: str = "linear") -> "Mlp":
        """Fresh network: weights uniform in +/-sqrt(6/(fan_in+fan_out)), zero biases."""
        sizes = tuple(int(s) for s in layer_sizes)
        chunks = []
        for fi, fo in zip(sizes[:-1], sizes[1:]):
            bound = np.sqrt(6.0 / (fi + fo))
            chunks.append(rng.uniform(-bound, bound, size=fi * fo))
            chunks.append(np.zeros(fo))
        return cls(sizes, np.concatenate(chunks), activation, head)

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    def _weight_views(self):
        """Yield (W, b, offset) views into the flat parameter vector."""
        off = 0
        for fi, fo in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            w = self.params[off:off + fi * fo].reshape(fi, fo)
            b = self.params[off + fi * fo:off + (fi + 1) * fo]
            yield w, b, off
            off += (fi + 1) * fo

    # -- forward / backward ------------------------------------------------

    def _as_batch(self, x) -> tuple[np.ndarray, bool]:
        arr = np.asarray(x, dtype=np.float64)
        single = arr.ndim == 1
        batch = arr[None, :] if single else arr
        if batch.ndim != 2 or batch.shape[1] != self.in_dim:
            raise DimensionError(
                f"expected input with last dimension {self.in_dim}, got shape {arr.shape}"
            )
        return batch, single

    def forward(self, x) -> np.ndarray:
        """Evaluate the network on one input vector or a batch of row vectors."""
        out, _ = self._forward_cached(self._as_batch(x)[0])
        return out[0] if np.asarray(x).ndim == 1 else out

    def _forward_cached(self, batch: np.ndarray):
        n_affine = len(self.layer_sizes) - 1
        hs = [batch]
        for i, (w, b, _) in enumerate(self._weight_views()):
            z = hs[-1] @ w + b
            hs.append(_activate(self.activation, z) if i < n_affine - 1 else z)
        logits = hs[-1]
        out = _softmax_rows(logits) if self.head == "softmax" else logits
        return out, hs

    def backward(self, x, upstream) -> tuple[np.ndarray, np.ndarray]:
        """Gradient of sum over rows of (upstream . output).

        Returns ``(param_grad, input_grad)``. ``param_grad`` is a flat vector
        summed over the batch; ``input_grad`` matches the shape of ``x``.
        The upstream weights are treated as constants.
        """
        batch, single = self._as_batch(x)
        up = np.asarray(upstream, dtype=np.float64)
        up = up[None, :] if single else up
        if up.shape != (batch.shape[0], self.out_dim):
            raise DimensionError(
                f"upstream shape {np.asarray(upstream).shape} does not match "
                f"output ({batch.shape[0]}, {self.out_dim})"
            )
        out, hs = self._forward_cached(batch)
        if self.head == "softmax":
            delta = out * (up - np.sum(up * out, axis=1, keepdims=True))
        else:
            delta = up

        param_grad = np.zeros_like(self.params)
        views = list(self._weight_views())
        for i in range(len(views) - 1, -1, -1):
            w, _, off = views[i]
            fi, fo = w.shape
            param_grad[off:off + fi * fo] = (hs[i].T @ delta).ravel()
            param_grad[off + fi * fo:off + (fi + 1) * fo] = delta.sum(axis=0)
            back = delta @ w.T
            if i > 0:
                delta = back * _activate_deriv(self.activation, hs[i])
        input_grad = back
        return param_grad, input_grad[0] if single else input_grad

    def grad(self, x, upstream) -> np.ndarray:
        """Flat parameter gradient of (upstream . output) at a single input."""
        return self.backward(x, upstream)[0]

    # -- snapshots -----------------------------------------------------------

    def to_bytes(self) -> bytes:
        """Binary snapshot: header (layer sizes, activation, head) + float64 LE params."""
        header = struct.pack(
            "<4sIBBH", _MAGIC, 1,
            _ACTIVATION_IDS[self.activation], _HEAD_IDS[self.head], 0,
        )
        header += struct.pack(f"<I{len(self.layer_sizes)}I",
                              len(self.layer_sizes), *self.layer_sizes)
        return header + self.params.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Mlp":
        magic, version, act_id, head_id, _ = struct.unpack_from("<4sIBBH", blob, 0)
        if magic != _MAGIC or version != 1:
            raise ValueError("not a recognized network snapshot")
        off = struct.calcsize("<4sIBBH")
        (n_layers,) = struct.unpack_from("<I", blob, off)
        off += 4
        sizes = struct.unpack_from(f"<{n_layers}I", blob, off)
        off += 4 * n_layers
        params = np.frombuffer(blob, dtype="<f8", offset=off).astype(np.float64)
        activation = {v: k for k, v in _ACTIVATION_IDS.items()}[act_id]
        head = {v: k for k, v in _HEAD_IDS.items()}[head_id]
        return cls(sizes, params, activation, head)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Mlp":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def export_csv(self, path) -> None:
        """Write the flat parameter vector as index,value rows for inspection."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "value"])
            for i, v in enumerate(self.params):
                writer.writerow([i, repr(float(v))])


# -- optimizer ---------------------------------------------------------------


@dataclass(frozen=True)
class AdamState:
    """Adam moment estimates; ``step`` counts updates already applied."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(n_params: int, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(m=np.zeros(n_params), v=np.zeros(n_params),
                     step=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(state: AdamState, params: np.ndarray,
              grad: np.ndarray) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns new params and state.

    Raises ``NonFiniteGradientError`` naming the first offending index if the
    gradient contains NaN or infinity, and ``DimensionError`` on length
    mismatches. Inputs are never mutated.
    """
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != state.m.shape or grad.shape != state.m.shape:
        raise DimensionError(
            f"optimizer state tracks {state.m.shape[0]} parameters, "
            f"got params {params.shape} and grad {grad.shape}"
        )
    bad = ~np.isfinite(grad)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise NonFiniteGradientError(f"non-finite gradient entry at index {idx}")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_params, replace(state, m=m, v=v, step=t)


def clip_global_norm(grad: np.ndarray, max_norm: float = 5.0) -> np.ndarray:
    """Scale the flat gradient down so its l2 norm is at most ``max_norm``."""
    grad = np.asarray(grad, dtype=np.float64)
    norm = float(np.linalg.norm(grad))
    if norm <= max_norm or norm == 0.0:
        return grad
    return grad * (max_norm / norm)
