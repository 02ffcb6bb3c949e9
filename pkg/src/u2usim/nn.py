"""Feedforward networks with hand-written backprop, Adam, replay memory and
per-head softmax utilities.

Inputs are row-major batches: ``x`` has shape (batch, n_in).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

CHECKPOINT_FORMAT = "u2usim-mlp"
CHECKPOINT_VERSION = 1


class ShapeError(ValueError):
    pass


class TrainingDivergence(RuntimeError):
    pass


class Mlp:
    """Affine layers with ReLU on hidden layers and identity output."""

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator | None = None, bias: bool = True):
        if len(sizes) < 2:
            raise ShapeError("an MLP needs at least input and output sizes")
        self.sizes = [int(s) for s in sizes]
        self.bias = bias
        rng = rng if rng is not None else np.random.default_rng(0)
        self.W: list[np.ndarray] = []
        self.b: list[np.ndarray] = []
        for n_in, n_out in zip(self.sizes[:-1], self.sizes[1:]):
            # He-style uniform init
            lim = math.sqrt(6.0 / n_in)
            self.W.append(rng.uniform(-lim, lim, size=(n_in, n_out)))
            self.b.append(np.zeros(n_out))
        self._cache = None

    @property
    def params(self) -> list[np.ndarray]:
        return self.W + self.b if self.bias else list(self.W)

    def copy(self) -> "Mlp":
        net = Mlp.__new__(Mlp)
        net.sizes = list(self.sizes)
        net.bias = self.bias
        net.W = [w.copy() for w in self.W]
        net.b = [b.copy() for b in self.b]
        net._cache = None
        return net

    def load_from(self, other: "Mlp") -> None:
        for dst, src in zip(self.W + self.b, other.W + other.b):
            dst[...] = src

    def forward(self, x: np.ndarray, cache: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.sizes[0]:
            raise ShapeError(f"input has {x.shape[1]} features, network expects {self.sizes[0]}")
        acts = [x]
        pre = []
        a = x
        last = len(self.W) - 1
        for i, (W, b) in enumerate(zip(self.W, self.b)):
            z = a @ W + b if self.bias else a @ W
            pre.append(z)
            a = np.maximum(z, 0.0) if i < last else z
            acts.append(a)
        if cache:
            self._cache = (acts, pre, single)
        return a[0] if single else a

    __call__ = forward

    def backward(self, upstream: np.ndarray) -> list[np.ndarray]:
        """Gradients of sum(upstream * output) for every parameter (same order as :attr:`params`)."""
        if self._cache is None:
            raise ShapeError("backward() needs a cached forward pass")
        acts, pre, single = self._cache
        g = np.asarray(upstream, dtype=float)
        if single:
            g = g[None, :]
        if g.shape != acts[-1].shape:
            raise ShapeError(f"upstream gradient shape {g.shape} != output shape {acts[-1].shape}")
        gW = [None] * len(self.W)
        gb = [None] * len(self.W)
        for i in range(len(self.W) - 1, -1, -1):
            if i < len(self.W) - 1:
                g = g * (pre[i] > 0)
            gW[i] = acts[i].T @ g
            gb[i] = g.sum(axis=0)
            if i:
                g = g @ self.W[i].T
        return gW + gb if self.bias else gW

    def input_grad(self, upstream: np.ndarray) -> np.ndarray:
        acts, pre, single = self._cache
        g = np.asarray(upstream, dtype=float)
        g = g[None, :] if single else g
        for i in range(len(self.W) - 1, -1, -1):
            if i < len(self.W) - 1:
                g = g * (pre[i] > 0)
            g = g @ self.W[i].T
        return g[0] if single else g

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params)

    def to_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "sizes": self.sizes,
            "bias": self.bias,
            # row-major (n_in, n_out) weights followed by biases
            "weights": [w.ravel().tolist() for w in self.W],
            "biases": [b.tolist() for b in self.b],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        if d.get("format") != CHECKPOINT_FORMAT or d.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"not a {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION} checkpoint")
        net = cls(d["sizes"], bias=d["bias"])
        for i, (n_in, n_out) in enumerate(zip(net.sizes[:-1], net.sizes[1:])):
            net.W[i] = np.array(d["weights"][i], dtype=float).reshape(n_in, n_out)
            net.b[i] = np.array(d["biases"][i], dtype=float)
        return net

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "Mlp":
        return cls.from_dict(json.loads(Path(path).read_text()))


def clip_by_global_norm(grads: list[np.ndarray], max_norm: float | None) -> list[np.ndarray]:
    if not max_norm:
        return grads
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if norm > max_norm:
        scale = max_norm / norm
        return [g * scale for g in grads]
    return grads


def check_finite(grads: list[np.ndarray], what: str = "gradient") -> None:
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingDivergence(f"non-finite {what} encountered")


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_net(cls, net: Mlp, lr: float, **kw) -> "AdamState":
        return cls(lr, m=[np.zeros_like(p) for p in net.params], v=[np.zeros_like(p) for p in net.params], **kw)


def adam_step(net: Mlp, state: AdamState, grads: list[np.ndarray]) -> Mlp:
    """Bias-corrected Adam descent step, applied in place."""
    check_finite(grads)
    params = net.params
    if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
        raise ShapeError("gradient shapes do not match the parameters")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    if not net.is_finite():
        raise TrainingDivergence("parameters became non-finite after an Adam step")
    return net


def sgd_step(net: Mlp, grads: list[np.ndarray], lr: float) -> Mlp:
    """Plain descent step ``p -= lr * g`` in place (pass negated grads to ascend)."""
    check_finite(grads)
    for p, g in zip(net.params, grads):
        p -= lr * g
    if not net.is_finite():
        raise TrainingDivergence("parameters became non-finite after an SGD step")
    return net


def head_softmax(logits: np.ndarray, slices: Sequence[slice]) -> np.ndarray:
    """Independent softmax over each head's slice of the last axis."""
    out = np.empty_like(logits, dtype=float)
    for sl in slices:
        z = logits[..., sl]
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        out[..., sl] = e / e.sum(axis=-1, keepdims=True)
    return out


def log_softmax_grad(probs: np.ndarray, slices: Sequence[slice], choices: Sequence[int],
                     heads: Sequence[int]) -> np.ndarray:
    """d/dlogits of sum over ``heads`` of log pi(choice | head) for a single sample."""
    g = np.zeros_like(probs)
    for h in heads:
        sl = slices[h]
        g[sl] = -probs[sl]
        g[sl.start + int(choices[h])] += 1.0
    return g


class ReplayBuffer:
    """FIFO ring buffer of (state, sub-action tuple, reward, next state, done)."""

    def __init__(self, capacity: int, state_dim: int, n_heads: int):
        self.capacity = int(capacity)
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.full((capacity, n_heads), -1, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.dones = np.zeros(capacity, dtype=bool)
        self.size = 0
        self._next = 0

    def __len__(self):
        return self.size

    def push(self, state, actions, reward, next_state, done=False) -> None:
        i = self._next
        self.states[i] = state
        self.actions[i] = actions
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.dones[i] = done
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray | None:
        """``n`` distinct uniform indices, or None when the buffer holds fewer than ``n``."""
        if n > self.size or n <= 0:
            return None
        return rng.choice(self.size, size=n, replace=False)

    def sample_minibatch(self, n: int, rng: np.random.Generator):
        idx = self.sample_indices(n, rng)
        if idx is None:
            return None
        return (self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx], self.dones[idx])
