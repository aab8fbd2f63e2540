"""Deep Q-learning engine in plain numpy.

One hidden rectifier layer, Adam, uniform experience replay and a soft
target network. Everything runs in float64.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import matrix_io

PARAM_NAMES = ("W1", "b1", "W2", "b2")


class TrainingFault(FloatingPointError):
    """Loss or gradient became non-finite."""


class ReplayNotReady(RuntimeError):
    """Buffer holds fewer transitions than the warm-up threshold."""


class QNetwork:
    """``Q(s) = W2 relu(W1 s + b1) + b2`` with one output per component action."""

    def __init__(self, input_dim: int, hidden: int, n_actions: int, rng: np.random.Generator | None = None,
                 output_scale: float = 1e-3):
        self.input_dim, self.hidden, self.n_actions = input_dim, hidden, n_actions
        if rng is None:
            self.params = {"W1": np.zeros((hidden, input_dim)), "b1": np.zeros(hidden),
                           "W2": np.zeros((n_actions, hidden)), "b2": np.zeros(n_actions)}
            return
        lim = np.sqrt(6.0 / input_dim)  # He-uniform for rectifiers
        self.params = {
            "W1": rng.uniform(-lim, lim, size=(hidden, input_dim)),
            "b1": np.zeros(hidden),
            "W2": rng.uniform(-output_scale, output_scale, size=(n_actions, hidden)),
            "b2": np.zeros(n_actions),
        }

    def copy(self) -> "QNetwork":
        new = QNetwork.__new__(QNetwork)
        new.input_dim, new.hidden, new.n_actions = self.input_dim, self.hidden, self.n_actions
        new.params = {k: v.copy() for k, v in self.params.items()}
        return new

    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())

    def to_matrices(self) -> dict[str, np.ndarray]:
        return {k: self.params[k] for k in PARAM_NAMES}

    @classmethod
    def from_matrices(cls, mats: dict[str, np.ndarray]) -> "QNetwork":
        W1, W2 = mats["W1"], mats["W2"]
        net = cls(W1.shape[1], W1.shape[0], W2.shape[0])
        net.params = {"W1": W1.copy(), "b1": mats["b1"].ravel().copy(),
                      "W2": W2.copy(), "b2": mats["b2"].ravel().copy()}
        return net

    def save(self, path) -> None:
        matrix_io.save_matrices(path, self.to_matrices(), header="q-network")

    @classmethod
    def load(cls, path) -> "QNetwork":
        return cls.from_matrices(matrix_io.load_matrices(path))


def _as_batch(net: QNetwork, s) -> tuple[np.ndarray, bool]:
    s = np.asarray(s, dtype=float)
    single = s.ndim == 1
    s2 = s[None, :] if single else s
    if s2.ndim != 2 or s2.shape[1] != net.input_dim:
        raise ValueError(f"input width {s2.shape[-1]} does not match network input {net.input_dim}")
    return s2, single


def forward(net: QNetwork, s) -> np.ndarray:
    """Q-values for one encoded state (1-d) or a batch (rows)."""
    X, single = _as_batch(net, s)
    p = net.params
    H = np.maximum(X @ p["W1"].T + p["b1"], 0.0)
    Q = H @ p["W2"].T + p["b2"]
    return Q[0] if single else Q


def loss_and_gradients(net: QNetwork, states, actions, targets) -> tuple[float, dict[str, np.ndarray]]:
    """Mean squared Bellman error over the taken actions and its gradient.

    ``actions`` are 0-based output indices; targets are held constant.
    """
    X, _ = _as_batch(net, states)
    actions = np.asarray(actions, dtype=np.int64)
    targets = np.asarray(targets, dtype=float)
    p = net.params
    Z = X @ p["W1"].T + p["b1"]
    H = np.maximum(Z, 0.0)
    Q = H @ p["W2"].T + p["b2"]
    rows = np.arange(X.shape[0])
    err = Q[rows, actions] - targets
    loss = float(np.mean(err ** 2))
    dQ = np.zeros_like(Q)
    dQ[rows, actions] = 2.0 * err / X.shape[0]
    dZ = (dQ @ p["W2"]) * (Z > 0)
    grads = {"W2": dQ.T @ H, "b2": dQ.sum(axis=0), "W1": dZ.T @ X, "b1": dZ.sum(axis=0)}
    return loss, grads


@dataclass
class AdamState:
    lr: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def apply(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            m = self.m.get(k)
            if m is None:
                m = self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train_step(net: QNetwork, adam: AdamState, states, actions, targets, clip_norm: float | None = None) -> float:
    """One Adam step on the squared Bellman loss; returns the pre-update loss."""
    if len(targets) == 0:
        raise ValueError("empty batch")
    loss, grads = loss_and_gradients(net, states, actions, targets)
    if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
        raise TrainingFault(f"non-finite loss or gradient (loss={loss})")
    if clip_norm is not None:
        norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        if norm > clip_norm:
            grads = {k: g * (clip_norm / norm) for k, g in grads.items()}
    adam.apply(net.params, grads)
    return loss


def bellman_targets(rewards, next_states, terminals, target_net: QNetwork, gamma: float) -> np.ndarray:
    rewards = np.asarray(rewards, dtype=float)
    if gamma == 0:
        return rewards.copy()
    boot = forward(target_net, next_states).max(axis=1)
    return rewards + gamma * np.where(np.asarray(terminals, dtype=bool), 0.0, boot)


def soft_update(target: QNetwork, net: QNetwork, tau: float) -> QNetwork:
    """In place: ``target <- (1 - tau) target + tau net``."""
    if not 0 < tau <= 1:
        raise ValueError("tau must lie in (0, 1]")
    for k, v in net.params.items():
        t = target.params[k]
        t *= 1.0 - tau
        t += tau * v
    return target


class Batch(NamedTuple):
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray


class ReplayBuffer:
    """Fixed-capacity FIFO transition memory with uniform sampling (with replacement)."""

    def __init__(self, capacity: int, state_dim: int, warmup: int = 1):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity, self.state_dim, self.warmup = capacity, state_dim, warmup
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, state_dim))
        self.term = np.zeros(capacity, dtype=bool)
        self._next = 0
        self._size = 0
        self.total_pushed = 0

    def __len__(self) -> int:
        return self._size

    @property
    def ready(self) -> bool:
        return self._size >= max(1, self.warmup)

    def push(self, s, a: int, r: float, s2, terminal: bool = False) -> None:
        i = self._next
        self.s[i], self.a[i], self.r[i], self.s2[i], self.term[i] = s, a, r, s2, terminal
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        self.total_pushed += 1

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if not self.ready:
            raise ReplayNotReady(f"{self._size} transitions stored, warm-up needs {self.warmup}")
        idx = rng.integers(0, self._size, size=batch_size)
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.term[idx])

    def ordered(self) -> Batch:
        """All stored transitions, oldest first."""
        if self._size < self.capacity:
            idx = np.arange(self._size)
        else:
            idx = (np.arange(self.capacity) + self._next) % self.capacity
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.term[idx])


@dataclass
class EpsilonSchedule:
    epsilon: float = 1.0
    floor: float = 0.001
    rate: float = 0.99995

    def __post_init__(self):
        if not 0 <= self.floor <= self.epsilon <= 1:
            raise ValueError("need 0 <= floor <= epsilon <= 1")

    def step(self) -> "EpsilonSchedule":
        self.epsilon = max(self.floor, self.rate * self.epsilon)
        return self
