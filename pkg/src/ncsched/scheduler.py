"""Iterative channel-by-channel schedule construction.

A joint schedule ``a = (a_1, ..., a_M)`` (``a_j`` in ``1..N``: channel
``j`` serves subsystem ``a_j``) is assembled one component at a time. The
Q-network sees the frozen plant state together with the representation
vector ``h``: one fixed-width binary code per channel, all-zero while the
channel is still unassigned. Component value ``v`` is coded as the binary
numeral ``v`` itself, so the width is ``N.bit_length()`` and the all-zero
code never collides with an assigned value.
"""
from __future__ import annotations

import csv
import itertools
import os
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import dqn
from .plant import PlantModel, stage_cost

ENUMERATION_CAP = 10 ** 6


def code_width(N: int) -> int:
    if N < 1:
        raise ValueError("need at least one subsystem")
    return int(N).bit_length()


def encode_component(value: int, width: int) -> np.ndarray:
    """Big-endian ``width``-bit code of ``value`` (1-based subsystem id)."""
    if not 1 <= value < (1 << width):
        raise ValueError(f"component value {value} not representable in {width} bits")
    return np.array([(value >> (width - 1 - b)) & 1 for b in range(width)], dtype=float)


def decode_component(bits) -> int:
    v = 0
    for b in bits:
        v = (v << 1) | int(round(b))
    return v


@dataclass
class RepresentationVector:
    """Binary codes of the first ``fill`` component actions; the rest stay zero."""

    N: int
    M: int

    def __post_init__(self):
        self.width = code_width(self.N)
        self.bits = np.zeros(self.M * self.width)
        self.fill = 0

    def assign(self, value: int) -> None:
        if self.fill >= self.M:
            raise IndexError("all channels already assigned")
        if not 1 <= value <= self.N:
            raise ValueError(f"component value {value} outside 1..{self.N}")
        w = self.width
        self.bits[self.fill * w:(self.fill + 1) * w] = encode_component(value, w)
        self.fill += 1

    def components(self) -> list[np.ndarray]:
        return [self.bits[j * self.width:(j + 1) * self.width] for j in range(self.M)]

    def decode(self) -> tuple[int, ...]:
        return tuple(decode_component(c) for c in self.components()[:self.fill])


def input_dim(n: int, N: int, M: int) -> int:
    return n + M * code_width(N)


def encode_state(x, h_bits, x_scale: float = 1.0) -> np.ndarray:
    """Network input for intermediate state ``(x, h)``."""
    return np.concatenate([np.asarray(x, dtype=float) / x_scale, h_bits])


@dataclass
class Selection:
    """Result of one iterative selection.

    ``states[j]`` is the encoded intermediate state at which component
    ``action[j]`` was chosen; ``greedy`` is False when the whole step was
    exploratory (or, in per-component mode, a tuple of per-component flags).
    """

    action: tuple[int, ...]
    states: np.ndarray
    greedy: object


def select_action(x_enc: np.ndarray, net: dqn.QNetwork, epsilon: float, rng: np.random.Generator,
                  N: int, M: int, per_component: bool = False) -> Selection:
    """Epsilon-greedy iterative selection.

    ``x_enc`` is the already-scaled plant state. By default the exploration
    coin is flipped once per time-step; ``per_component`` flips it per
    channel instead. Greedy ties go to the lowest subsystem index.
    """
    h = RepresentationVector(N, M)
    states = np.empty((M, x_enc.size + h.bits.size))
    explore_step = rng.random() < epsilon if not per_component else None
    flags = []
    for j in range(M):
        states[j, :x_enc.size] = x_enc
        states[j, x_enc.size:] = h.bits
        explore = rng.random() < epsilon if per_component else explore_step
        if explore:
            value = int(rng.integers(1, N + 1))
        else:
            value = int(np.argmax(dqn.forward(net, states[j]))) + 1
        flags.append(not explore)
        h.assign(value)
    return Selection(h.decode(), states, tuple(flags) if per_component else not explore_step)


def compute_reward(plant: PlantModel, x, u_applied, scale: float | None = None) -> tuple[float, float]:
    """``(reward, raw_cost)`` with ``reward = -g(x, u) / scale`` (default scale ``N``)."""
    g = stage_cost(plant, x, u_applied)
    return -g / (plant.N if scale is None else scale), g


def store_selection_history(buf: dqn.ReplayBuffer, selection: Selection, reward: float,
                            next_state: np.ndarray, mode: str = "literal") -> None:
    """Push the M transitions of one time-step.

    ``next_state`` is the encoded successor ``(x_next, 0)``. In ``literal``
    mode every intermediate gets the step reward and jumps to it; in
    ``chained`` mode intermediate ``j`` leads to intermediate ``j+1`` with
    zero reward and only the last one carries the step reward.
    """
    M = len(selection.action)
    for j, (s, a) in enumerate(zip(selection.states, selection.action)):
        if mode == "literal" or j == M - 1:
            buf.push(s, a - 1, reward, next_state, False)
        elif mode == "chained":
            buf.push(s, a - 1, 0.0, selection.states[j + 1], False)
        else:
            raise ValueError(f"unknown storage mode {mode!r}")


TRACE_FIELDS = ("step", "component", "h_before", "action", "epsilon", "greedy")


def selection_trace_rows(step: int, selection: Selection, n: int, epsilon: float) -> list[tuple]:
    """One row per component: the code prefix seen, the choice, and whether it was greedy.

    ``n`` is the width of the state part of each intermediate encoding.
    """
    flags = selection.greedy if isinstance(selection.greedy, tuple) else (selection.greedy,) * len(selection.action)
    rows = []
    for j, (s, a, g) in enumerate(zip(selection.states, selection.action, flags)):
        h = "".join(str(int(b)) for b in s[n:])
        rows.append((step, j + 1, h, a, epsilon, int(g)))
    return rows


class SelectionTraceWriter:
    """Streams selection rows to a CSV file."""

    def __init__(self, path: str | os.PathLike):
        self._fh = open(path, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(TRACE_FIELDS)

    def write(self, rows) -> None:
        self._w.writerows((*r[:4], repr(float(r[4])), r[5]) for r in rows)

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def enumerate_joint_actions(N: int, M: int, cap: int = ENUMERATION_CAP) -> Iterator[tuple[int, ...]]:
    if N ** M > cap:
        raise ValueError(f"N^M = {N ** M} joint actions exceeds the enumeration cap {cap}")
    return itertools.product(range(1, N + 1), repeat=M)


def count_joint_actions(N: int, M: int) -> int:
    return N ** M
