"""Finite-state Markov fading channels with state-dependent dropout."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class ChannelError(ValueError):
    pass


class NotErgodicError(ChannelError):
    """The transition matrix has no unique stationary distribution."""


def _irreducible(T: np.ndarray) -> bool:
    K = T.shape[0]
    reach = (T > 0).astype(np.int64) + np.eye(K, dtype=np.int64)
    for _ in range(max(1, int(np.ceil(np.log2(max(K, 2)))))):
        reach = np.minimum(reach @ reach, 1)
    return bool(reach.all())


def _aperiodic(T: np.ndarray) -> bool:
    # an irreducible chain is aperiodic iff some power is strictly positive;
    # Wielandt's bound (K-1)^2 + 1 suffices
    K = T.shape[0]
    P = (T > 0).astype(float)
    Q = np.eye(K)
    for _ in range((K - 1) ** 2 + 1):
        Q = np.minimum(Q @ P, 1.0)
    return bool((Q > 0).all())


def stationary_distribution(T) -> np.ndarray:
    """Unique ``p`` with ``p T = p`` and ``sum(p) = 1`` for an ergodic chain."""
    T = np.asarray(T, dtype=float)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ChannelError("transition matrix must be square")
    if np.any(T < 0) or not np.allclose(T.sum(axis=1), 1.0, atol=1e-12):
        raise ChannelError("transition matrix must be row-stochastic")
    if not _irreducible(T):
        raise NotErgodicError("chain is reducible: no unique stationary distribution")
    if not _aperiodic(T):
        raise NotErgodicError("chain is periodic: no unique limiting distribution")
    K = T.shape[0]
    # replace one balance equation by the normalisation constraint
    M = (T.T - np.eye(K))
    M[-1, :] = 1.0
    rhs = np.zeros(K)
    rhs[-1] = 1.0
    p = np.linalg.solve(M, rhs)
    p = np.clip(p, 0.0, None)
    return p / p.sum()


@dataclass(frozen=True, eq=False)
class MarkovChannel:
    """Fading channel ``(T, p, e)``: transitions, stationary law, dropout per state."""

    T: np.ndarray
    e: np.ndarray
    label: str = "custom"
    p: np.ndarray = field(default=None)

    def __post_init__(self):
        T = np.array(self.T, dtype=float, ndmin=2)
        e = np.array(self.e, dtype=float, ndmin=1)
        if T.shape != (e.size, e.size):
            raise ChannelError(f"T has shape {T.shape} but e has {e.size} states")
        if np.any((e < 0) | (e > 1)):
            raise ChannelError("dropout probabilities must lie in [0, 1]")
        p = stationary_distribution(T) if self.p is None else np.array(self.p, dtype=float)
        if p.shape != e.shape or np.any(p < 0) or abs(p.sum() - 1) > 1e-10 or np.abs(p @ T - p).max() > 1e-10:
            raise ChannelError("p is not a stationary distribution of T")
        for name, val in (("T", T), ("e", e), ("p", p)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "_cum", np.cumsum(T, axis=1))

    @property
    def n_states(self) -> int:
        return self.e.size


def step_channel(ch: MarkovChannel, d: int, rng: np.random.Generator) -> int:
    row = ch._cum[d]
    return int(min(np.searchsorted(row, rng.random(), side="right"), ch.n_states - 1))


def sample_transmission(ch: MarkovChannel, d: int, rng: np.random.Generator) -> int:
    """1 if the packet gets through in state ``d``, 0 on a dropout."""
    return int(rng.random() >= ch.e[d])


def average_success(ch: MarkovChannel) -> float:
    return float(ch.p @ (1.0 - ch.e))


def gilbert_elliot(avg_success: float, burstiness: float = 4.0, *, good_dropout: float = 0.001,
                   good_sojourn: float = 20.0, bad_dropout: float | None = None,
                   label: str | None = None) -> MarkovChannel:
    """Two-state good/bad channel with a prescribed average success rate.

    ``burstiness`` is the mean sojourn (in steps) of the bad state; the
    good state's mean sojourn is ``good_sojourn``. The bad-state dropout
    probability is then solved from the target average. If
    ``bad_dropout`` is given instead, the bad-state sojourn is solved and
    ``burstiness`` is ignored.
    """
    if not 0 < avg_success <= 1:
        raise ChannelError(f"average success must lie in (0, 1], got {avg_success}")
    if good_sojourn < 1:
        raise ChannelError("good_sojourn must be at least one step")
    loss = 1.0 - avg_success
    g = 1.0 / good_sojourn  # good -> bad
    if bad_dropout is None:
        if burstiness < 1:
            raise ChannelError("burstiness (mean bad sojourn) must be at least one step")
        b = 1.0 / burstiness  # bad -> good
        p_bad = g / (g + b)
        bad_dropout = (loss - good_dropout * (1 - p_bad)) / p_bad
        if not 0 <= bad_dropout <= 1:
            raise ChannelError(
                f"average success {avg_success} unreachable with good dropout {good_dropout}, "
                f"good sojourn {good_sojourn} and bad sojourn {burstiness} (needs bad dropout {bad_dropout:.4g})")
    else:
        if bad_dropout == good_dropout:
            raise ChannelError("bad and good dropout coincide; bad-state occupancy undetermined")
        p_bad = (loss - good_dropout) / (bad_dropout - good_dropout)
        if not 0 < p_bad < 1:
            raise ChannelError(
                f"average success {avg_success} unreachable with dropouts ({good_dropout}, {bad_dropout})")
        b = g * (1 - p_bad) / p_bad
        if b > 1:
            raise ChannelError(
                f"average success {avg_success} needs a bad-state exit probability {b:.4g} > 1")
    T = np.array([[1 - g, g], [b, 1 - b]])
    p = np.array([b / (g + b), g / (g + b)])
    return MarkovChannel(T=T, e=np.array([good_dropout, bad_dropout]), p=p,
                         label=label or f"gilbert-elliot({avg_success})")


class ChannelNetwork:
    """M independent channels, each advancing on its own random stream."""

    def __init__(self, channels: Sequence[MarkovChannel], seed: int | np.random.SeedSequence):
        self.channels = list(channels)
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self.rngs = [np.random.default_rng(s) for s in ss.spawn(len(self.channels))]
        # stationary start
        self.state = np.array([int(r.choice(ch.n_states, p=ch.p)) for ch, r in zip(self.channels, self.rngs)])

    @property
    def M(self) -> int:
        return len(self.channels)

    def transmit(self) -> np.ndarray:
        """Success bits for one use of every channel in its current state."""
        return np.array([sample_transmission(ch, d, r)
                         for ch, d, r in zip(self.channels, self.state, self.rngs)], dtype=np.int8)

    def advance(self) -> None:
        self.state = np.array([step_channel(ch, d, r)
                               for ch, d, r in zip(self.channels, self.state, self.rngs)])

    def average_success(self) -> np.ndarray:
        return np.array([average_success(ch) for ch in self.channels])


def simulate_trace(network: ChannelNetwork, steps: int) -> list[tuple[int, int, int, int]]:
    """Rows ``(step, channel, state, delta)``."""
    rows = []
    for k in range(steps):
        acks = network.transmit()
        for j, (d, a) in enumerate(zip(network.state, acks)):
            rows.append((k, j, int(d), int(a)))
        network.advance()
    return rows


def write_trace_csv(path: str | os.PathLike, rows: Iterable[tuple[int, int, int, int]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "channel", "state", "delta"])
        w.writerows(rows)
