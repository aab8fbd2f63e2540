"""Reference scheduling policies.

A policy maps ``(x, controller, rng)`` to a 1-based joint action. The
perfect-communication LQR is handled by the evaluator directly since it
bypasses scheduling altogether.
"""
from __future__ import annotations

import itertools

import numpy as np

from .. import lqr
from ..plant import PlantModel, spectral_radius
from ..scheduler import ENUMERATION_CAP, enumerate_joint_actions

BASELINES = ("uniform-random", "stability-weighted", "oracle-greedy", "perfect-comm-lqr")


class UniformRandomPolicy:
    name = "uniform-random"

    def __init__(self, N: int, M: int):
        self.N, self.M = N, M

    def act(self, x, controller, rng: np.random.Generator) -> tuple[int, ...]:
        return tuple(int(v) for v in rng.integers(1, self.N + 1, size=self.M))


def stability_weights(plant: PlantModel, floor: float = 0.1) -> np.ndarray:
    """Channel-assignment probabilities proportional to clipped block spectral radii."""
    radii = np.array([max(spectral_radius(plant.diagonal_block(i)), floor) for i in range(plant.N)])
    return radii / radii.sum()


class StabilityWeightedPolicy:
    """Each channel independently picks subsystem ``i`` with probability proportional to its spectral radius."""

    name = "stability-weighted"

    def __init__(self, plant: PlantModel, M: int, floor: float = 0.1):
        self.M = M
        self.weights = stability_weights(plant, floor)
        self._cum = np.cumsum(self.weights)
        self._cum[-1] = 1.0

    def act(self, x, controller, rng: np.random.Generator) -> tuple[int, ...]:
        picks = np.searchsorted(self._cum, rng.random(self.M), side="right")
        return tuple(int(p) + 1 for p in picks)


def lookahead_objective(plant: PlantModel, x: np.ndarray, K_inf: np.ndarray, q: np.ndarray,
                        u: np.ndarray) -> float:
    """``E{u_a' R u_a + x'' K x''}`` for ``u_a = Delta u`` and ``x'' = A x + B u_a`` (noise omitted)."""
    Ax = plant.A @ x
    ER = lqr.expected_quadratic(plant.B_blocks, plant.R, q)
    EBKB = lqr.expected_bkb(plant.B_blocks, K_inf, q)
    EB = lqr.expected_b(plant.B_blocks, q)
    return float(u @ ER @ u + Ax @ K_inf @ Ax + 2 * Ax @ K_inf @ EB @ u + u @ EBKB @ u)


def lookahead_objective_bruteforce(plant: PlantModel, x: np.ndarray, K_inf: np.ndarray, q: np.ndarray,
                                   u: np.ndarray) -> float:
    """Same expectation, summed over all ``2^N`` dropout patterns."""
    total = 0.0
    for pattern in itertools.product((0, 1), repeat=plant.N):
        prob = np.prod([qi if d else 1 - qi for qi, d in zip(q, pattern)])
        if prob == 0:
            continue
        ua = u * np.repeat(pattern, plant.input_dims)
        xn = plant.A @ x + plant.B @ ua
        total += prob * (ua @ plant.R @ ua + xn @ K_inf @ xn)
    return float(total)


def oracle_greedy(plant: PlantModel, x: np.ndarray, K_inf: np.ndarray, success_probs,
                  cap: int = ENUMERATION_CAP, rtol: float = 1e-12) -> tuple[int, ...]:
    """Exhaustive one-step look-ahead scheduler with known channel success probabilities.

    Ties (within ``rtol``) go to the first action in lexicographic order.
    """
    M = len(success_probs)
    best, best_val = None, np.inf
    for action in enumerate_joint_actions(plant.N, M, cap):
        q = lqr.closure_probs_for_action(action, success_probs, plant.N)
        u = -lqr.lookahead_gain(plant, K_inf, q) @ x
        val = lookahead_objective(plant, x, K_inf, q, u)
        if best is None or val < best_val - rtol * max(1.0, abs(best_val)):
            best, best_val = action, val
    if not np.isfinite(best_val):
        raise lqr.NumericalError("look-ahead objective is not finite for any joint action")
    return best


class OracleGreedyPolicy:
    name = "oracle-greedy"

    def __init__(self, plant: PlantModel, success_probs, cap: int = ENUMERATION_CAP):
        M = len(success_probs)
        if plant.N ** M > cap:
            raise ValueError(f"oracle-greedy needs N^M <= {cap}, got {plant.N ** M}")
        self.plant = plant
        self.success_probs = np.asarray(success_probs, dtype=float)
        self.actions = list(enumerate_joint_actions(plant.N, M, cap))
        self._K = None

    def _prepare(self, K_inf: np.ndarray) -> None:
        # with u = -L x the objective is x'A'KAx + x'Q_a x; only Q_a depends on the action
        p = self.plant
        quads = []
        for action in self.actions:
            q = lqr.closure_probs_for_action(action, self.success_probs, p.N)
            L = lqr.lookahead_gain(p, K_inf, q)
            ER = lqr.expected_quadratic(p.B_blocks, p.R, q)
            EBKB = lqr.expected_bkb(p.B_blocks, K_inf, q)
            EB = lqr.expected_b(p.B_blocks, q)
            quads.append(L.T @ (ER + EBKB) @ L - 2 * p.A.T @ K_inf @ EB @ L)
        self._Q = np.stack(quads)
        self._K = K_inf

    def act(self, x, controller, rng=None) -> tuple[int, ...]:
        if self._K is not controller.K_inf:
            self._prepare(controller.K_inf)
        vals = np.einsum("i,aij,j->a", x, self._Q, x)
        best = vals.min()
        idx = int(np.flatnonzero(vals <= best + 1e-12 * max(1.0, abs(best)))[0])
        return self.actions[idx]


def make_baseline(name: str, plant: PlantModel, channel_success, M: int):
    if name == "uniform-random":
        return UniformRandomPolicy(plant.N, M)
    if name == "stability-weighted":
        return StabilityWeightedPolicy(plant, M)
    if name == "oracle-greedy":
        return OracleGreedyPolicy(plant, channel_success)
    raise ValueError(f"unknown baseline {name!r}; choose from {', '.join(BASELINES)}")
