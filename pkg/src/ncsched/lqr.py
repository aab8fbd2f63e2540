"""LQR over lossy actuator links.

Subsystem ``i`` receives its input with probability ``q_i`` (independent
Bernoulli), so ``B_Delta = B diag(delta_i I_{m_i})``. The expectations
entering the Riccati recursion are exact under that model:

    E{B_Delta}          = B diag(q_i I)
    E{B_Delta' K B_Delta}_(ij) = c_ij B_i' K_ij B_j,  c_ii = q_i, c_ij = q_i q_j
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .plant import PlantModel, block_diag

log = logging.getLogger(__name__)

RICCATI_TOL = 1e-9
RICCATI_MAX_ITER = 10_000
RICCATI_BLOWUP = 1e12


class NumericalError(ArithmeticError):
    pass


class ControllerUnavailable(RuntimeError):
    """No terminal cost matrix has been computed yet."""


def _per_input(B_blocks: Sequence[np.ndarray], q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (len(B_blocks),):
        raise ValueError(f"closure probabilities have shape {q.shape}, expected ({len(B_blocks)},)")
    return np.repeat(q, [b.shape[1] for b in B_blocks])


def _coupling_weights(B_blocks: Sequence[np.ndarray], q) -> np.ndarray:
    qv = _per_input(B_blocks, q)
    C = np.outer(qv, qv)
    start = 0
    for b, qi in zip(B_blocks, np.asarray(q, dtype=float)):
        mi = b.shape[1]
        C[start:start + mi, start:start + mi] = qi  # delta^2 = delta
        start += mi
    return C


def expected_b(B_blocks: Sequence[np.ndarray], q) -> np.ndarray:
    return block_diag(B_blocks) * _per_input(B_blocks, q)


def expected_bkb(B_blocks: Sequence[np.ndarray], K: np.ndarray, q) -> np.ndarray:
    B = block_diag(B_blocks)
    return (B.T @ K @ B) * _coupling_weights(B_blocks, q)


def expected_quadratic(B_blocks: Sequence[np.ndarray], M: np.ndarray, q) -> np.ndarray:
    """``E{Delta' M Delta}`` for an ``m x m`` matrix ``M``."""
    return M * _coupling_weights(B_blocks, q)


def _sym(K: np.ndarray) -> np.ndarray:
    return (K + K.T) / 2


def riccati_iterate(plant: PlantModel, q, K_next: np.ndarray) -> np.ndarray:
    """One backward step of the lossy Riccati recursion."""
    A, W, R = plant.A, plant.W, plant.R
    EB = expected_b(plant.B_blocks, q)
    inner = R + expected_bkb(plant.B_blocks, K_next, q)
    KA = K_next @ A
    try:
        X = np.linalg.solve(inner, EB.T @ KA)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("R + E{B' K B} is singular") from exc
    return _sym(A.T @ KA + W - KA.T @ EB @ X)


@dataclass
class RiccatiSolution:
    """Outcome of the steady-state iteration.

    ``status`` is ``"converged"``, ``"max_iter"`` (budget exhausted) or
    ``"blowup"`` (iterates exceeded the magnitude cap). ``K`` holds the
    last iterate in every case; only a converged ``K`` is a fixed point.
    """

    K: np.ndarray
    residual: float
    iterations: int
    status: str

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def solve_steady_state(plant: PlantModel, q, tol: float = RICCATI_TOL, max_iter: int = RICCATI_MAX_ITER,
                       blowup: float = RICCATI_BLOWUP) -> RiccatiSolution:
    if tol <= 0:
        raise ValueError("tol must be positive")
    K = np.array(plant.W, dtype=float)
    change = np.inf
    for it in range(1, max_iter + 1):
        K_new = riccati_iterate(plant, q, K)
        if not np.all(np.isfinite(K_new)) or np.abs(K_new).max() > blowup:
            return RiccatiSolution(K_new, float(change), it, "blowup")
        change = float(np.abs(K_new - K).max())
        K = K_new
        if change < tol:
            return RiccatiSolution(K, change, it, "converged")
    return RiccatiSolution(K, change, max_iter, "max_iter")


def finite_horizon(plant: PlantModel, q, horizon: int) -> np.ndarray:
    """``horizon`` backward steps from ``K_T = W``; used when no fixed point exists."""
    K = np.array(plant.W, dtype=float)
    for _ in range(horizon):
        K = riccati_iterate(plant, q, K)
    return K


def terminal_cost(plant: PlantModel, q, fallback_horizon: int = 50, **solver_kw) -> tuple[np.ndarray, RiccatiSolution]:
    """Steady-state ``K`` if the iteration converges, else the finite-horizon fallback."""
    sol = solve_steady_state(plant, q, **solver_kw)
    if sol.converged:
        return sol.K, sol
    log.warning("lossy Riccati iteration did not converge (%s after %d iterations, margin %.4f); "
                "using %d-step finite-horizon solution", sol.status, sol.iterations,
                lemma1_margin(plant, q), fallback_horizon)
    return finite_horizon(plant, q, fallback_horizon), sol


def lemma1_margin(plant_or_A, q, state_dims: Sequence[int] | None = None) -> float:
    """Largest absolute eigenvalue of ``diag(sqrt(1 - q_i) I_{n_i}) A``.

    Below one, the lossy Riccati recursion is guaranteed to converge
    (sufficient, not necessary).
    """
    if isinstance(plant_or_A, PlantModel):
        A, dims = plant_or_A.A, plant_or_A.state_dims
    else:
        A = np.atleast_2d(np.asarray(plant_or_A, dtype=float))
        dims = state_dims if state_dims is not None else [1] * A.shape[0]
    q = np.asarray(q, dtype=float)
    if q.shape != (len(dims),):
        raise ValueError(f"closure probabilities have shape {q.shape}, expected ({len(dims)},)")
    gamma = np.repeat(np.sqrt(1.0 - q), dims)
    return float(np.abs(np.linalg.eigvals(gamma[:, None] * A)).max())


# --- link-success estimation ---------------------------------------------------

@dataclass
class SuccessRateEstimator:
    """Moving-average success rates over the last ``window`` samples.

    ``channel_rates`` (one per channel) feed the schedule-conditioned
    controller; ``closure_rates`` (one per subsystem) feed the terminal
    cost refresh. Empty windows report ``prior``.
    """

    n_channels: int
    n_subsystems: int
    window: int
    prior: float = 0.5
    _chan: list = field(init=False, repr=False)
    _sub: list = field(init=False, repr=False)

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be positive")
        self._chan = [deque(maxlen=self.window) for _ in range(self.n_channels)]
        self._sub = [deque(maxlen=self.window) for _ in range(self.n_subsystems)]

    @staticmethod
    def _rates(windows, prior) -> np.ndarray:
        return np.array([sum(w) / len(w) if w else prior for w in windows], dtype=float)

    @property
    def channel_rates(self) -> np.ndarray:
        return self._rates(self._chan, self.prior)

    @property
    def closure_rates(self) -> np.ndarray:
        return self._rates(self._sub, self.prior)

    def resize(self, window: int) -> "SuccessRateEstimator":
        """Change the window length, keeping the most recent samples."""
        if window < 1:
            raise ValueError("window must be positive")
        self.window = window
        self._chan = [deque(w, maxlen=window) for w in self._chan]
        self._sub = [deque(w, maxlen=window) for w in self._sub]
        return self

    def update(self, action: Sequence[int], acks: Sequence[int], mask: Sequence[int]) -> "SuccessRateEstimator":
        """Record one step: ``acks[j]`` for channel ``j`` (serving ``action[j]``), ``mask[i]`` per subsystem."""
        if len(acks) != len(action) or len(acks) != self.n_channels:
            raise ValueError("one acknowledgment bit per channel is required")
        for j, a in enumerate(acks):
            self._chan[j].append(int(a))
        for i, d in enumerate(mask):
            self._sub[i].append(int(d))
        return self

    def to_matrices(self) -> dict[str, np.ndarray]:
        return {"channel_rates": self.channel_rates, "closure_rates": self.closure_rates,
                "estimator_meta": np.array([self.window, self.prior])}


def closure_probs_for_action(action: Sequence[int], channel_rates, n_subsystems: int) -> np.ndarray:
    """``q_i = 1 - prod_{j: a_j = i} (1 - s_j)``; actions are 1-based subsystem ids."""
    fail = np.ones(n_subsystems)
    for a, s in zip(action, channel_rates):
        if not 1 <= a <= n_subsystems:
            raise ValueError(f"action component {a} outside 1..{n_subsystems}")
        fail[a - 1] *= 1.0 - s
    return 1.0 - fail


def lookahead_gain(plant: PlantModel, K_inf: np.ndarray, q) -> np.ndarray:
    """``L`` with ``u = -L x`` for the one-step look-ahead law at closure probabilities ``q``."""
    EB = expected_b(plant.B_blocks, q)
    inner = plant.R + expected_bkb(plant.B_blocks, K_inf, q)
    return np.linalg.solve(inner, EB.T @ K_inf @ plant.A)


def compute_candidate_controls(plant: PlantModel, K_inf: np.ndarray | None, x, action: Sequence[int],
                               channel_rates) -> np.ndarray:
    """Candidate inputs for every actuator given the schedule ``action``.

    Unscheduled subsystems get ``q_i = 0`` and hence a zero candidate.
    """
    if K_inf is None:
        raise ControllerUnavailable("terminal cost K_inf has not been computed")
    q = closure_probs_for_action(action, channel_rates, plant.N)
    return -lookahead_gain(plant, K_inf, q) @ np.asarray(x, dtype=float)
