"""Coupled linear plant with block-diagonal actuation.

    x[k+1] = A x[k] + B u[k] + w[k],   B = blkdiag(B^1, ..., B^N)
    g(x, u) = x' W x + u' R u

Also holds the random benchmark generator (second-order subsystems, weak
random-graph coupling, half stable / half unstable) and its cost
normalisation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from . import matrix_io


class ConfigurationError(ValueError):
    """Inconsistent dimensions or invalid model data."""


class GenerationError(RuntimeError):
    """Random plant generation exhausted its retries."""


def _is_symmetric(M: np.ndarray, tol: float = 1e-9) -> bool:
    return np.allclose(M, M.T, atol=tol * max(1.0, np.abs(M).max(initial=0.0)))


def _min_eig(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh((M + M.T) / 2).min()) if M.size else 0.0


def block_diag(blocks: Sequence[np.ndarray]) -> np.ndarray:
    return scipy.linalg.block_diag(*blocks) if len(blocks) else np.zeros((0, 0))


def _offsets(sizes: Sequence[int]) -> list[slice]:
    out, start = [], 0
    for s in sizes:
        out.append(slice(start, start + s))
        start += s
    return out


@dataclass(frozen=True, eq=False)
class PlantModel:
    """Networked plant: coupled state dynamics, independent actuators.

    ``B_blocks[i]`` has shape ``(n_i, m_i)``; ``noise_cov[i]`` is the
    ``n_i x n_i`` covariance of subsystem ``i``'s process noise.
    """

    A: np.ndarray
    B_blocks: tuple[np.ndarray, ...]
    W: np.ndarray
    R: np.ndarray
    noise_cov: tuple[np.ndarray, ...]
    B: np.ndarray = field(init=False, repr=False)
    _noise_factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = np.array(self.A, dtype=float, ndmin=2)
        blocks = tuple(np.array(b, dtype=float, ndmin=2) for b in self.B_blocks)
        W = np.array(self.W, dtype=float, ndmin=2)
        R = np.array(self.R, dtype=float, ndmin=2)
        covs = tuple(np.array(c, dtype=float, ndmin=2) for c in self.noise_cov)
        if not blocks:
            raise ConfigurationError("plant needs at least one subsystem")
        if len(covs) != len(blocks):
            raise ConfigurationError(f"{len(blocks)} actuator blocks but {len(covs)} noise covariances")
        n = sum(b.shape[0] for b in blocks)
        m = sum(b.shape[1] for b in blocks)
        if A.shape != (n, n):
            raise ConfigurationError(f"A has shape {A.shape}, expected {(n, n)} from the B blocks")
        if W.shape != (n, n):
            raise ConfigurationError(f"W has shape {W.shape}, expected {(n, n)}")
        if R.shape != (m, m):
            raise ConfigurationError(f"R has shape {R.shape}, expected {(m, m)}")
        for i, (b, c) in enumerate(zip(blocks, covs)):
            if c.shape != (b.shape[0], b.shape[0]):
                raise ConfigurationError(f"noise covariance {i} has shape {c.shape}, expected {(b.shape[0],) * 2}")
            if not _is_symmetric(c) or _min_eig(c) < -1e-10:
                raise ConfigurationError(f"noise covariance {i} is not symmetric positive semi-definite")
        if not _is_symmetric(W) or _min_eig(W) < -1e-10 * max(1.0, np.abs(W).max()):
            raise ConfigurationError("W must be symmetric positive semi-definite")
        if not _is_symmetric(R) or _min_eig(R) <= 0:
            raise ConfigurationError("R must be symmetric positive definite")
        for name, val in (("A", A), ("B_blocks", blocks), ("W", W), ("R", R), ("noise_cov", covs)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "B", block_diag(blocks))
        object.__setattr__(self, "_noise_factor", block_diag([psd_sqrt(c) for c in covs]))
        for arr in (A, W, R, self.B, *blocks, *covs):
            arr.setflags(write=False)

    @property
    def N(self) -> int:
        return len(self.B_blocks)

    @property
    def state_dims(self) -> tuple[int, ...]:
        return tuple(b.shape[0] for b in self.B_blocks)

    @property
    def input_dims(self) -> tuple[int, ...]:
        return tuple(b.shape[1] for b in self.B_blocks)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.R.shape[0]

    @property
    def state_slices(self) -> list[slice]:
        return _offsets(self.state_dims)

    @property
    def input_slices(self) -> list[slice]:
        return _offsets(self.input_dims)

    @property
    def noise_covariance(self) -> np.ndarray:
        return block_diag(self.noise_cov)

    def diagonal_block(self, i: int) -> np.ndarray:
        s = self.state_slices[i]
        return self.A[s, s]

    def sample_noise(self, rng: np.random.Generator) -> np.ndarray:
        return self._noise_factor @ rng.standard_normal(self.n)

    def to_matrices(self) -> dict[str, np.ndarray]:
        out = {"A": self.A, "W": self.W, "R": self.R}
        for i, (b, c) in enumerate(zip(self.B_blocks, self.noise_cov)):
            out[f"B{i}"] = b
            out[f"noise_cov{i}"] = c
        return out

    @classmethod
    def from_matrices(cls, mats: dict[str, np.ndarray]) -> "PlantModel":
        try:
            N = sum(1 for k in mats if k.startswith("B") and k[1:].isdigit())
            return cls(A=mats["A"], B_blocks=tuple(mats[f"B{i}"] for i in range(N)),
                       W=mats["W"], R=mats["R"],
                       noise_cov=tuple(mats[f"noise_cov{i}"] for i in range(N)))
        except KeyError as exc:
            raise ConfigurationError(f"plant file is missing matrix {exc.args[0]!r}") from exc

    def save(self, path) -> None:
        matrix_io.save_matrices(path, self.to_matrices(), header=f"plant N={self.N} n={self.n} m={self.m}")

    @classmethod
    def load(cls, path) -> "PlantModel":
        return cls.from_matrices(matrix_io.load_matrices(path))


def _check_vec(v, size: int, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (size,):
        raise ConfigurationError(f"{what} has shape {v.shape}, expected ({size},)")
    return v


def step(plant: PlantModel, x, u, w) -> np.ndarray:
    """One step of the plant dynamics."""
    x = _check_vec(x, plant.n, "state")
    u = _check_vec(u, plant.m, "input")
    w = _check_vec(w, plant.n, "noise")
    return plant.A @ x + plant.B @ u + w


def stage_cost(plant: PlantModel, x, u) -> float:
    x = _check_vec(x, plant.n, "state")
    u = _check_vec(u, plant.m, "input")
    return float(x @ plant.W @ x + u @ plant.R @ u)


def apply_dropouts(plant: PlantModel, candidate, mask) -> np.ndarray:
    """Zero-input rule: keep slice ``i`` of the candidate only where ``mask[i]`` is 1."""
    candidate = _check_vec(candidate, plant.m, "candidate input")
    mask = np.asarray(mask)
    if mask.shape != (plant.N,):
        raise ConfigurationError(f"success mask has shape {mask.shape}, expected ({plant.N},)")
    per_input = np.repeat(mask.astype(bool), plant.input_dims)
    return np.where(per_input, candidate, 0.0)


def _rank_tol(M: np.ndarray, sv: np.ndarray) -> float:
    return (sv.max(initial=0.0)) * max(M.shape) * np.finfo(float).eps * 100


def numerical_rank(M: np.ndarray) -> int:
    sv = np.linalg.svd(M, compute_uv=False)
    return int((sv > _rank_tol(M, sv)).sum())


def controllability_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    cols, AkB = [], B
    for _ in range(A.shape[0]):
        cols.append(AkB)
        AkB = A @ AkB
    return np.hstack(cols)


def check_controllability(A, B) -> bool:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    return numerical_rank(controllability_matrix(A, B)) == A.shape[0]


def psd_sqrt(W: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((W + W.T) / 2)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def check_observability(A, W) -> bool:
    """Kalman rank test for the pair ``[A, W^{1/2}]``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = psd_sqrt(np.atleast_2d(np.asarray(W, dtype=float)))
    return check_controllability(A.T, C.T)


def spectral_radius(M: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvals(M)).max())


# --- perfect-communication LQR ------------------------------------------------

def lqr_gain(plant: PlantModel) -> tuple[np.ndarray, np.ndarray]:
    """Classical DARE solution ``K`` and gain ``L`` (``u = -L x``) with every link closed."""
    K = scipy.linalg.solve_discrete_are(plant.A, plant.B, plant.W, plant.R)
    L = np.linalg.solve(plant.R + plant.B.T @ K @ plant.B, plant.B.T @ K @ plant.A)
    return K, L


def lqr_subsystem_costs(plant: PlantModel) -> np.ndarray:
    """Steady-state per-subsystem share of the average LQR stage cost.

    The shares add up to ``trace(K Sigma_w)``.
    """
    K, L = lqr_gain(plant)
    Acl = plant.A - plant.B @ L
    P = scipy.linalg.solve_discrete_lyapunov(Acl, plant.noise_covariance)
    state_terms = np.diag(plant.W @ P)
    input_terms = np.diag(plant.R @ L @ P @ L.T)
    return np.array([state_terms[s].sum() + input_terms[t].sum()
                     for s, t in zip(plant.state_slices, plant.input_slices)])


# --- random benchmark systems --------------------------------------------------

@dataclass
class GenerationConfig:
    """Parameters of the random benchmark plant family."""

    n_subsystems: int = 8
    coupling_strength: float = 0.05
    edge_probability: float = 0.25
    stable_radius: tuple[float, float] = (0.4, 0.95)
    unstable_radius: tuple[float, float] = (1.0, 1.5)
    # modulus of the stable second eigenvalue of an unstable block
    unstable_second_eig: tuple[float, float] = (0.4, 0.95)
    input_gain: tuple[float, float] = (0.5, 1.5)
    noise_std: float = 0.1
    normalize_cost: bool = True
    target_cost: float = 1.0
    normalize_tol: float = 0.02
    max_retries: int = 100
    seed: int = 0

    @property
    def n_stable(self) -> int:
        return math.ceil(self.n_subsystems / 2)


def _stable_block(rng: np.random.Generator, lo: float, hi: float) -> np.ndarray:
    r = rng.uniform(lo, hi)
    th = rng.uniform(0.0, np.pi)
    return r * np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])


def _unstable_block(rng: np.random.Generator, radius: tuple[float, float],
                    second: tuple[float, float]) -> np.ndarray:
    lam1 = rng.uniform(*radius)
    while lam1 <= radius[0]:
        lam1 = rng.uniform(*radius)
    lam2 = rng.uniform(*second) * rng.choice((-1.0, 1.0))
    # well-conditioned eigenbasis keeps transient growth moderate
    while True:
        V = rng.normal(size=(2, 2))
        if np.linalg.cond(V) < 10:
            break
    return V @ np.diag([lam1, lam2]) @ np.linalg.inv(V)


def _normalise_costs(plant: PlantModel, cfg: GenerationConfig) -> PlantModel | None:
    W_blocks = [plant.W[s, s].copy() for s in plant.state_slices]
    R_blocks = [plant.R[t, t].copy() for t in plant.input_slices]
    for _ in range(100):
        try:
            costs = lqr_subsystem_costs(plant)
        except (np.linalg.LinAlgError, ValueError):
            return None
        rel = costs / cfg.target_cost
        if np.all(np.abs(rel - 1.0) <= cfg.normalize_tol):
            return plant
        # scaling (W_i, R_i) together leaves subsystem i's own gain unchanged
        W_blocks = [Wb / c for Wb, c in zip(W_blocks, rel)]
        R_blocks = [Rb / c for Rb, c in zip(R_blocks, rel)]
        plant = PlantModel(plant.A, plant.B_blocks, block_diag(W_blocks), block_diag(R_blocks), plant.noise_cov)
    return None


def generate_random_ncs(cfg: GenerationConfig, rng: np.random.Generator | None = None) -> PlantModel:
    """Draw a random weakly coupled plant of second-order subsystems.

    The first ``ceil(N/2)`` blocks are stable (spectral radius inside
    ``cfg.stable_radius``), the rest have one real eigenvalue in
    ``cfg.unstable_radius``. Draws that fail the controllability,
    observability or cost-normalisation checks are rejected and redrawn.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    N = cfg.n_subsystems
    if N < 1:
        raise ConfigurationError("n_subsystems must be positive")
    if cfg.coupling_strength < 0:
        raise ConfigurationError("coupling_strength must be nonnegative")
    for _ in range(cfg.max_retries):
        blocks = [_stable_block(rng, *cfg.stable_radius) if i < cfg.n_stable
                  else _unstable_block(rng, cfg.unstable_radius, cfg.unstable_second_eig)
                  for i in range(N)]
        A = block_diag(blocks)
        edges = rng.random((N, N)) < cfg.edge_probability
        for i in range(N):
            for j in range(N):
                if i != j and edges[i, j]:
                    A[2 * i:2 * i + 2, 2 * j:2 * j + 2] = rng.uniform(
                        -cfg.coupling_strength, cfg.coupling_strength, size=(2, 2))
        B_blocks = tuple(rng.uniform(*cfg.input_gain, size=(2, 1)) for _ in range(N))
        covs = tuple(cfg.noise_std ** 2 * np.eye(2) for _ in range(N))
        plant = PlantModel(A, B_blocks, np.eye(2 * N), np.eye(N), covs)
        if not (check_controllability(plant.A, plant.B) and check_observability(plant.A, plant.W)):
            continue
        if cfg.normalize_cost:
            plant = _normalise_costs(plant, cfg)
            if plant is None:
                continue
        return plant
    raise GenerationError(
        f"no acceptable plant after {cfg.max_retries} draws (N={N}, coupling={cfg.coupling_strength}); "
        "check that the generation ranges admit controllable, observable systems")
