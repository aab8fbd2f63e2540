"""Closed-loop plumbing shared by training and evaluation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .. import lqr
from ..channels import ChannelNetwork, MarkovChannel, gilbert_elliot
from ..plant import PlantModel, apply_dropouts, generate_random_ncs, lqr_gain, step
from .config import ExperimentConfig

log = logging.getLogger(__name__)


def build_plant(cfg: ExperimentConfig) -> PlantModel:
    if cfg.system.plant_file:
        plant = PlantModel.load(cfg.system.plant_file)
        if plant.N != cfg.system.n_subsystems:
            raise ValueError(f"plant file has N={plant.N}, config says {cfg.system.n_subsystems}")
        return plant
    return generate_random_ncs(cfg.generation(), np.random.default_rng(cfg.seeds.plant))


def build_channels(cfg: ExperimentConfig) -> list[MarkovChannel]:
    """First ``ceil(M * type1_fraction)`` channels are type 1, the rest type 2."""
    ch = cfg.channels
    kw = dict(burstiness=ch.bad_sojourn, good_dropout=ch.good_dropout, good_sojourn=ch.good_sojourn)
    t1 = gilbert_elliot(ch.type1_success, label="type1", **kw)
    t2 = gilbert_elliot(ch.type2_success, label="type2", **kw)
    return [t1 if j < cfg.n_type1 else t2 for j in range(cfg.system.n_channels)]


def closure_mask(action, acks, N: int) -> np.ndarray:
    """Subsystem ``i`` closes its loop if any channel serving it delivered."""
    mask = np.zeros(N, dtype=np.int8)
    for a, ok in zip(action, acks):
        if ok:
            mask[a - 1] = 1
    return mask


def stationary_covariance(plant: PlantModel) -> np.ndarray:
    """State covariance of the perfect-communication LQR loop in steady state."""
    _, L = lqr_gain(plant)
    return scipy.linalg.solve_discrete_lyapunov(plant.A - plant.B @ L, plant.noise_covariance)


class InitialStateSampler:
    """Per-epoch reset distribution.

    ``stationary``: zero-mean Gaussian with the closed-loop covariance of
    the perfect-communication LQR; ``identity``: standard normal. Either
    is multiplied by ``scale``.
    """

    def __init__(self, plant: PlantModel, kind: str = "stationary", scale: float = 1.0):
        if kind == "stationary":
            P = stationary_covariance(plant)
            vals, vecs = np.linalg.eigh((P + P.T) / 2)
            self.factor = scale * vecs * np.sqrt(np.clip(vals, 0, None))
        elif kind == "identity":
            self.factor = scale * np.eye(plant.n)
        else:
            raise ValueError(f"unknown initial state distribution {kind!r}")
        self.n = plant.n

    def __call__(self, rng: np.random.Generator) -> np.ndarray:
        return self.factor @ rng.standard_normal(self.n)


@dataclass
class RefreshEvent:
    step: int
    q: np.ndarray
    margin: float
    status: str
    iterations: int


class AdaptiveController:
    """Schedule-aware LQR with moving-average link estimates.

    ``refresh`` recomputes the terminal cost from the current per-subsystem
    closure estimates; when the steady-state iteration fails, the
    finite-horizon fallback is used.
    """

    def __init__(self, plant: PlantModel, cfg: ExperimentConfig):
        c = cfg.control
        self.plant = plant
        self.cfg = c
        self.estimator = lqr.SuccessRateEstimator(cfg.system.n_channels, plant.N, c.window, c.prior)
        self.K_inf: np.ndarray | None = None
        self.events: list[RefreshEvent] = []
        self.frozen = False
        self._gain_cache: dict[tuple, np.ndarray] = {}
        self._rates_override: np.ndarray | None = None

    @property
    def channel_rates(self) -> np.ndarray:
        return self._rates_override if self._rates_override is not None else self.estimator.channel_rates

    def refresh(self, step: int = 0) -> RefreshEvent:
        q = self.estimator.closure_rates
        c = self.cfg
        K, sol = lqr.terminal_cost(self.plant, q, c.fallback_horizon, tol=c.riccati_tol,
                                   max_iter=c.riccati_max_iter, blowup=c.riccati_blowup)
        self.K_inf = K
        self._gain_cache.clear()
        ev = RefreshEvent(step, q, lqr.lemma1_margin(self.plant, q), sol.status, sol.iterations)
        self.events.append(ev)
        return ev

    def freeze(self) -> None:
        """Stop adapting: link estimates and terminal cost stay fixed from now on."""
        self.frozen = True
        self._rates_override = self.estimator.channel_rates.copy()

    def gain(self, action) -> np.ndarray:
        key = tuple(action)
        L = self._gain_cache.get(key) if self.frozen else None
        if L is None:
            q = lqr.closure_probs_for_action(action, self.channel_rates, self.plant.N)
            if self.K_inf is None:
                raise lqr.ControllerUnavailable("terminal cost K_inf has not been computed")
            L = lqr.lookahead_gain(self.plant, self.K_inf, q)
            if self.frozen:
                self._gain_cache[key] = L
        return L

    def candidate(self, x: np.ndarray, action) -> np.ndarray:
        return -self.gain(action) @ x

    def observe(self, action, acks, mask) -> None:
        if not self.frozen:
            self.estimator.update(action, acks, mask)

    def to_matrices(self) -> dict[str, np.ndarray]:
        out = {"K_inf": self.K_inf, "channel_rates": self.channel_rates,
               "closure_rates": self.estimator.closure_rates}
        return out

    @classmethod
    def from_matrices(cls, plant: PlantModel, cfg: ExperimentConfig, mats: dict[str, np.ndarray]) -> "AdaptiveController":
        ctl = cls(plant, cfg)
        ctl.K_inf = mats["K_inf"]
        ctl.frozen = True
        ctl._rates_override = mats["channel_rates"].ravel().copy()
        return ctl


class Environment:
    """Plant + channels + noise: executes one scheduled, lossy control step."""

    def __init__(self, plant: PlantModel, channels: list[MarkovChannel], channel_seed, noise_seed,
                 init_kind: str = "stationary", init_scale: float = 1.0):
        self.plant = plant
        self.network = ChannelNetwork(channels, channel_seed)
        self.noise_rng = np.random.default_rng(noise_seed)
        self.sampler = InitialStateSampler(plant, init_kind, init_scale)
        self.x = np.zeros(plant.n)

    def reset(self) -> np.ndarray:
        self.x = self.sampler(self.noise_rng)
        return self.x

    def execute(self, action, candidate: np.ndarray):
        """Transmit, apply dropouts, advance. Returns ``(u_applied, acks, mask, x_prev)``."""
        acks = self.network.transmit()
        mask = closure_mask(action, acks, self.plant.N)
        u = apply_dropouts(self.plant, candidate, mask)
        x_prev = self.x
        self.x = step(self.plant, x_prev, u, self.plant.sample_noise(self.noise_rng))
        self.network.advance()
        return u, acks, mask, x_prev
