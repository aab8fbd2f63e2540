"""Monte Carlo evaluation of scheduling policies."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..channels import average_success
from ..plant import PlantModel, lqr_gain, stage_cost, step
from .baselines import make_baseline
from .config import ExperimentConfig
from .simulation import AdaptiveController, Environment, InitialStateSampler, build_channels

log = logging.getLogger(__name__)


@dataclass
class EvaluationResult:
    policy: str
    episode_costs: list[float] = field(default_factory=list)
    diverged: list[bool] = field(default_factory=list)
    exclude_diverged: bool = False

    @property
    def episodes(self) -> int:
        return len(self.episode_costs)

    @property
    def n_diverged(self) -> int:
        return int(sum(self.diverged))

    def _values(self) -> np.ndarray:
        vals = np.asarray(self.episode_costs, dtype=float)
        if self.exclude_diverged:
            vals = vals[~np.asarray(self.diverged, dtype=bool)]
        return vals

    @property
    def mean(self) -> float:
        v = self._values()
        return float(v.mean()) if v.size else float("nan")

    @property
    def std(self) -> float:
        v = self._values()
        return float(v.std()) if v.size else float("nan")


def calibrate(plant: PlantModel, policy, cfg: ExperimentConfig, env: Environment, rng: np.random.Generator,
              steps: int) -> AdaptiveController:
    """Run the policy with acknowledgments to estimate link rates, then freeze the controller."""
    controller = AdaptiveController(plant, cfg)
    controller.refresh(0)
    c = cfg.control.refresh_period
    x = env.reset()
    for k in range(1, steps + 1):
        action = policy.act(x, controller, rng)
        _, acks, mask, _ = env.execute(action, controller.candidate(x, action))
        controller.observe(action, acks, mask)
        x = env.x
        if k % c == 0 or k == steps:
            controller.refresh(k)
        if not np.all(np.isfinite(x)) or np.abs(x).max() > cfg.training.divergence_threshold:
            x = env.reset()
    controller.freeze()
    return controller


def evaluate_policy(policy, cfg: ExperimentConfig, plant: PlantModel, episodes: int | None = None,
                    horizon: int | None = None, controller: AdaptiveController | None = None,
                    seed: int | None = None) -> EvaluationResult:
    """Average stage cost per episode under ``policy``.

    ``policy`` is a baseline name or an object with ``act(x, controller,
    rng)``. Without a ``controller`` the link estimates are first obtained
    from a calibration run of the policy itself. During the scored episodes
    the controller is frozen (no acknowledgments are used).
    """
    ev = cfg.evaluation
    episodes = episodes or ev.episodes
    horizon = horizon or ev.horizon
    seed = cfg.seeds.evaluation if seed is None else seed
    ss = np.random.SeedSequence(seed)
    ch_seed, noise_seed, act_seed, cal_seed = ss.spawn(4)
    tr = cfg.training
    channels = build_channels(cfg)
    M = cfg.system.n_channels

    if policy == "perfect-comm-lqr":
        return _evaluate_perfect(plant, cfg, episodes, horizon, noise_seed)
    name = policy if isinstance(policy, str) else getattr(policy, "name", type(policy).__name__)
    if isinstance(policy, str):
        policy = make_baseline(policy, plant, [average_success(c) for c in channels], M)

    env = Environment(plant, channels, ch_seed, noise_seed, tr.init_state, tr.init_state_scale)
    rng = np.random.default_rng(act_seed)
    if controller is None:
        cal_ch, cal_noise, cal_act = cal_seed.spawn(3)
        cal_env = Environment(plant, channels, cal_ch, cal_noise, tr.init_state, tr.init_state_scale)
        controller = calibrate(plant, policy, cfg, cal_env, np.random.default_rng(cal_act), ev.calibration_steps)
    elif not controller.frozen:
        controller.freeze()

    result = EvaluationResult(name, exclude_diverged=ev.exclude_diverged)
    for _ in range(episodes):
        x = env.reset()
        total, steps, diverged = 0.0, 0, False
        for _ in range(horizon):
            action = policy.act(x, controller, rng)
            u, _, _, _ = env.execute(action, controller.candidate(x, action))
            total += stage_cost(plant, x, u)
            steps += 1
            x = env.x
            if not np.all(np.isfinite(x)) or np.abs(x).max() > tr.divergence_threshold:
                diverged = True
                break
        result.episode_costs.append(total / steps)
        result.diverged.append(diverged)
    if result.n_diverged:
        log.warning("%s: %d of %d episodes diverged", name, result.n_diverged, episodes)
    return result


def _evaluate_perfect(plant: PlantModel, cfg: ExperimentConfig, episodes: int, horizon: int,
                      noise_seed) -> EvaluationResult:
    _, L = lqr_gain(plant)
    rng = np.random.default_rng(noise_seed)
    sampler = InitialStateSampler(plant, cfg.training.init_state, cfg.training.init_state_scale)
    result = EvaluationResult("perfect-comm-lqr", exclude_diverged=cfg.evaluation.exclude_diverged)
    for _ in range(episodes):
        x = sampler(rng)
        total = 0.0
        for _ in range(horizon):
            u = -L @ x
            total += stage_cost(plant, x, u)
            x = step(plant, x, u, plant.sample_noise(rng))
        result.episode_costs.append(total / horizon)
        result.diverged.append(False)
    return result
