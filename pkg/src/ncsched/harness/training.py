"""Episodic training of the iterative scheduler with the adaptive LQR."""
from __future__ import annotations

import logging
import os
from contextlib import nullcontext
from dataclasses import dataclass, field

import numpy as np

from .. import dqn, matrix_io, scheduler
from ..plant import PlantModel
from .config import ExperimentConfig, dumps_config
from .simulation import AdaptiveController, Environment, build_channels, build_plant, stationary_covariance

log = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    steps: int
    mean_cost: float
    std_cost: float
    mean_loss: float
    updates: int
    epsilon: float
    diverged: bool


@dataclass
class RunLog:
    run: int = 0
    epochs: list[EpochRecord] = field(default_factory=list)
    refreshes: list = field(default_factory=list)
    aborted: bool = False
    abort_reason: str = ""
    steps: int = 0
    transitions: int = 0

    @property
    def diverged(self) -> bool:
        return self.aborted or any(e.diverged for e in self.epochs)


class DiraPolicy:
    """Greedy (or epsilon-greedy) iterative scheduler around a Q-network."""

    name = "dira"

    def __init__(self, net: dqn.QNetwork, N: int, M: int, x_scale, epsilon: float = 0.0,
                 per_component: bool = False, compress: bool = True):
        self.net, self.N, self.M, self.x_scale = net, N, M, np.asarray(x_scale, dtype=float)
        self.epsilon, self.per_component, self.compress = epsilon, per_component, compress

    def features(self, x) -> np.ndarray:
        """Scaled plant state as seen by the network.

        With ``compress`` the scaled state passes through ``sign(z) log(1 + |z|)``
        so that states far outside the stationary spread do not dominate
        the regression targets.
        """
        z = np.asarray(x, dtype=float) / self.x_scale
        return np.sign(z) * np.log1p(np.abs(z)) if self.compress else z

    def select(self, x, rng) -> scheduler.Selection:
        return scheduler.select_action(self.features(x), self.net, self.epsilon, rng,
                                       self.N, self.M, self.per_component)

    def act(self, x, controller, rng) -> tuple[int, ...]:
        return self.select(x, rng).action


def state_scale(cfg: ExperimentConfig, plant: PlantModel) -> np.ndarray:
    """Per-coordinate divisor for the network's state input.

    Defaults to the stationary standard deviation of each coordinate under
    the perfect-communication LQR.
    """
    if cfg.dqn.state_scale > 0:
        return np.full(plant.n, cfg.dqn.state_scale)
    P = stationary_covariance(plant)
    return np.sqrt(np.clip(np.diag(P), 1e-12, None))


@dataclass
class TrainingResult:
    log: RunLog
    plant: PlantModel
    policy: DiraPolicy
    target: dqn.QNetwork
    controller: AdaptiveController
    buffer: dqn.ReplayBuffer
    cfg: ExperimentConfig


def run_training(cfg: ExperimentConfig, plant: PlantModel | None = None, run: int = 0) -> TrainingResult:
    """Run the full scheduling/control learning loop.

    Per step: iterative selection, candidate controls, transmission and
    dropouts, reward, M stored transitions, M minibatch updates (once the
    replay holds ``warmup`` transitions), soft target update, epsilon
    decay, and every ``refresh_period`` steps a terminal-cost refresh.
    """
    cfg.validate()
    plant = plant if plant is not None else build_plant(cfg)
    N, M = plant.N, cfg.system.n_channels
    d, sc, tr = cfg.dqn, cfg.schedule, cfg.training
    seeds = cfg.seeds

    env = Environment(plant, build_channels(cfg), seeds.channels, seeds.noise, tr.init_state, tr.init_state_scale)
    controller = AdaptiveController(plant, cfg)
    ev = controller.refresh(0)
    log.info("initial K_inf: margin %.4f (%s)", ev.margin, ev.status)

    x_scale = state_scale(cfg, plant)
    width = scheduler.input_dim(plant.n, N, M)
    net = dqn.QNetwork(width, d.hidden, N, np.random.default_rng(seeds.weights))
    target = net.copy()
    adam = dqn.AdamState(lr=d.learning_rate)
    buf = dqn.ReplayBuffer(d.replay_size, width, warmup=max(d.warmup, 1))
    eps = dqn.EpsilonSchedule(sc.epsilon_start, sc.epsilon_min, sc.epsilon_rate)
    explore_rng = np.random.default_rng(seeds.exploration)
    replay_rng = np.random.default_rng(seeds.replay)
    policy = DiraPolicy(net, N, M, x_scale, per_component=sc.per_component, compress=d.compress_state)
    reward_scale = d.reward_scale if d.reward_scale > 0 else float(N)
    clip = d.clip_norm if d.clip_norm > 0 else None
    zero_h = np.zeros(width - plant.n)

    c = cfg.control
    runlog = RunLog(run=run)
    tracer = scheduler.SelectionTraceWriter(tr.selection_trace) if tr.selection_trace else nullcontext()
    with tracer as trace:
        k = 0
        for epoch in range(tr.epochs):
            if c.late_window and epoch == c.late_window_epoch:
                controller.estimator.resize(c.late_window)
                log.info("epoch %d: estimation window widened to %d", epoch, c.late_window)
            x = env.reset()
            costs, losses = [], []
            diverged = False
            for _ in range(tr.horizon):
                policy.epsilon = eps.epsilon
                sel = policy.select(x, explore_rng)
                if trace is not None:
                    trace.write(scheduler.selection_trace_rows(k, sel, plant.n, eps.epsilon))
                u_cand = controller.candidate(x, sel.action)
                u, acks, mask, _ = env.execute(sel.action, u_cand)
                reward, g = scheduler.compute_reward(plant, x, u, reward_scale)
                if d.reward_floor > 0:
                    reward = max(reward, -d.reward_floor)
                controller.observe(sel.action, acks, mask)
                x = env.x
                costs.append(g)
                next_enc = np.concatenate([policy.features(x), zero_h])
                scheduler.store_selection_history(buf, sel, reward, next_enc, sc.storage_mode)
                runlog.transitions += M
                if tr.train and buf.ready:
                    try:
                        for _ in range(M):
                            b = buf.sample(d.batch_size, replay_rng)
                            y = dqn.bellman_targets(b.rewards, b.next_states, b.terminals, target, d.gamma)
                            losses.append(dqn.train_step(net, adam, b.states, b.actions, y, clip))
                    except dqn.TrainingFault as exc:
                        runlog.aborted, runlog.abort_reason = True, str(exc)
                    if not runlog.aborted:
                        dqn.soft_update(target, net, d.tau)
                eps.step()
                k += 1
                if k % c.refresh_period == 0:
                    ev = controller.refresh(k)
                    runlog.refreshes.append(ev)
                    if ev.status != "converged":
                        log.warning("step %d: K_inf refresh fell back to finite horizon (%s)", k, ev.status)
                if runlog.aborted or not np.all(np.isfinite(x)):
                    runlog.aborted = True
                    runlog.abort_reason = runlog.abort_reason or "non-finite plant state"
                    break
                if np.abs(x).max() > tr.divergence_threshold:
                    diverged = True
                    break
            runlog.steps = k
            runlog.epochs.append(EpochRecord(
                epoch=epoch, steps=len(costs), mean_cost=float(np.mean(costs)) if costs else float("nan"),
                std_cost=float(np.std(costs)) if costs else float("nan"),
                mean_loss=float(np.mean(losses)) if losses else float("nan"), updates=len(losses),
                epsilon=eps.epsilon, diverged=diverged))
            log.info("run %d epoch %d: mean cost %.4f, loss %.4g, eps %.4f%s", runlog.run, epoch,
                     runlog.epochs[-1].mean_cost, runlog.epochs[-1].mean_loss, eps.epsilon,
                     " DIVERGED" if diverged else "")
            if runlog.aborted:
                log.error("run %d aborted: %s", runlog.run, runlog.abort_reason)
                break
    policy.epsilon = 0.0
    return TrainingResult(runlog, plant, policy, target, controller, buf, cfg)


def save_checkpoint(result: TrainingResult, outdir: str | os.PathLike) -> None:
    os.makedirs(outdir, exist_ok=True)
    result.plant.save(os.path.join(outdir, "plant.txt"))
    result.policy.net.save(os.path.join(outdir, "qnet.txt"))
    mats = result.controller.to_matrices()
    mats["x_scale"] = np.asarray(result.policy.x_scale)
    matrix_io.save_matrices(os.path.join(outdir, "controller.txt"), mats, header="terminal cost and link estimates")
    with open(os.path.join(outdir, "config.ini"), "w", newline="\n") as fh:
        fh.write(dumps_config(result.cfg))


def load_checkpoint(outdir: str | os.PathLike, cfg: ExperimentConfig):
    """Return ``(plant, policy, frozen controller)`` from a checkpoint directory."""
    plant = PlantModel.load(os.path.join(outdir, "plant.txt"))
    net = dqn.QNetwork.load(os.path.join(outdir, "qnet.txt"))
    mats = matrix_io.load_matrices(os.path.join(outdir, "controller.txt"))
    controller = AdaptiveController.from_matrices(plant, cfg, mats)
    policy = DiraPolicy(net, plant.N, cfg.system.n_channels, mats["x_scale"].ravel(),
                        compress=cfg.dqn.compress_state)
    return plant, policy, controller
