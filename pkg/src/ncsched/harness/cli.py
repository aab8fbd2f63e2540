"""Command-line entry point: ``ncsched <subcommand> ...``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .. import lqr, matrix_io
from ..channels import average_success
from ..plant import PlantModel, lqr_gain, lqr_subsystem_costs, spectral_radius
from ..scheduler import ENUMERATION_CAP, count_joint_actions
from .baselines import BASELINES, lookahead_objective, lookahead_objective_bruteforce, oracle_greedy
from .config import ConfigError, ExperimentConfig, load_config, preset
from .evaluation import evaluate_policy
from .results import ResultsError, emit_results, summary_text, write_evaluation_csv
from .simulation import build_channels, build_plant
from .training import load_checkpoint, run_training, save_checkpoint

log = logging.getLogger("ncsched")


def _config(args) -> ExperimentConfig:
    base = preset(args.preset) if args.preset else None
    cfg = load_config(args.config, base) if args.config else (base or ExperimentConfig().validate())
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _add_config_args(p: argparse.ArgumentParser, seed: bool = True) -> None:
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("--preset", help="named base configuration: desk, n8m6, n12m9, n16m12")
    if seed:
        p.add_argument("--seed", type=int, help="derive every random stream from this single seed")


def cmd_train(args) -> int:
    cfg = _config(args)
    if args.epochs is not None:
        cfg = cfg.replace(training={"epochs": args.epochs})
    plant = build_plant(cfg)
    logs, evaluations = [], []
    for r in range(args.runs):
        run_cfg = cfg.for_run(r)
        if run_cfg.training.selection_trace and args.runs > 1:
            root, ext = os.path.splitext(run_cfg.training.selection_trace)
            run_cfg = run_cfg.replace(training={"selection_trace": f"{root}.run{r}{ext}"})
        result = run_training(run_cfg, plant=plant, run=r)
        logs.append(result.log)
        save_checkpoint(result, os.path.join(args.out, f"run{r}"))
        if result.log.aborted:
            log.error("run %d aborted: %s", r, result.log.abort_reason)
            continue
        if not args.no_eval:
            ev = evaluate_policy(result.policy, run_cfg, plant, controller=result.controller)
            ev.policy = f"dira-run{r}"
            evaluations.append(ev)
    for name in args.baseline or ():
        evaluations.append(evaluate_policy(name, cfg, plant))
    emit_results(logs, evaluations, args.out)
    sys.stdout.write(summary_text(logs, evaluations))
    return 1 if any(lg.aborted for lg in logs) else 0


def cmd_evaluate(args) -> int:
    if not args.checkpoint and not args.baseline:
        raise ConfigError("give --checkpoint and/or --baseline")
    evaluations = []
    if args.checkpoint:
        if args.config or args.preset:
            cfg = _config(args)
        else:
            cfg = load_config(os.path.join(args.checkpoint, "config.ini"))
        plant, policy, controller = load_checkpoint(args.checkpoint, cfg)
        ev = evaluate_policy(policy, cfg, plant, episodes=args.episodes, controller=controller,
                             seed=args.eval_seed)
        evaluations.append(ev)
    else:
        cfg = _config(args)
        plant = PlantModel.load(args.plant) if args.plant else build_plant(cfg)
    for name in args.baseline or ():
        evaluations.append(evaluate_policy(name, cfg, plant, episodes=args.episodes, seed=args.eval_seed))
    print(f"{'policy':<22}{'mean':>12}{'std':>12}{'episodes':>10}{'diverged':>10}")
    for ev in evaluations:
        print(f"{ev.policy:<22}{ev.mean:>12.5g}{ev.std:>12.5g}{ev.episodes:>10d}{ev.n_diverged:>10d}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_evaluation_csv(evaluations, args.out)
    return 0


def _parse_q(text: str, N: int) -> np.ndarray:
    vals = [float(v) for v in text.split(",")]
    if len(vals) == 1:
        vals = vals * N
    if len(vals) != N:
        raise ConfigError(f"--q needs 1 or {N} values, got {len(vals)}")
    return np.array(vals)


def cmd_riccati_check(args) -> int:
    plant = PlantModel.load(args.plant)
    q = _parse_q(args.q, plant.N)
    margin = lqr.lemma1_margin(plant, q)
    sol = lqr.solve_steady_state(plant, q, tol=args.tol, max_iter=args.max_iter)
    print(f"q = {np.array2string(q, precision=4)}")
    print(f"sufficient-condition margin: {margin:.6f} ({'below' if margin < 1 else 'not below'} one)")
    print(f"status: {sol.status} after {sol.iterations} iterations")
    if sol.converged:
        fixed = float(np.abs(lqr.riccati_iterate(plant, q, sol.K) - sol.K).max())
        print(f"last change: {sol.residual:.3e}, fixed-point residual: {fixed:.3e}")
        print(f"trace(K_inf) = {np.trace(sol.K):.6f}")
        if args.out:
            matrix_io.save_matrices(args.out, {"K_inf": sol.K, "q": q}, header="steady-state lossy Riccati solution")
    return 0 if sol.converged else 2


def cmd_generate_system(args) -> int:
    cfg = _config(args)
    plant = build_plant(cfg)
    plant.save(args.out)
    radii = [spectral_radius(plant.diagonal_block(i)) for i in range(plant.N)]
    costs = lqr_subsystem_costs(plant)
    print(f"wrote {args.out}: N={plant.N}, n={plant.n}, m={plant.m}")
    for i, (r, c) in enumerate(zip(radii, costs), start=1):
        print(f"  subsystem {i}: spectral radius {r:.4f}, perfect-communication cost {c:.4f}")
    return 0


def cmd_enumerate_oracle(args) -> int:
    cfg = _config(args)
    plant = PlantModel.load(args.plant) if args.plant else build_plant(cfg)
    M = cfg.system.n_channels
    if count_joint_actions(plant.N, M) > args.cap:
        raise ConfigError(f"N^M = {plant.N}^{M} exceeds the enumeration cap {args.cap}")
    probs = [average_success(c) for c in build_channels(cfg)]
    K, _ = lqr_gain(plant)
    rng = np.random.default_rng(cfg.seeds.evaluation)
    worst = 0.0
    for _ in range(args.states):
        x = rng.standard_normal(plant.n)
        action = oracle_greedy(plant, x, K, probs, args.cap)
        q = lqr.closure_probs_for_action(action, probs, plant.N)
        u = -lqr.lookahead_gain(plant, K, q) @ x
        closed = lookahead_objective(plant, x, K, q, u)
        brute = lookahead_objective_bruteforce(plant, x, K, q, u)
        worst = max(worst, abs(closed - brute) / max(1.0, abs(brute)))
        print(f"action {action}: objective {closed:.6f} (dropout-pattern sum {brute:.6f})")
    print(f"largest relative discrepancy: {worst:.3e}")
    return 0 if worst < 1e-9 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ncsched", description="Control-aware channel scheduling experiments")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the iterative scheduler and write results")
    _add_config_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--runs", type=int, default=1, help="independent training runs on the same plant")
    p.add_argument("--epochs", type=int, help="override training.epochs")
    p.add_argument("--baseline", action="append", choices=BASELINES, help="also evaluate this baseline")
    p.add_argument("--no-eval", action="store_true", help="skip evaluating the trained policies")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="Monte Carlo evaluation of a checkpoint or baseline")
    _add_config_args(p)
    p.add_argument("--checkpoint", help="directory written by train (run<k>/)")
    p.add_argument("--baseline", action="append", choices=BASELINES)
    p.add_argument("--plant", help="plant file for baselines (default: generate from config)")
    p.add_argument("--episodes", type=int)
    p.add_argument("--eval-seed", type=int)
    p.add_argument("--out", help="write evaluation.csv here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("riccati-check", help="steady-state lossy Riccati solution for given closure rates")
    p.add_argument("--plant", required=True)
    p.add_argument("--q", required=True, help="closure probability, one value or comma-separated per subsystem")
    p.add_argument("--tol", type=float, default=lqr.RICCATI_TOL)
    p.add_argument("--max-iter", type=int, default=lqr.RICCATI_MAX_ITER)
    p.add_argument("--out", help="write K_inf to this matrix file")
    p.set_defaults(func=cmd_riccati_check)

    p = sub.add_parser("generate-system", help="generate a random plant and save it")
    _add_config_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate_system)

    p = sub.add_parser("enumerate-oracle", help="check the exhaustive oracle against dropout-pattern sums")
    _add_config_args(p)
    p.add_argument("--plant")
    p.add_argument("--states", type=int, default=5)
    p.add_argument("--cap", type=int, default=ENUMERATION_CAP)
    p.set_defaults(func=cmd_enumerate_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ResultsError, OSError, matrix_io.MatrixFormatError) as exc:
        print(f"ncsched: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
