"""CSV and plain-text outputs of training runs and evaluations.

Floats are written with ``repr`` so that reading a CSV back yields the
exact in-memory values.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

LEARNING_CURVE = "learning_curve.csv"
EVALUATION = "evaluation.csv"
SUMMARY = "summary.txt"

CURVE_FIELDS = ("run", "epoch", "steps", "mean_cost", "std_cost", "mean_loss", "epsilon", "diverged",
                "agg_mean", "agg_lower", "agg_upper")
EVAL_FIELDS = ("policy", "mean", "std", "episodes", "diverged")


class ResultsError(RuntimeError):
    pass


@dataclass
class CurveAggregate:
    """Across-run mean and two-standard-deviation band per epoch."""

    epochs: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def aggregate_curves(logs) -> CurveAggregate:
    """Epoch-wise statistics over runs; epochs missing from a run are skipped."""
    n_epochs = max((len(lg.epochs) for lg in logs), default=0)
    mean, lower, upper = [], [], []
    for e in range(n_epochs):
        vals = np.array([lg.epochs[e].mean_cost for lg in logs if e < len(lg.epochs)], dtype=float)
        m = float(np.mean(vals))
        s = float(np.std(vals))
        mean.append(m)
        lower.append(m - 2 * s)
        upper.append(m + 2 * s)
    return CurveAggregate(np.arange(n_epochs), np.array(mean), np.array(lower), np.array(upper))


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: str, header, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise ResultsError(f"cannot write {path}: {exc}") from exc


def write_evaluation_csv(evaluations, outdir: str | os.PathLike) -> str:
    path = os.path.join(os.fspath(outdir), EVALUATION)
    _write_csv(path, EVAL_FIELDS, ((ev.policy, ev.mean, ev.std, ev.episodes, ev.n_diverged) for ev in evaluations))
    return path


def curve_rows(logs):
    agg = aggregate_curves(logs)
    for lg in logs:
        for rec in lg.epochs:
            e = rec.epoch
            yield (lg.run, e, rec.steps, rec.mean_cost, rec.std_cost, rec.mean_loss, rec.epsilon, rec.diverged,
                   agg.mean[e], agg.lower[e], agg.upper[e])


def summary_text(logs, evaluations=()) -> str:
    lines = [f"runs: {len(logs)}"]
    agg = aggregate_curves(logs)
    if agg.mean.size:
        lines.append(f"final epoch mean cost: {agg.mean[-1]:.5g} "
                     f"(band {agg.lower[-1]:.5g} .. {agg.upper[-1]:.5g})")
    n_div = sum(lg.diverged for lg in logs)
    lines.append(f"runs with divergence or abort: {n_div}")
    if evaluations:
        lines.append("")
        lines.append(f"{'policy':<22}{'mean':>12}{'std':>12}{'episodes':>10}{'diverged':>10}")
        for ev in evaluations:
            lines.append(f"{ev.policy:<22}{ev.mean:>12.5g}{ev.std:>12.5g}{ev.episodes:>10d}{ev.n_diverged:>10d}")
    return "\n".join(lines) + "\n"


def emit_results(logs, evaluations=(), outdir: str | os.PathLike = ".") -> dict[str, str]:
    """Write the learning curve, evaluation table and summary; return their paths."""
    logs = list(logs)
    if not logs:
        raise ResultsError("no completed runs to report")
    outdir = os.fspath(outdir)
    try:
        os.makedirs(outdir, exist_ok=True)
    except OSError as exc:
        raise ResultsError(f"cannot create output directory {outdir}: {exc}") from exc
    paths = {"learning_curve": os.path.join(outdir, LEARNING_CURVE)}
    _write_csv(paths["learning_curve"], CURVE_FIELDS, curve_rows(logs))
    if evaluations:
        paths["evaluation"] = write_evaluation_csv(evaluations, outdir)
    paths["summary"] = os.path.join(outdir, SUMMARY)
    try:
        with open(paths["summary"], "w", newline="\n") as fh:
            fh.write(summary_text(logs, evaluations))
    except OSError as exc:
        raise ResultsError(f"cannot write {paths['summary']}: {exc}") from exc
    return paths


def read_learning_curve(path: str | os.PathLike) -> list[dict]:
    """Parse a learning-curve CSV back into typed rows."""
    ints = {"run", "epoch", "steps", "diverged"}
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ResultsError(f"cannot read {os.fspath(path)}: {exc}") from exc
    return [{k: int(v) if k in ints else float(v) for k, v in row.items()} for row in rows]
