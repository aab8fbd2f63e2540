import numpy as np
import pytest

from ncsched.harness.evaluation import EvaluationResult
from ncsched.harness.results import (ResultsError, aggregate_curves, emit_results, read_learning_curve)
from ncsched.harness.training import EpochRecord, RunLog


def _logs(runs=15, epochs=75):
    rng = np.random.default_rng(0)
    logs = []
    for r in range(runs):
        lg = RunLog(run=r)
        for e in range(epochs):
            lg.epochs.append(EpochRecord(e, 500, float(rng.uniform(5, 15)), float(rng.uniform()), 0.1 / 3,
                                         1500, 0.99 ** e, e == 3 and r == 0))
        logs.append(lg)
    return logs


def test_empty_input_raises(tmp_path):
    with pytest.raises(ResultsError):
        emit_results([], outdir=tmp_path)


def test_learning_curve_round_trip(tmp_path):
    logs = _logs()
    paths = emit_results(logs, [EvaluationResult("x", [1.0, 2.0], [False, True])], tmp_path)
    rows = read_learning_curve(paths["learning_curve"])
    assert len(rows) == 15 * 75
    recs = [e for lg in logs for e in lg.epochs]
    assert [r["mean_cost"] for r in rows] == [e.mean_cost for e in recs]
    assert [r["epsilon"] for r in rows] == [e.epsilon for e in recs]
    assert sum(r["diverged"] for r in rows) == 1
    agg = aggregate_curves(logs)
    assert rows[0]["agg_mean"] == agg.mean[0]
    text = open(paths["evaluation"]).read().splitlines()
    assert text[0] == "policy,mean,std,episodes,diverged" and text[1] == "x,1.5,0.5,2,1"
    assert "runs: 15" in open(paths["summary"]).read()


def test_aggregate_band():
    logs = _logs(runs=2, epochs=1)
    vals = np.array([lg.epochs[0].mean_cost for lg in logs])
    agg = aggregate_curves(logs)
    assert agg.upper[0] - agg.mean[0] == pytest.approx(2 * vals.std())


def test_missing_directory_is_created(tmp_path):
    out = tmp_path / "a" / "b"
    emit_results(_logs(1, 2), outdir=out)
    assert (out / "learning_curve.csv").exists() and not (out / "evaluation.csv").exists()
