import numpy as np

from ncsched import dqn
from ncsched.harness.training import load_checkpoint, run_training, save_checkpoint


def test_smoke_run_bookkeeping(tiny_cfg):
    res = run_training(tiny_cfg)
    lg = res.log
    assert len(lg.epochs) == 2 and not lg.aborted
    assert lg.steps == 100 and lg.transitions == 100
    assert [e.steps for e in lg.epochs] == [50, 50]
    # M = 1 update per step once the warm-up is reached
    assert sum(e.updates for e in lg.epochs) == 100 - 10 + 1
    assert len(lg.refreshes) == 2
    assert res.policy.epsilon == 0.0
    assert res.buffer.total_pushed == 100
    assert all(np.isfinite(e.mean_cost) for e in lg.epochs)


def test_training_is_deterministic(tiny_cfg):
    a, b = run_training(tiny_cfg), run_training(tiny_cfg)
    assert [e.mean_cost for e in a.log.epochs] == [e.mean_cost for e in b.log.epochs]
    for k in a.policy.net.params:
        np.testing.assert_array_equal(a.policy.net.params[k], b.policy.net.params[k])
    c = run_training(tiny_cfg.for_run(1))
    assert [e.mean_cost for e in c.log.epochs] != [e.mean_cost for e in a.log.epochs]


def test_pure_exploration_without_learning_is_uniform(tiny_cfg):
    cfg = tiny_cfg.replace(system={"n_subsystems": 3, "n_channels": 2},
                           schedule={"epsilon_start": 1.0, "epsilon_min": 1.0},
                           training={"train": False, "epochs": 10, "horizon": 300},
                           dqn={"replay_size": 6000})
    res = run_training(cfg)
    assert sum(e.updates for e in res.log.epochs) == 0
    a = res.buffer.ordered().actions
    np.testing.assert_allclose(np.bincount(a, minlength=3) / a.size, 1 / 3, atol=0.02)
    # weights never moved
    fresh = dqn.QNetwork(res.policy.net.input_dim, 16, 3, np.random.default_rng(cfg.seeds.weights))
    np.testing.assert_array_equal(res.policy.net.params["W1"], fresh.params["W1"])


def test_checkpoint_round_trip(tmp_path, tiny_cfg):
    res = run_training(tiny_cfg)
    save_checkpoint(res, tmp_path)
    plant, policy, ctl = load_checkpoint(tmp_path, tiny_cfg)
    np.testing.assert_array_equal(plant.A, res.plant.A)
    np.testing.assert_array_equal(ctl.K_inf, res.controller.K_inf)
    x = np.ones(plant.n)
    assert policy.select(x, np.random.default_rng(0)).action == res.policy.select(x, np.random.default_rng(0)).action
    assert (tmp_path / "config.ini").exists()


def test_selection_trace_and_late_window(tmp_path, tiny_cfg):
    import csv
    path = tmp_path / "trace.csv"
    cfg = tiny_cfg.replace(training={"selection_trace": str(path)},
                           control={"late_window": 400, "late_window_epoch": 1})
    res = run_training(cfg)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 100
    assert rows[0]["h_before"] == "00" and rows[-1]["step"] == "99"
    assert {r["greedy"] for r in rows} <= {"0", "1"}
    assert res.controller.estimator.window == 400
