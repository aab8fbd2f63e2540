import pytest

from ncsched.harness.config import (ConfigError, ExperimentConfig, dumps_config, load_config, loads_config,
                                    preset)


def test_defaults_describe_eight_by_six():
    cfg = ExperimentConfig().validate()
    assert (cfg.system.n_subsystems, cfg.system.n_channels) == (8, 6)
    assert cfg.dqn.learning_rate == 1e-6 and cfg.dqn.batch_size == 40 and cfg.dqn.replay_size == 75_000
    assert cfg.training.init_state == "identity"
    assert cfg.n_type1 == 2


@pytest.mark.parametrize("name, N, M, H, rho, G", [
    ("n8m6", 8, 6, 2048, 0.99995, 75_000),
    ("n12m9", 12, 9, 4096, 0.99997, 100_000),
    ("n16m12", 16, 12, 6144, 0.99999, 125_000),
])
def test_scale_presets(name, N, M, H, rho, G):
    cfg = preset(name)
    assert (cfg.system.n_subsystems, cfg.system.n_channels) == (N, M)
    assert (cfg.dqn.hidden, cfg.schedule.epsilon_rate, cfg.dqn.replay_size) == (H, rho, G)
    assert (cfg.training.epochs, cfg.training.horizon) == (75, 500)


def test_desk_preset():
    cfg = preset("desk")
    assert (cfg.system.n_subsystems, cfg.system.n_channels, cfg.training.epochs) == (4, 3, 15)
    with pytest.raises(ConfigError):
        preset("huge")


def test_preset_section_and_overrides():
    cfg = loads_config("[preset]\nname = desk\n\n[training]\nepochs = 20\n[dqn]\ncompress_state = off\n")
    assert cfg.system.n_subsystems == 4 and cfg.training.epochs == 20 and cfg.dqn.compress_state is False


@pytest.mark.parametrize("text", [
    "[nonsense]\na = 1\n",
    "[dqn]\nhiden = 3\n",
    "[preset]\nname = desk\nextra = 1\n",
    "[dqn]\nhidden = many\n",
    "[training]\ntrain = maybe\n",
    "[dqn]\ngamma = 0\n",
    "[channels]\ntype1_success = 1.5\n",
    "[schedule]\nstorage_mode = sideways\n",
    "[training]\nepochs = 1\nhorizon = 10\n[control]\nrefresh_period = 20\n",
    "not an ini",
])
def test_rejected(text):
    with pytest.raises(ConfigError):
        loads_config(text)


def test_round_trip(tmp_path):
    cfg = preset("desk").replace(dqn={"learning_rate": 3e-4}, training={"init_state": "stationary"})
    path = tmp_path / "c.ini"
    path.write_text(dumps_config(cfg))
    assert load_config(path) == cfg
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.ini")


def test_seed_derivation():
    base = preset("desk")
    a, b = base.with_seed(2), base.with_seed(3)
    assert a.seeds.plant == 2000 and a.seeds.evaluation == 2006 and b.seeds.plant == 3000
    run1 = a.for_run(1)
    assert run1.seeds.plant == a.seeds.plant and run1.seeds.noise != a.seeds.noise
    assert a.for_run(0) == a
    with pytest.raises(ConfigError):
        base.replace(dqn={"nope": 1})
