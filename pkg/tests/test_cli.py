import filecmp

import pytest

from ncsched.harness import cli

from conftest import TINY_INI


@pytest.fixture
def ini(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY_INI)
    return str(path)


def test_train_and_evaluate(tmp_path, ini, capsys):
    out = tmp_path / "out"
    assert cli.main(["train", "--config", ini, "--out", str(out), "--runs", "2",
                     "--baseline", "uniform-random"]) == 0
    assert "dira-run1" in capsys.readouterr().out
    for name in ("learning_curve.csv", "evaluation.csv", "summary.txt", "run0/qnet.txt", "run1/config.ini"):
        assert (out / name).exists()
    assert cli.main(["evaluate", "--checkpoint", str(out / "run0"), "--episodes", "1",
                     "--baseline", "stability-weighted", "--out", str(tmp_path / "ev")]) == 0
    assert "stability-weighted" in capsys.readouterr().out
    assert (tmp_path / "ev" / "evaluation.csv").exists()


def test_train_is_byte_reproducible(tmp_path, ini):
    for d in ("a", "b"):
        assert cli.main(["train", "--config", ini, "--out", str(tmp_path / d), "--epochs", "1"]) == 0
    assert filecmp.cmp(tmp_path / "a" / "learning_curve.csv", tmp_path / "b" / "learning_curve.csv", shallow=False)


def test_generate_check_and_oracle(tmp_path, ini, capsys):
    plant = str(tmp_path / "plant.txt")
    assert cli.main(["generate-system", "--config", ini, "--seed", "3", "--out", plant]) == 0
    assert "subsystem 2" in capsys.readouterr().out
    assert cli.main(["riccati-check", "--plant", plant, "--q", "0.95", "--out", str(tmp_path / "k.txt")]) == 0
    assert "status: converged" in capsys.readouterr().out
    assert cli.main(["riccati-check", "--plant", plant, "--q", "0.9,1.0"]) == 0
    assert cli.main(["enumerate-oracle", "--config", ini, "--plant", plant, "--states", "2"]) == 0
    assert "largest relative discrepancy" in capsys.readouterr().out


def test_errors_exit_with_two(tmp_path, ini, capsys):
    assert cli.main(["riccati-check", "--plant", str(tmp_path / "none.txt"), "--q", "0.5"]) == 2
    assert cli.main(["evaluate", "--config", ini]) == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("[dqn]\nunknown = 1\n")
    assert cli.main(["train", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "unknown key" in capsys.readouterr().err
