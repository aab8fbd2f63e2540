import csv

import numpy as np
import pytest

from ncsched.channels import (ChannelError, ChannelNetwork, MarkovChannel, NotErgodicError, average_success,
                              gilbert_elliot, simulate_trace, stationary_distribution, write_trace_csv)


def test_stationary_distribution_two_state():
    # balance: 0.1 p0 = 0.5 p1
    np.testing.assert_allclose(stationary_distribution([[0.9, 0.1], [0.5, 0.5]]), [5 / 6, 1 / 6])


def test_stationary_distribution_three_state():
    T = np.array([[0.5, 0.5, 0.0], [0.25, 0.5, 0.25], [0.0, 0.5, 0.5]])
    np.testing.assert_allclose(stationary_distribution(T), [0.25, 0.5, 0.25])


@pytest.mark.parametrize("T", [np.eye(2), [[0.0, 1.0], [1.0, 0.0]], [[1.0, 0.0], [0.5, 0.5]]])
def test_non_ergodic_chains_are_rejected(T):
    with pytest.raises(NotErgodicError):
        stationary_distribution(T)


def test_invalid_channels():
    with pytest.raises(ChannelError):
        stationary_distribution([[0.5, 0.6], [0.5, 0.5]])
    with pytest.raises(ChannelError):
        MarkovChannel(T=[[0.9, 0.1], [0.5, 0.5]], e=[0.1, 1.5])
    with pytest.raises(ChannelError):
        MarkovChannel(T=[[0.9, 0.1], [0.5, 0.5]], e=[0.1, 0.2], p=[0.5, 0.5])


@pytest.mark.parametrize("avg", [0.99, 0.93, 0.85])
def test_gilbert_elliot_average(avg):
    ch = gilbert_elliot(avg, burstiness=4.0, good_sojourn=20.0)
    assert average_success(ch) == pytest.approx(avg, abs=1e-12)
    assert ch.T[1, 0] == pytest.approx(0.25) and ch.T[0, 1] == pytest.approx(0.05)
    assert ch.e[1] > ch.e[0]


def test_gilbert_elliot_with_fixed_bad_dropout():
    ch = gilbert_elliot(0.9, bad_dropout=0.5, good_dropout=0.0)
    assert average_success(ch) == pytest.approx(0.9)
    assert ch.e[1] == 0.5


def test_gilbert_elliot_unreachable():
    with pytest.raises(ChannelError):
        gilbert_elliot(0.2, burstiness=1.0, good_sojourn=100.0)


def test_network_is_deterministic():
    chans = [gilbert_elliot(0.93), gilbert_elliot(0.99)]
    a = simulate_trace(ChannelNetwork(chans, 11), 200)
    b = simulate_trace(ChannelNetwork(chans, 11), 200)
    c = simulate_trace(ChannelNetwork(chans, 12), 200)
    assert a == b and a != c
    assert len(a) == 400


def test_always_bad_channel_drops():
    ch = MarkovChannel(T=[[0.5, 0.5], [0.5, 0.5]], e=[1.0, 1.0])
    net = ChannelNetwork([ch], 0)
    assert all(net.transmit()[0] == 0 for _ in range(50))


def test_trace_csv(tmp_path):
    rows = simulate_trace(ChannelNetwork([gilbert_elliot(0.9)], 3), 5)
    path = tmp_path / "trace.csv"
    write_trace_csv(path, rows)
    with open(path, newline="") as fh:
        back = list(csv.reader(fh))
    assert back[0] == ["step", "channel", "state", "delta"]
    assert [tuple(map(int, r)) for r in back[1:]] == rows


def test_perfect_average_with_dead_bad_state_is_infeasible():
    with pytest.raises(ChannelError):
        gilbert_elliot(1.0, bad_dropout=1.0)


def test_channels_are_independent():
    net = ChannelNetwork([gilbert_elliot(0.93), gilbert_elliot(0.93)], 5)
    rows = np.array([d for _, _, _, d in simulate_trace(net, 100_000)]).reshape(-1, 2)
    assert abs(np.corrcoef(rows.T)[0, 1]) < 0.02
