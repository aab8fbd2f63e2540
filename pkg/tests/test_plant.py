import numpy as np
import pytest
import scipy.linalg

from ncsched.plant import (ConfigurationError, GenerationConfig, GenerationError, PlantModel, apply_dropouts,
                           check_controllability, check_observability, generate_random_ncs, lqr_gain,
                           lqr_subsystem_costs, spectral_radius, stage_cost, step)


def test_shapes_and_slices(small_plant):
    p = small_plant
    assert (p.N, p.n, p.m) == (3, 6, 3)
    assert p.state_dims == (2, 2, 2) and p.input_dims == (1, 1, 1)
    assert p.B.shape == (6, 3)
    # block-diagonal input matrix
    for i, (s, t) in enumerate(zip(p.state_slices, p.input_slices)):
        np.testing.assert_array_equal(p.B[s, t], p.B_blocks[i])
        assert np.all(np.delete(p.B[:, t], np.r_[s], axis=0) == 0)


def test_matrices_are_read_only(small_plant):
    with pytest.raises(ValueError):
        small_plant.A[0, 0] = 1.0


@pytest.mark.parametrize("kw, msg", [
    (dict(A=np.eye(3)), "A has shape"),
    (dict(W=-np.eye(2)), "W must be"),
    (dict(R=np.zeros((1, 1))), "R must be"),
    (dict(noise_cov=(np.eye(3),)), "noise covariance"),
    (dict(noise_cov=()), "noise covariances"),
])
def test_validation(kw, msg):
    base = dict(A=np.eye(2), B_blocks=(np.ones((2, 1)),), W=np.eye(2), R=np.eye(1), noise_cov=(np.eye(2),))
    base.update(kw)
    with pytest.raises(ConfigurationError, match=msg):
        PlantModel(**base)


def test_step_and_cost(small_plant):
    p = small_plant
    x, u, w = np.arange(6.0), np.array([1.0, -1.0, 0.5]), np.full(6, 0.1)
    np.testing.assert_allclose(step(p, x, u, w), p.A @ x + p.B @ u + w)
    assert stage_cost(p, x, u) == pytest.approx(x @ p.W @ x + u @ p.R @ u)
    with pytest.raises(ConfigurationError):
        step(p, x[:3], u, w)


def test_zero_input_rule(small_plant):
    u = apply_dropouts(small_plant, np.array([1.0, 2.0, 3.0]), np.array([1, 0, 1]))
    np.testing.assert_array_equal(u, [1.0, 0.0, 3.0])
    with pytest.raises(ConfigurationError):
        apply_dropouts(small_plant, np.ones(3), np.ones(2))


def test_controllability_and_observability():
    A = np.diag([1.1, 0.5])
    assert check_controllability(A, np.array([[1.0], [1.0]]))
    assert not check_controllability(A, np.array([[1.0], [0.0]]))
    assert check_observability(A, np.eye(2))
    assert not check_observability(A, np.diag([0.0, 1.0]))


def test_save_and_load(tmp_path, small_plant):
    small_plant.save(tmp_path / "p.txt")
    q = PlantModel.load(tmp_path / "p.txt")
    for name, val in small_plant.to_matrices().items():
        np.testing.assert_array_equal(q.to_matrices()[name], val)


def test_lqr_gain_matches_scipy(small_plant):
    p = small_plant
    K, L = lqr_gain(p)
    K_ref = scipy.linalg.solve_discrete_are(p.A, p.B, p.W, p.R)
    np.testing.assert_allclose(K, K_ref, rtol=1e-10, atol=1e-12)
    assert spectral_radius(p.A - p.B @ L) < 1


def test_subsystem_costs_add_up(small_plant):
    K, _ = lqr_gain(small_plant)
    total = np.trace(K @ small_plant.noise_covariance)
    assert lqr_subsystem_costs(small_plant).sum() == pytest.approx(total, rel=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_generator_invariants(seed):
    cfg = GenerationConfig(n_subsystems=8)
    p = generate_random_ncs(cfg, np.random.default_rng(seed))
    radii = [spectral_radius(p.diagonal_block(i)) for i in range(8)]
    for i, r in enumerate(radii):
        if i < cfg.n_stable:
            assert 0.4 <= r <= 0.95
        else:
            eig = np.sort(np.abs(np.linalg.eigvals(p.diagonal_block(i))))
            assert 1.0 < eig[1] <= 1.5 and 0.4 <= eig[0] <= 0.95
    assert check_controllability(p.A, p.B) and check_observability(p.A, p.W)
    costs = lqr_subsystem_costs(p)
    assert np.all(np.abs(costs - 1) <= cfg.normalize_tol + 1e-12)
    # coupling stays weak and sparse
    off = p.A.copy()
    for s in p.state_slices:
        off[s, s] = 0
    assert np.abs(off).max() <= cfg.coupling_strength


def test_generator_is_seeded():
    a = generate_random_ncs(GenerationConfig(n_subsystems=4, seed=3))
    b = generate_random_ncs(GenerationConfig(n_subsystems=4, seed=3))
    np.testing.assert_array_equal(a.A, b.A)


def test_generator_gives_up():
    cfg = GenerationConfig(n_subsystems=2, input_gain=(0.0, 0.0), max_retries=3)
    with pytest.raises(GenerationError):
        generate_random_ncs(cfg)
