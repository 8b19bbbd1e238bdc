import numpy as np
import pytest

from rwrw_lab.environment import (Box, EnvConfig, ParticleField,
                                  PathObservation, evolve_field,
                                  observation_matches, safe_box_radius,
                                  sample_avoiding_field,
                                  sample_conditioned_field_rejection,
                                  sample_field, sample_initial_counts)
from rwrw_lab.errors import ErrResource, ErrUsage
from rwrw_lab.kernels import dirac, lazy_product, simple, stay


def test_env_config_validation():
    with pytest.raises(ErrUsage):
        EnvConfig(1, -1.0, lazy_product(1), 5)
    with pytest.raises(ErrUsage):
        EnvConfig(2, 1.0, lazy_product(1), 5)
    with pytest.raises(ErrUsage):
        EnvConfig(1, 1.0, lazy_product(1), 0)
    config = EnvConfig(1, 1.0, lazy_product(1), 5, past_depth=3)
    assert config.start_time == -3
    assert config.window_length == 9
    assert config.with_density(0.5).density == 0.5


def test_box_sites():
    box = Box(2, 1, center=(5, 0))
    sites = box.sites()
    assert len(sites) == box.size == 9
    assert box.contains((6, -1))
    assert not box.contains((7, 0))


def test_path_observation_from_increments():
    history = PathObservation.from_increments([[1], [1], [-1]], [1, 0, 1])
    assert history.positions[:, 0].tolist() == [-1, 0, 1]
    assert history.position_at(-1).tolist() == [1]
    assert history.bit_at(-3) == 1
    assert history.occupied_positions() == [1, 3]
    assert history.vacant_positions() == [2]
    assert history.increments().tolist() == [[1], [1], [-1]]
    assert history.is_admissible([(1,), (-1,)])
    assert not history.is_admissible([(1,)])
    assert history.constraints().n == 3
    assert history.to_dict()["sigma"] == "101"


def test_path_observation_errors():
    with pytest.raises(ErrUsage):
        PathObservation([[0]], [1, 0])
    with pytest.raises(ErrUsage):
        PathObservation([[0]], [2])
    with pytest.raises(ErrUsage):
        PathObservation.empty(1).position_at(-1)


def test_initial_counts_are_poisson():
    rng = np.random.default_rng(5)
    config = EnvConfig(1, 2.0, lazy_product(1), 1)
    counts = sample_initial_counts(config, Box(1, 5000), rng)
    assert counts.counts.mean() == pytest.approx(2.0, abs=0.05)
    assert counts.counts.var() == pytest.approx(2.0, abs=0.15)


def test_evolve_field_follows_kernel():
    rng = np.random.default_rng(0)
    config = EnvConfig(1, 1.0, dirac((2,)), 1)
    counts = sample_initial_counts(config, Box(1, 3), rng)
    field = evolve_field(counts, dirac((2,)), 3, rng)
    assert field.size == counts.total()
    assert np.array_equal(field.positions_at(3), field.positions_at(0) + 6)
    assert field.count((100,), 0) == 0


def test_stationarity_of_field_counts():
    rng = np.random.default_rng(11)
    config = EnvConfig(1, 1.5, simple(1), 10, past_depth=2)
    means = [sample_field(config, 0, rng).counts_at(np.array([[0]]), 10)[0] for _ in range(1000)]
    assert np.mean(means) == pytest.approx(1.5, abs=0.15)


def test_safe_box_radius():
    config = EnvConfig(2, 1.0, lazy_product(2), 10, past_depth=4)
    assert safe_box_radius(config, 3) == 17


def test_hitting_and_avoiding():
    trajectories = np.array([[[0], [0]], [[1], [1]], [[0], [1]]])
    field = ParticleField(trajectories, start_time=-1)
    mask = field.hitting_mask([(-1, (0,))])
    assert mask.tolist() == [True, False, True]
    assert field.without_hitting([(0, (1,))]).size == 1


def test_avoiding_field_misses_history():
    rng = np.random.default_rng(2)
    config = EnvConfig(1, 3.0, stay(1), 1, past_depth=2)
    history = PathObservation.from_increments([[0], [0]], [0, 0])
    field = sample_avoiding_field(config, history, 2, rng)
    assert field.count((0,), -1) == 0
    assert field.count((0,), 0) == 0


def test_conditioned_field_matches_observation():
    rng = np.random.default_rng(3)
    config = EnvConfig(1, 1.0, lazy_product(1), 2, past_depth=2)
    history = PathObservation.from_increments([[1], [0]], [1, 0])
    field = sample_conditioned_field_rejection(config, history, 1, rng)
    assert observation_matches(field, history)


def test_conditioned_field_on_null_event_exhausts():
    rng = np.random.default_rng(4)
    config = EnvConfig(1, 0.0, lazy_product(1), 1, past_depth=1)
    history = PathObservation.from_increments([[0]], [1])
    with pytest.raises(ErrResource):
        sample_conditioned_field_rejection(config, history, 0, rng, max_attempts=20)


def test_history_longer_than_past_depth():
    config = EnvConfig(1, 1.0, lazy_product(1), 2, past_depth=1)
    history = PathObservation.from_increments([[0], [0]], [0, 0])
    with pytest.raises(ErrUsage):
        sample_avoiding_field(config, history, 0, np.random.default_rng(0))
