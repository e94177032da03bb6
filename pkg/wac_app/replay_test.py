import numpy as np
import pytest

from .envs import LqgEnv, Transition
from .replay import ReplayBuffer, synthetic_batch, synthetic_count


def _transition(i: int) -> Transition:
    return Transition(np.array([float(i)]), np.array([0.0]), float(i),
                      np.array([float(i + 1)]), terminal=i % 2 == 0)


def _filled(capacity: int, n: int) -> ReplayBuffer:
    buffer = ReplayBuffer(capacity, 1, 1)
    for i in range(n):
        buffer.push(_transition(i))
    return buffer


class TestReplayBuffer:

    def test_keeps_insertion_order_until_full(self):
        buffer = _filled(5, 3)
        assert len(buffer) == 3
        np.testing.assert_array_equal(buffer.contents().rewards, [0, 1, 2])

    def test_overwrites_oldest_first(self):
        buffer = _filled(3, 5)
        assert len(buffer) == 3
        contents = buffer.contents()
        np.testing.assert_array_equal(contents.rewards, [2, 3, 4])
        np.testing.assert_array_equal(contents.terminals, [True, False, True])

    def test_sample_is_uniform_with_replacement(self):
        buffer = _filled(4, 4)
        batch = buffer.sample_batch(8000, np.random.default_rng(0))
        assert len(batch) == 8000
        counts = np.bincount(batch.rewards.astype(int), minlength=4)
        assert counts.min() > 1800 and counts.max() < 2200

    def test_sample_rows_stay_aligned(self):
        batch = _filled(10, 10).sample_batch(50, np.random.default_rng(1))
        np.testing.assert_array_equal(batch.states[:, 0], batch.rewards)
        np.testing.assert_array_equal(batch.next_states[:, 0],
                                      batch.rewards + 1)

    def test_sampling_is_seeded(self):
        buffer = _filled(10, 10)
        a = buffer.sample_batch(5, np.random.default_rng(3))
        b = buffer.sample_batch(5, np.random.default_rng(3))
        np.testing.assert_array_equal(a.rewards, b.rewards)

    def test_empty_buffer(self):
        with pytest.raises(ValueError):
            ReplayBuffer(4, 1, 1).sample_batch(1, np.random.default_rng(0))
        with pytest.raises(ValueError):
            ReplayBuffer(0, 1, 1)

    def test_state_dict_round_trip(self):
        buffer = _filled(4, 6)
        clone = ReplayBuffer(4, 1, 1)
        clone.load_state_dict(buffer.state_dict())
        np.testing.assert_array_equal(clone.contents().rewards,
                                      buffer.contents().rewards)
        clone.push(_transition(6))
        buffer.push(_transition(6))
        np.testing.assert_array_equal(clone.contents().rewards, [3, 4, 5, 6])

    def test_batch_transitions(self):
        transitions = _filled(3, 2).contents().transitions()
        assert [t.reward for t in transitions] == [0.0, 1.0]
        assert transitions[0].terminal and not transitions[1].terminal


class TestSynthetic:

    @pytest.mark.parametrize('rho, n, expected', [
        (0.6, 256, 154), (0.5, 3, 2), (0.0, 256, 0), (1.0, 7, 7),
    ])
    def test_count(self, rho, n, expected):
        assert synthetic_count(rho, n) == expected

    def test_count_rejects_bad_rho(self):
        with pytest.raises(ValueError):
            synthetic_count(1.5, 10)

    def test_batch_covers_normalized_cube(self):
        spec = LqgEnv().spec
        points = synthetic_batch(spec, 5000, np.random.default_rng(0))
        assert points.shape == (5000, 2)
        assert points.min() >= -1.0 and points.max() <= 1.0
        np.testing.assert_allclose(points.mean(axis=0), 0.0, atol=0.05)

    def test_empty_batch(self):
        spec = LqgEnv().spec
        assert synthetic_batch(spec, 0, np.random.default_rng(0)).shape == (0, 2)
