import logging

import numpy as np
import pytest
from scipy.stats import chisquare

from .config_error import ConfigError
from .constants import ENV_IDS, REWARD_KINDS
from .environment_fault_error import EnvironmentFaultError
from .envs import (LqgEnv, PointEnv, RiverswimEnv, denormalize, load_layout,
                   lqg_step, make_env, normalize, normalize_action,
                   point_step, riverswim_direction_probs, riverswim_step)


class TestRiverswim:

    @pytest.mark.parametrize('action, expected', [
        (-1.0, (1.0, 0.0, 0.0)),
        (0.0, (0.1, 0.9, 0.0)),
        (1.0, (0.1, 0.6, 0.3)),
    ])
    def test_direction_probabilities_at_anchor_actions(self, action, expected):
        assert riverswim_direction_probs(action) == expected

    @pytest.mark.parametrize('action', np.linspace(-1, 1, 21))
    def test_probabilities_sum_to_one(self, action):
        probs = riverswim_direction_probs(float(action))
        assert min(probs) >= 0.0
        assert sum(probs) == pytest.approx(1.0, abs=1e-12)

    def test_rejects_out_of_range_action(self):
        with pytest.raises(ValueError):
            riverswim_direction_probs(1.5)

    def test_sampled_directions_follow_probabilities(self):
        rng = np.random.default_rng(7)
        action, n = 0.5, 20000
        counts = np.zeros(3)
        for _ in range(n):
            t = riverswim_step(10.0, action, rng)
            counts[int(round((t.next_state[0] - 10.0) / action)) + 1] += 1
        expected = n * np.array(riverswim_direction_probs(action))
        assert chisquare(counts, expected).pvalue > 1e-3

    def test_rewards(self):
        rng = np.random.default_rng(0)
        assert riverswim_step(0.5, -1.0, rng).reward == 5e-4
        assert riverswim_step(24.5, 0.5, rng).reward == 1.0
        assert riverswim_step(24.5, -0.5, rng).reward == 0.0
        assert riverswim_step(12.0, 1.0, rng).reward == 0.0

    def test_state_stays_in_bounds(self):
        rng = np.random.default_rng(0)
        assert riverswim_step(0.0, -1.0, rng).next_state[0] == 0.0
        for _ in range(50):
            assert 0.0 <= riverswim_step(25.0, 1.0, rng).next_state[0] <= 25.0

    def test_never_terminal(self):
        env = RiverswimEnv(horizon=5)
        rng = np.random.default_rng(0)
        env.reset(rng)
        for _ in range(5):
            assert not env.step([1.0], rng).terminal


class TestLqg:

    def test_noiseless_step(self):
        t = lqg_step(1.0, 0.5, None)
        assert t.next_state[0] == 1.5
        assert t.reward == pytest.approx(-(0.9 * 1.0 + 0.9 * 0.25))

    def test_state_clipped(self):
        assert lqg_step(3.8, 1.0, None).next_state[0] == 4.0
        assert lqg_step(-3.8, -1.0, None).next_state[0] == -4.0

    def test_noise_moments(self):
        rng = np.random.default_rng(3)
        draws = np.array([lqg_step(0.0, 0.0, rng).next_state[0]
                          for _ in range(20000)])
        assert abs(draws.mean()) < 0.03
        assert draws.var() == pytest.approx(0.5, abs=0.03)

    def test_env_clips_actions_and_starts_on_border(self):
        env = LqgEnv(noise_variance=0.0)
        rng = np.random.default_rng(0)
        start = env.reset(rng)
        assert abs(start[0]) == 4.0
        t = env.step([5.0], rng)
        assert t.action[0] == 1.0
        assert env.spec.r_min == pytest.approx(-(0.9 * 16 + 0.9))


class TestEpisodes:

    def test_step_before_reset(self):
        with pytest.raises(EnvironmentFaultError):
            RiverswimEnv().step([0.0], np.random.default_rng(0))

    def test_truncation_is_not_termination(self):
        env = RiverswimEnv(horizon=3)
        rng = np.random.default_rng(0)
        env.reset(rng)
        transitions = [env.step([0.0], rng) for _ in range(3)]
        assert env.done and env.is_truncated()
        assert not any(t.terminal for t in transitions)
        with pytest.raises(EnvironmentFaultError):
            env.step([0.0], rng)

    def test_episode_return_accumulates(self):
        env = LqgEnv(noise_variance=0.0)
        rng = np.random.default_rng(0)
        env.reset(rng)
        rewards = [env.step([0.0], rng).reward for _ in range(4)]
        assert env.episode_return == pytest.approx(sum(rewards))
        env.reset(rng)
        assert env.episode_return == 0.0


class TestNormalize:

    def test_cube_corners(self):
        spec = LqgEnv().spec
        np.testing.assert_array_equal(normalize(spec, [4.0], [-1.0]),
                                      [1.0, -1.0])
        np.testing.assert_array_equal(normalize(spec, [0.0], [0.0]),
                                      [0.0, 0.0])

    def test_denormalize_inverts(self):
        spec = make_env(ENV_IDS.POINT1).spec
        state, action = np.array([3.0, 7.0, -1.0, 0.5]), np.array([0.2, -0.4])
        back_state, back_action = denormalize(spec,
                                              normalize(spec, state, action))
        np.testing.assert_allclose(back_state, state)
        np.testing.assert_allclose(back_action, action)

    def test_out_of_bounds_is_clipped_with_warning(self, caplog):
        spec = LqgEnv().spec
        with caplog.at_level(logging.WARNING, logger='wac'):
            point = normalize_action(spec, [2.0])
        assert point[0] == 1.0
        assert 'clipping' in caplog.text


class TestPoint:

    def test_wall_stops_motion_and_velocity(self):
        layout = make_env(ENV_IDS.POINT2).layout
        t = point_step([5.95, 3.0, 2.0, 0.0], [1.0, 0.0], layout,
                       REWARD_KINDS.DENSE)
        assert t.next_state[0] == 6.0
        assert t.next_state[2] == 0.0

    def test_passes_beside_the_wall(self):
        layout = make_env(ENV_IDS.POINT2).layout
        t = point_step([5.95, 8.0, 2.0, 0.0], [1.0, 0.0], layout,
                       REWARD_KINDS.DENSE)
        assert t.next_state[0] > 6.0
        assert t.next_state[2] == 2.0

    def test_bounds_stop_motion(self):
        layout = make_env(ENV_IDS.POINT1).layout
        t = point_step([0.05, 5.0, -2.0, 0.0], [-1.0, 0.0], layout,
                       REWARD_KINDS.DENSE)
        assert t.next_state[0] == 0.0
        assert t.next_state[2] == 0.0

    def test_goal_terminates(self):
        layout = make_env(ENV_IDS.POINT1).layout
        dense = point_step([17.5, 5.0, 0.0, 0.0], [0.0, 0.0], layout,
                           REWARD_KINDS.DENSE)
        assert dense.terminal
        assert dense.reward == pytest.approx(-0.5)
        sparse = point_step([2.0, 5.0, 0.0, 0.0], [0.0, 0.0], layout,
                            REWARD_KINDS.SPARSE)
        assert not sparse.terminal
        assert sparse.reward == -1.0

    @pytest.mark.parametrize('env_id', ENV_IDS.POINTS)
    def test_layouts_load_and_reset_in_start_region(self, env_id):
        env = make_env(env_id)
        assert isinstance(env, PointEnv)
        assert env.spec.episodic
        rng = np.random.default_rng(0)
        for _ in range(20):
            x, y, vx, vy = env.reset(rng)
            s = env.layout.start_region
            assert s.x <= x <= s.x1 and s.y <= y <= s.y1
            assert (vx, vy) == (0.0, 0.0)

    def test_start_inside_wall_rejected(self):
        env = make_env(ENV_IDS.POINT2)
        with pytest.raises(EnvironmentFaultError):
            env.start_at([6.2, 3.0, 0.0, 0.0])

    def test_physics_override(self):
        env = make_env(ENV_IDS.POINT1, {'physics': {'dt': 0.2},
                                        'reward_kind': REWARD_KINDS.SPARSE})
        assert env.physics.dt == 0.2
        assert env.spec.r_min == env.spec.r_max == -1.0


class TestLayoutFiles:

    def _write(self, tmp_path, text):
        path = tmp_path / 'maze.yaml'
        path.write_text(text)
        return str(path)

    def test_missing_key(self, tmp_path):
        path = self._write(tmp_path, 'name: broken\nwalls: []\n')
        with pytest.raises(ConfigError):
            load_layout(path)

    def test_goal_inside_wall(self, tmp_path):
        path = self._write(tmp_path, '\n'.join([
            'name: broken',
            'bounds: {x: 0, y: 0, width: 20, height: 10}',
            'walls: [{x: 17, y: 4, width: 2, height: 2}]',
            'start_region: {x: 1, y: 4, width: 1, height: 2}',
            'goal: {center: [18, 5], radius: 2}',
        ]))
        with pytest.raises(ConfigError, match='goal'):
            load_layout(path)

    def test_custom_layout_through_make_env(self, tmp_path):
        path = self._write(tmp_path, '\n'.join([
            'name: open',
            'bounds: {x: 0, y: 0, width: 10, height: 10}',
            'walls: []',
            'start_region: {x: 1, y: 1, width: 1, height: 1}',
            'goal: {center: [8, 8], radius: 1}',
        ]))
        env = make_env(ENV_IDS.POINT1, {'layout': path})
        assert env.spec.name == 'open'
        assert env.layout.walls == ()


def test_unknown_env():
    with pytest.raises(ConfigError):
        make_env('cartpole')
