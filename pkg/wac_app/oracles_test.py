import numpy as np
import pytest

from .gaussq import GaussianPosterior, ValueBounds
from .oracles import (CHECKS, OracleResult, oracle_check, sgd_wtd_step,
                      tabular_critic)
from .tabular_oracle import PosteriorTable, wtd_update


class TestChecks:

    @pytest.mark.parametrize('name, check, tolerance', CHECKS,
                             ids=[c[0] for c in CHECKS])
    def test_within_tolerance(self, name, check, tolerance):
        error = check(np.random.default_rng(3))
        assert np.isfinite(error)
        assert error <= tolerance, name

    def test_oracle_check_passes(self):
        results = oracle_check(seed=0)
        assert [r.name for r in results] == [c[0] for c in CHECKS]
        assert all(r.passed for r in results)

    def test_result_threshold(self):
        assert OracleResult('x', 1e-6, 1e-6).passed
        assert not OracleResult('x', 2e-6, 1e-6).passed


class TestTabularCritic:

    def test_reads_back_the_table(self):
        means = np.array([[1.0, -2.0], [0.5, 3.0]])
        stds = np.array([[0.1, 0.2], [0.3, 0.4]])
        critic = tabular_critic(means, stds)
        np.testing.assert_array_equal(critic.mean_net.params['mean.w'][:, 0],
                                      means.reshape(-1))
        np.testing.assert_array_equal(critic.std_net.params['std.w'][:, 0],
                                      stds.reshape(-1))

    def test_single_step_matches_closed_form(self):
        table = PosteriorTable(2, 1, ValueBounds(0.0, 1.0))
        table.means[:, 0] = [0.0, 10.0]
        table.stds[:, 0] = [1.0, 2.0]
        critic = tabular_critic(table.means.copy(), table.stds.copy())
        sgd_wtd_step(critic, 0, 2, GaussianPosterior(6.0, 1.0), 0.5)
        expected = wtd_update(table, 0, 0, 1.0, 1, 0, 0.5, 0.5)
        assert critic.mean_net.params['mean.w'][0, 0] == \
            pytest.approx(expected.mean)
        assert critic.std_net.params['std.w'][0, 0] == \
            pytest.approx(expected.std)
        # The untouched entry keeps its value.
        assert critic.mean_net.params['mean.w'][1, 0] == 10.0
