import numpy as np
import pytest

from .gaussq import GaussianPosterior, ValueBounds, prior_std
from .tabular_oracle import (DiscreteMdp, PosteriorTable, discrete_riverswim,
                             polynomial_lr, value_iteration, wql_run,
                             wtd_update)

LEFT, RIGHT = 0, 1


def _self_loop(gamma: float = 0.9) -> DiscreteMdp:
    return DiscreteMdp(np.ones((1, 1, 1)), np.array([[1.0]]), gamma,
                       np.array([False]), np.array([1.0]))


class TestPosteriorTable:

    def test_prior_from_bounds(self):
        table = PosteriorTable(3, 2, ValueBounds(0.0, 12.0))
        np.testing.assert_array_equal(table.means, 6.0)
        np.testing.assert_allclose(table.stds, np.sqrt(12.0))
        assert table.visits.sum() == 0

    def test_upper_bounds(self):
        table = PosteriorTable(1, 2, ValueBounds(0.0, 12.0))
        table.means[0] = [1.0, 2.0]
        table.stds[0] = [4.0, 0.0]
        np.testing.assert_allclose(table.upper_bounds(0, 0.5), [1.0, 2.0])
        assert table.upper_bounds(0, 0.95)[0] > 2.0


class TestWtdUpdate:

    def test_moves_to_barycenter(self):
        table = PosteriorTable(2, 1, ValueBounds(0.0, 1.0))
        table.means[:, 0] = [0.0, 10.0]
        table.stds[:, 0] = [1.0, 2.0]
        updated = wtd_update(table, 0, 0, 1.0, 1, 0, 0.5, 0.5)
        # target N(1 + 0.5 * 10, (0.5 * 2)^2) = N(6, 1)
        assert updated == GaussianPosterior(3.0, 1.0)
        assert table.posterior(0, 0) == updated
        assert table.posterior(1, 0) == GaussianPosterior(10.0, 2.0)

    def test_terminal_target_is_point_mass(self):
        table = PosteriorTable(2, 1, ValueBounds(0.0, 1.0))
        table.stds[:] = 2.0
        updated = wtd_update(table, 0, 0, 1.0, 1, 0, 1.0, 0.9, terminal=True)
        assert updated == GaussianPosterior(1.0, 0.0)

    def test_zero_rate_is_identity(self):
        table = PosteriorTable(2, 1, ValueBounds(-3.0, 5.0))
        before = table.posterior(0, 0)
        assert wtd_update(table, 0, 0, 9.0, 1, 0, 0.0, 0.9) == before

    def test_rejects_bad_rate(self):
        table = PosteriorTable(1, 1, ValueBounds(0.0, 1.0))
        with pytest.raises(ValueError):
            wtd_update(table, 0, 0, 0.0, 0, 0, 1.5, 0.9)

    def test_self_loop_contracts_std(self):
        mdp = _self_loop()
        table = PosteriorTable(1, 1, mdp.value_bounds())
        table.stds[:] = 1.0
        stds = []
        for visits in range(200):
            wtd_update(table, 0, 0, 1.0, 0, 0, polynomial_lr()(visits),
                       mdp.gamma)
            stds.append(table.stds[0, 0])
        assert all(b < a for a, b in zip(stds, stds[1:]))


class TestValueIteration:

    def test_self_loop_geometric_sum(self):
        assert value_iteration(_self_loop())[0, 0] == pytest.approx(10.0)

    def test_riverswim_fixed_point(self):
        mdp = discrete_riverswim()
        q = value_iteration(mdp)
        backup = mdp.rewards + mdp.gamma * mdp.transitions @ q.max(axis=1)
        np.testing.assert_allclose(q, backup, atol=1e-9)
        assert np.all(q.argmax(axis=1) == RIGHT)

    def test_terminal_states_have_no_future(self):
        p = np.zeros((2, 1, 2))
        p[:, 0, 1] = 1.0
        mdp = DiscreteMdp(p, np.array([[1.0], [5.0]]), 0.9,
                          np.array([False, True]), np.array([1.0, 0.0]))
        q = value_iteration(mdp)
        assert q[0, 0] == pytest.approx(1.0)

    def test_rejects_unnormalized_transitions(self):
        with pytest.raises(ValueError):
            DiscreteMdp(np.full((1, 1, 2), 0.6), np.zeros((1, 1)), 0.9,
                        np.array([False]), np.array([1.0]))


def test_polynomial_lr():
    lr = polynomial_lr(0.8)
    assert lr(0) == 1.0
    assert lr(3) == pytest.approx(0.25 ** 0.8)
    assert polynomial_lr()(3) == pytest.approx(0.25 ** 0.7)


class TestWql:

    def test_stds_never_exceed_prior(self):
        mdp = discrete_riverswim()
        table, returns = wql_run(mdp, 50, 0.95, None,
                                 np.random.default_rng(0))
        sigma0 = prior_std(mdp.value_bounds())
        assert len(returns) == 50
        assert table.visits.sum() == 50 * 20
        assert np.all(table.stds <= sigma0 + 1e-12)
        assert np.all(np.isfinite(table.means))

    def test_seeded_runs_are_identical(self):
        mdp = discrete_riverswim()
        a, ra = wql_run(mdp, 20, 0.95, None, np.random.default_rng(4))
        b, rb = wql_run(mdp, 20, 0.95, None, np.random.default_rng(4))
        assert ra == rb
        np.testing.assert_array_equal(a.means, b.means)
        np.testing.assert_array_equal(a.stds, b.stds)

    def test_stds_shrink_where_visited(self):
        mdp = discrete_riverswim()
        table, _ = wql_run(mdp, 200, 0.95, None, np.random.default_rng(1))
        sigma0 = prior_std(mdp.value_bounds())
        busy = table.visits >= 50
        assert busy.any()
        assert np.all(table.stds[busy] < sigma0)

    def test_exploring_starts_reach_every_pair(self):
        mdp = discrete_riverswim()
        table, _ = wql_run(mdp, 200, 0.95, None, np.random.default_rng(2),
                           horizon=1)
        assert np.all(table.visits > 0)

    def test_initial_distribution_without_exploring_starts(self):
        mdp = discrete_riverswim()
        table, _ = wql_run(mdp, 200, 0.95, None, np.random.default_rng(2),
                           horizon=1, exploring_starts=False)
        assert table.visits[2:].sum() == 0
        assert table.visits[:2].sum() == 200

    @pytest.mark.slow
    def test_solves_riverswim(self):
        mdp = discrete_riverswim()
        table, _ = wql_run(mdp, 5000, 0.95, None, np.random.default_rng(0))
        q = value_iteration(mdp)
        sigma0 = prior_std(mdp.value_bounds())
        assert np.all(table.means.argmax(axis=1) == RIGHT)
        assert np.abs(table.means - q).max() <= 0.1
        recurrent = table.visits >= 100
        # Exploring starts keep every pair recurrent.
        assert recurrent.all()
        assert table.stds[recurrent].max() <= 0.05 * sigma0
