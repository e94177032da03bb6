import logging
import math

import numpy as np
import pandas as pd
import pytest

from .agents import DistributionalCritic
from .constants import CSV
from .diff_engine import Head, Mlp
from .metrics import (CoverageGrid, EpochRecord, RunLog, confidence_half_width,
                      coverage, default_bins, grid_frame, merge_runs,
                      probe_points, read_numeric_csv, record_visit,
                      sigma_probe, sigma_visit_correlation, visit_map)
from .plot_input_error import PlotInputError


def _record(epoch, **values):
    data = dict(epoch=epoch, return_mean=-1.0, return_ci95=0.5,
                episodes_completed=0, coverage=0.1, alpha=0.2,
                sigma_visited_mean=1.0, sigma_synthetic_mean=2.0,
                critic_loss=0.3, actor_loss=0.4)
    data.update(values)
    return EpochRecord(**data)


def _linear_sigma_critic(weights):
    """Critic without hidden layers whose sigma is softplus(weights . x)."""
    rng = np.random.default_rng(0)
    dim = len(weights)
    mean_net = Mlp('probe.mean', [dim], [Head('mean', 1)], rng)
    std_net = Mlp('probe.std', [dim], [Head('std', 1, 'softplus')], rng)
    std_net.params['std.w'][:, 0] = weights
    std_net.params['std.b'][...] = 0.0
    return DistributionalCritic.from_networks('probe', mean_net, std_net)


class TestCoverageGrid:

    def test_default_bins(self):
        assert default_bins(2) == 50
        assert default_bins(6) == 8

    def test_cell_edges(self):
        grid = CoverageGrid(2, 50)
        assert grid.cell([-1.0, -1.0]) == (0, 0)
        assert grid.cell([1.0, 1.0]) == (49, 49)
        assert grid.cell([0.0, -0.999]) == (25, 0)

    def test_out_of_cube_visit_is_clipped(self, caplog):
        grid = CoverageGrid(2, 10)
        with caplog.at_level(logging.WARNING, logger='wac'):
            record_visit(grid, [1.5, -3.0])
        assert grid.counts[9, 0] == 1
        assert 'outside the unit cube' in caplog.text

    def test_uniform_visits_fill_cells_evenly(self):
        grid = CoverageGrid(2, 50)
        points = np.random.default_rng(0).uniform(-1, 1, (100000, 2))
        for point in points:
            grid.record_visit(point)
        assert grid.total_steps == 100000
        # 40 expected per cell, standard deviation about 6.3.
        assert grid.counts.min() > 40 - 5 * 6.33
        assert grid.counts.max() < 40 + 5 * 6.33
        assert coverage(grid, 1e-4) == 1.0

    def test_epsilon_threshold(self):
        grid = CoverageGrid(2, 50)
        for _ in range(10000):
            grid.record_visit([0.5, 0.5])
        grid.record_visit([-0.5, -0.5])
        # The single visit has frequency 1 / 10001 < 1e-4.
        assert coverage(grid, 1e-4) == pytest.approx(1 / 2500)
        assert coverage(grid, 1e-5) == pytest.approx(2 / 2500)

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            CoverageGrid(2, 5).coverage(1e-4)

    def test_wrong_dimension(self):
        with pytest.raises(ValueError):
            CoverageGrid(2, 5).record_visit([0.0, 0.0, 0.0])

    def test_visit_map_marginalizes(self):
        grid = CoverageGrid(3, 4)
        grid.record_visit([-0.9, 0.9, -0.9])
        grid.record_visit([-0.9, 0.9, 0.9])
        counts = visit_map(grid, (0, 1))
        assert counts.shape == (4, 4)
        assert counts[0, 3] == 2 and counts.sum() == 2
        assert visit_map(grid, (1, 0))[3, 0] == 2


class TestConfidence:

    def test_half_width(self):
        assert confidence_half_width([1.0, 2.0, 3.0]) == \
            pytest.approx(1.96 / math.sqrt(3.0))

    def test_fewer_than_two_values(self):
        assert confidence_half_width([4.0]) == 0.0
        assert confidence_half_width([]) == 0.0

    def test_nan_ignored(self):
        assert confidence_half_width([1.0, math.nan, 3.0]) == \
            pytest.approx(1.96 * math.sqrt(2.0) / math.sqrt(2.0))


class TestRunLog:

    def test_epochs_must_increase(self):
        run_log = RunLog([_record(1)])
        with pytest.raises(ValueError):
            run_log.append(_record(1))

    def test_csv_round_trip_with_missing_values(self, tmp_path):
        path = str(tmp_path / 'metrics.csv')
        RunLog([_record(1, critic_loss=math.nan),
                _record(2, actor_loss=math.nan)]).write_csv(path)
        with open(path) as file:
            header = file.readline().strip()
            first = file.readline().strip()
        assert header == ','.join(CSV.EPOCH_COLUMNS)
        assert ',,' in first
        restored = RunLog.read_csv(path)
        assert len(restored) == 2
        assert math.isnan(restored.records[0].critic_loss)
        assert restored.records[1].critic_loss == 0.3
        assert restored.records[1].epoch == 2

    def test_rejects_non_numeric_cells(self, tmp_path):
        path = tmp_path / 'metrics.csv'
        frame = RunLog([_record(1), _record(2)]).to_frame()
        frame['coverage'] = frame['coverage'].astype(object)
        frame.loc[1, 'coverage'] = 'lots'
        frame.to_csv(path, index=False)
        with pytest.raises(PlotInputError, match='row 3, column coverage'):
            read_numeric_csv(str(path), CSV.EPOCH_COLUMNS)

    def test_rejects_missing_columns(self, tmp_path):
        path = tmp_path / 'metrics.csv'
        path.write_text('epoch,return_mean\n1,2\n')
        with pytest.raises(PlotInputError, match='missing columns'):
            read_numeric_csv(str(path), CSV.EPOCH_COLUMNS)


class TestMergeRuns:

    def test_mean_and_half_width_per_epoch(self):
        frames = [RunLog([_record(1, return_mean=r), _record(2, return_mean=r)])
                  .to_frame() for r in (1.0, 2.0, 3.0)]
        merged = merge_runs(frames)
        assert list(merged['epoch']) == [1, 2]
        assert list(merged['n_seeds']) == [3, 3]
        assert merged['return_mean_mean'].tolist() == pytest.approx([2.0, 2.0])
        assert merged['return_mean_ci95'].tolist() == \
            pytest.approx([1.96 / math.sqrt(3.0)] * 2)
        assert 'return_ci95_mean' not in merged.columns
        assert merged['coverage_ci95'].tolist() == pytest.approx([0.0, 0.0],
                                                         abs=1e-12)

    def test_all_missing_metric_stays_missing(self):
        frames = [RunLog([_record(1, critic_loss=math.nan)]).to_frame()
                  for _ in range(2)]
        merged = merge_runs(frames)
        assert math.isnan(merged['critic_loss_mean'][0])

    def test_nothing_to_merge(self):
        with pytest.raises(ValueError):
            merge_runs([])


class TestSigmaProbe:

    def test_probe_points(self):
        centres, points = probe_points(3, 4, (0, 2), fixed=[0.0, 0.7, 0.0])
        np.testing.assert_allclose(centres, [-0.75, -0.25, 0.25, 0.75])
        assert points.shape == (16, 3)
        np.testing.assert_array_equal(points[:, 1], 0.7)
        np.testing.assert_allclose(points[1], [-0.75, 0.7, -0.25])

    def test_fresh_critic_probes_near_prior(self, rng):
        critic = DistributionalCritic('critic1', 2, (32,), 50.0, rng)
        matrix = sigma_probe([critic], 2, resolution=20)
        assert matrix.shape == (20, 20)
        assert np.all(np.abs(matrix - 50.0) <= 2.5)

    def test_probe_follows_axis_layout(self):
        critic = _linear_sigma_critic([1.0, 0.0])
        matrix = sigma_probe([critic], 2, resolution=5)
        assert np.all(np.diff(matrix, axis=0) > 0)
        np.testing.assert_allclose(np.diff(matrix, axis=1), 0.0)

    def test_sigma_falls_where_visits_rise(self):
        critic = _linear_sigma_critic([1.0, 0.0])
        grid = CoverageGrid(2, 10)
        _, points = probe_points(2, 10, (0, 1))
        for point in points:
            cell = grid.cell(point)
            for _ in range(10 - cell[0]):
                grid.record_visit(point)
        assert sigma_visit_correlation([critic], grid) == pytest.approx(-1.0)

    def test_sigma_on_zero_slice_against_marginal_visits(self):
        # Every visit lies at axis 2 = 0.95, far from the zero slice sigma is
        # read on; the marginal still lines up with the slice.
        critic = _linear_sigma_critic([1.0, 0.0, 5.0])
        grid = CoverageGrid(3, 10)
        _, points = probe_points(3, 10, (0, 1), fixed=[0.0, 0.0, 0.95])
        for point in points:
            for _ in range(10 - grid.cell(point)[0]):
                grid.record_visit(point)
        assert grid.counts[:, :, :9].sum() == 0
        assert sigma_visit_correlation([critic], grid) == pytest.approx(-1.0)

    def test_grid_frame(self):
        frame = grid_frame(np.arange(4.0).reshape(2, 2), 'sigma', sigma0=9.0)
        assert list(frame.columns) == ['u', 'v', 'sigma', 'sigma0']
        row = frame[(frame['u'] == 0.5) & (frame['v'] == -0.5)]
        assert row['sigma'].item() == 2.0
        assert isinstance(frame, pd.DataFrame)
