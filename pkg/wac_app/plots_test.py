import math
from xml.etree import ElementTree

import numpy as np
import pytest

from .plot_input_error import PlotInputError
from .plots import PALETTE, Series, color_for, heatmap, line_chart

NS = '{http://www.w3.org/2000/svg}'


def _parse(svg):
    return ElementTree.fromstring(svg.get_svg().split('\n', 1)[1])


def _series(label, offset=0.0, ci=True):
    x = np.arange(1.0, 6.0)
    return Series(label, x, x + offset, np.full(5, 0.5) if ci else None)


class TestLineChart:

    def test_one_line_and_band_per_series(self):
        root = _parse(line_chart([_series('oe-wac'), _series('sac', 1.0)],
                                 'return_mean', 'epoch', 'return'))
        groups = root.findall(f'{NS}g')
        assert [g.find(f'{NS}title').text for g in groups] == ['oe-wac', 'sac']
        for group in groups:
            assert len(group.findall(f'{NS}polyline')) == 1
            assert len(group.findall(f'{NS}polygon')) == 1
        texts = [t.text for t in root.iter(f'{NS}text')]
        assert 'return_mean' in texts and 'oe-wac' in texts

    def test_series_without_ci_has_no_band(self):
        root = _parse(line_chart([_series('sac', ci=False)], 't', 'x', 'y'))
        assert not list(root.iter(f'{NS}polygon'))

    def test_non_finite_points_dropped(self):
        series = Series('a', np.array([1.0, 2.0, 3.0]),
                        np.array([1.0, math.nan, 3.0]),
                        np.array([0.1, 0.1, math.nan]))
        root = _parse(line_chart([series], 't', 'x', 'y'))
        points = next(root.iter(f'{NS}polyline')).get('points').split()
        assert len(points) == 2

    def test_nothing_finite(self):
        series = Series('a', np.array([1.0]), np.array([math.nan]))
        with pytest.raises(PlotInputError):
            line_chart([series], 't', 'x', 'y')
        with pytest.raises(PlotInputError):
            line_chart([], 't', 'x', 'y')

    def test_single_point(self):
        series = Series('a', np.array([1.0]), np.array([2.0]))
        assert '<polyline' in line_chart([series], 't', 'x', 'y').get_svg()

    def test_labels_are_escaped(self):
        svg = line_chart([_series('lambda<0.6 & rho')], 't', 'x', 'y')
        assert 'lambda&lt;0.6 &amp; rho' in svg.get_svg()
        _parse(svg)

    def test_output_is_deterministic(self):
        def render():
            return line_chart([_series('a'), _series('b', 2.0)], 't', 'x',
                              'y').get_svg()
        assert render() == render()

    def test_colors_cycle(self):
        assert color_for(0) == PALETTE[0]
        assert color_for(len(PALETTE)) == PALETTE[0]


class TestHeatmap:

    def test_one_cell_per_entry(self):
        matrix = np.arange(9.0).reshape(3, 3)
        root = _parse(heatmap(matrix, 0.0, 8.0, 'sigma'))
        cells = [g for g in root.findall(f'{NS}g') if g.get('class') == 'cells']
        rects = cells[0].findall(f'{NS}rect')
        assert len(rects) == 9
        # matrix[0, 0] is the bottom-left cell and the lowest colour.
        bottom_left = max((r for r in rects if float(r.get('x')) == min(
            float(q.get('x')) for q in rects)), key=lambda r: float(r.get('y')))
        assert bottom_left.get('fill') == '#440154'

    def test_missing_values_are_grey(self):
        matrix = np.array([[math.nan, 1.0], [0.0, 1.0]])
        assert 'fill="#ccc"' in heatmap(matrix, 0.0, 1.0, 't').get_svg()

    def test_colorbar_ticks(self):
        root = _parse(heatmap(np.eye(2), 0.0, 4.0, 't'))
        bar = [g for g in root.findall(f'{NS}g') if g.get('class') == 'colorbar']
        assert [t.text for t in bar[0].findall(f'{NS}text')] == ['0', '2', '4']

    @pytest.mark.parametrize('matrix, vmin, vmax', [
        (np.zeros((2, 3)), 0.0, 1.0),
        (np.zeros((0, 0)), 0.0, 1.0),
        (np.zeros((2, 2)), 1.0, 1.0),
    ])
    def test_invalid(self, matrix, vmin, vmax):
        with pytest.raises(PlotInputError):
            heatmap(matrix, vmin, vmax, 't')
