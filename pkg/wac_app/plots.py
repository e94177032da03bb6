"""Line charts with confidence bands and sigma heatmaps, rendered as SVG."""
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .plot_input_error import PlotInputError
from .svg import SVG

__all__ = ['Series', 'line_chart', 'heatmap', 'color_for']

WIDTH, HEIGHT = 640.0, 400.0
LEFT, RIGHT, TOP, BOTTOM = 70.0, 160.0, 40.0, 50.0
PALETTE = ('#1f77b4', '#d62728', '#2ca02c', '#ff7f0e', '#9467bd',
           '#8c564b', '#e377c2', '#7f7f7f')
# Dark blue to yellow, sampled evenly.
RAMP = ((68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98),
        (253, 231, 37))


@dataclass
class Series:
    label: str
    x: np.ndarray
    mean: np.ndarray
    ci: Optional[np.ndarray] = None

    def finite(self) -> 'Series':
        keep = np.isfinite(self.x) & np.isfinite(self.mean)
        ci = None if self.ci is None else np.nan_to_num(self.ci[keep])
        return Series(self.label, self.x[keep], self.mean[keep], ci)


def _ticks(low: float, high: float, count: int = 5) -> List[float]:
    if high == low:
        return [low]
    return [low + (high - low) * i / (count - 1) for i in range(count)]


def _label(value: float) -> str:
    return f'{value:.3g}'


def line_chart(series: Sequence[Series], title: str, xlabel: str,
               ylabel: str) -> SVG:
    """One line per series, with a shaded mean +/- ci band when given."""
    series = [s.finite() for s in series]
    series = [s for s in series if s.x.size]
    if not series:
        raise PlotInputError(f'{title}: no finite values to plot')
    xs = np.concatenate([s.x for s in series])
    lows = np.concatenate([s.mean - (0 if s.ci is None else s.ci) for s in series])
    highs = np.concatenate([s.mean + (0 if s.ci is None else s.ci) for s in series])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(lows.min()), float(highs.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    plot_w, plot_h = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(x: float) -> float:
        return LEFT + (x - x0) / (x1 - x0) * plot_w

    def py(y: float) -> float:
        return TOP + (1.0 - (y - y0) / (y1 - y0)) * plot_h

    svg = SVG()
    svg.header(WIDTH, HEIGHT)
    svg.filled_rectangle(0, 0, WIDTH, HEIGHT, '#fff')
    svg.text(WIDTH / 2, 22, title, 'text-anchor="middle" font-size="15"')
    svg.line(LEFT, TOP + plot_h, LEFT + plot_w, TOP + plot_h)
    svg.line(LEFT, TOP, LEFT, TOP + plot_h)
    for tick in _ticks(x0, x1):
        svg.line(px(tick), TOP + plot_h, px(tick), TOP + plot_h + 4)
        svg.text(px(tick), TOP + plot_h + 16, _label(tick),
                 'text-anchor="middle" font-size="10"')
    for tick in _ticks(y0, y1):
        svg.line(LEFT - 4, py(tick), LEFT, py(tick))
        svg.text(LEFT - 6, py(tick) + 3, _label(tick),
                 'text-anchor="end" font-size="10"')
    svg.text(LEFT + plot_w / 2, HEIGHT - 12, xlabel,
             'text-anchor="middle" font-size="12"')
    svg.text(16, TOP + plot_h / 2, ylabel,
             f'text-anchor="middle" font-size="12" '
             f'transform="rotate(-90 16 {TOP + plot_h / 2:.2f})"')

    for index, s in enumerate(series):
        color = color_for(index)
        svg.group_start({'class': 'series', 'title': s.label})
        if s.ci is not None:
            upper = [(px(x), py(m + c)) for x, m, c in zip(s.x, s.mean, s.ci)]
            lower = [(px(x), py(m - c)) for x, m, c in zip(s.x, s.mean, s.ci)]
            svg.polygon(upper + lower[::-1], color, 'fill-opacity="0.2"')
        svg.polyline([(px(x), py(m)) for x, m in zip(s.x, s.mean)], color,
                     'stroke-width="1.5"')
        svg.group_end()
        legend_y = TOP + 14 + 18 * index
        svg.filled_rectangle(WIDTH - RIGHT + 12, legend_y - 8,
                             WIDTH - RIGHT + 24, legend_y + 2, color)
        svg.text(WIDTH - RIGHT + 30, legend_y + 1, s.label, 'font-size="11"')
    return svg


def color_for(index: int) -> str:
    return PALETTE[index % len(PALETTE)]


def _ramp(t: float) -> str:
    t = min(max(t, 0.0), 1.0) * (len(RAMP) - 1)
    i = min(int(math.floor(t)), len(RAMP) - 2)
    f = t - i
    r, g, b = (round(a + (c - a) * f) for a, c in zip(RAMP[i], RAMP[i + 1]))
    return f'#{r:02x}{g:02x}{b:02x}'


def heatmap(matrix: np.ndarray, vmin: float, vmax: float, title: str,
            xlabel: str = 'axis 0', ylabel: str = 'axis 1') -> SVG:
    """Square heatmap of matrix[i, j] at (x = i, y = j), with a colorbar."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or not matrix.size:
        raise PlotInputError(f'{title}: expected a square matrix, got {matrix.shape}')
    if not vmax > vmin:
        raise PlotInputError(f'{title}: colour range [{vmin}, {vmax}] is empty')
    n = matrix.shape[0]
    side = min(WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM)
    cell = side / n

    svg = SVG()
    svg.header(WIDTH, HEIGHT)
    svg.filled_rectangle(0, 0, WIDTH, HEIGHT, '#fff')
    svg.text(WIDTH / 2, 22, title, 'text-anchor="middle" font-size="15"')
    svg.group_start({'class': 'cells'})
    for i in range(n):
        for j in range(n):
            value = matrix[i, j]
            fill = '#ccc' if not np.isfinite(value) \
                else _ramp((value - vmin) / (vmax - vmin))
            x = LEFT + i * cell
            y = TOP + (n - 1 - j) * cell
            svg.filled_rectangle(x, y, x + cell, y + cell, fill)
    svg.group_end()
    svg.text(LEFT + side / 2, TOP + side + 20, xlabel,
             'text-anchor="middle" font-size="12"')
    svg.text(LEFT - 20, TOP + side / 2, ylabel,
             f'text-anchor="middle" font-size="12" '
             f'transform="rotate(-90 {LEFT - 20:.2f} {TOP + side / 2:.2f})"')

    bar_x = LEFT + side + 30
    steps = 64
    svg.group_start({'class': 'colorbar'})
    for k in range(steps):
        y = TOP + side * (1.0 - (k + 1) / steps)
        svg.filled_rectangle(bar_x, y, bar_x + 16, y + side / steps,
                             _ramp((k + 0.5) / steps))
    for tick in _ticks(vmin, vmax, 3):
        y = TOP + side * (1.0 - (tick - vmin) / (vmax - vmin))
        svg.line(bar_x + 16, y, bar_x + 20, y)
        svg.text(bar_x + 24, y + 3, _label(tick), 'font-size="10"')
    svg.group_end()
    return svg
