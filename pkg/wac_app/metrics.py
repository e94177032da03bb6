"""Coverage of the state-action cube, per-epoch run logs and sigma probes."""
import math
from dataclasses import asdict, dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import spearmanr

from .agents import min_sigma
from .constants import CSV
from .log import log
from .plot_input_error import PlotInputError

__all__ = [
    'CoverageGrid', 'record_visit', 'coverage', 'default_bins',
    'EpochRecord', 'RunLog', 'confidence_half_width', 'merge_runs',
    'read_numeric_csv', 'probe_points', 'sigma_probe', 'visit_map',
    'sigma_visit_correlation', 'grid_frame',
]


def default_bins(input_dim: int) -> int:
    """50 bins per axis for 2-D spaces, 8 for the 6-D point mazes."""
    return 50 if input_dim <= 2 else 8


class CoverageGrid:
    """Cumulative visit histogram over [-1, 1]^dims."""

    def __init__(self, dims: int, bins_per_dim: int) -> None:
        if dims < 1 or bins_per_dim < 1:
            raise ValueError(
                f'Grid needs dims >= 1 and bins >= 1, got {dims}, {bins_per_dim}')
        self.dims = dims
        self.bins_per_dim = bins_per_dim
        self.counts = np.zeros((bins_per_dim,) * dims, dtype=np.int64)
        self.total_steps = 0

    @property
    def n_cells(self) -> int:
        return int(self.counts.size)

    def cell(self, point) -> Tuple[int, ...]:
        point = np.asarray(point, dtype=np.float64).reshape(-1)
        if point.size != self.dims:
            raise ValueError(f'Expected a {self.dims}-D point, got {point.size}')
        if np.any(np.abs(point) > 1.0):
            log.warning(f'Visit {point} outside the unit cube, clipping')
            point = np.clip(point, -1.0, 1.0)
        index = np.floor((point + 1.0) * 0.5 * self.bins_per_dim).astype(int)
        # +1 lands in the last bin.
        return tuple(np.minimum(index, self.bins_per_dim - 1))

    def record_visit(self, point) -> None:
        self.counts[self.cell(point)] += 1
        self.total_steps += 1

    def coverage(self, epsilon: float) -> float:
        if self.total_steps < 1:
            raise ValueError('Coverage of an empty grid is undefined')
        frequency = self.counts / self.total_steps
        return float(np.count_nonzero(frequency > epsilon)) / self.n_cells


def record_visit(grid: CoverageGrid, point) -> None:
    grid.record_visit(point)


def coverage(grid: CoverageGrid, epsilon: float) -> float:
    """Fraction of cells visited with relative frequency above `epsilon`."""
    return grid.coverage(epsilon)


def confidence_half_width(values: Iterable[float]) -> float:
    """1.96 * sample std / sqrt(n); zero for fewer than two values."""
    values = np.asarray([v for v in values if not math.isnan(v)],
                        dtype=np.float64)
    if values.size < 2:
        return 0.0
    return float(CSV.CI_Z * values.std(ddof=1) / math.sqrt(values.size))


@dataclass
class EpochRecord:
    epoch: int
    return_mean: float
    return_ci95: float
    episodes_completed: int
    coverage: float
    alpha: float
    sigma_visited_mean: float
    sigma_synthetic_mean: float
    critic_loss: float
    actor_loss: float


class RunLog:
    """Per-epoch records of one seed, in strictly increasing epoch order."""

    def __init__(self, records: Optional[List[EpochRecord]] = None) -> None:
        self.records: List[EpochRecord] = []
        for record in records or []:
            self.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: EpochRecord) -> None:
        if self.records and record.epoch <= self.records[-1].epoch:
            raise ValueError(
                f'Epoch {record.epoch} does not follow {self.records[-1].epoch}')
        self.records.append(record)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.records],
                            columns=list(CSV.EPOCH_COLUMNS))

    def write_csv(self, path: str) -> None:
        # NaN is written as an empty cell.
        self.to_frame().to_csv(path, index=False, na_rep='')

    @classmethod
    def read_csv(cls, path: str) -> 'RunLog':
        frame = read_numeric_csv(path, CSV.EPOCH_COLUMNS)
        records = []
        for row in frame.itertuples(index=False):
            values = row._asdict()
            values['epoch'] = int(values['epoch'])
            values['episodes_completed'] = int(values['episodes_completed'])
            records.append(EpochRecord(**values))
        return cls(records)


def read_numeric_csv(path: str, columns: Sequence[str]) -> pd.DataFrame:
    """Load a CSV whose `columns` must all be present and numeric.

    Empty cells read as NaN; anything else that is not a number is rejected
    with its row and column.
    """
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as error:
        raise PlotInputError(f'{path}: {error}') from error
    missing = [c for c in columns if c not in raw.columns]
    if missing:
        raise PlotInputError(f'{path}: missing columns {missing}')
    frame = pd.DataFrame(index=raw.index)
    for column in columns:
        text = raw[column].str.strip()
        values = pd.to_numeric(text.replace('', np.nan), errors='coerce')
        bad = values.isna() & (text != '')
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise PlotInputError(
                f'{path}: row {row + 2}, column {column}: '
                f'{raw[column].iloc[row]!r} is not a number')
        frame[column] = values.astype(np.float64)
    return frame


def merge_runs(frames: Sequence[pd.DataFrame]) -> pd.DataFrame:
    """Mean and 95% half-width across seeds of every merged metric, per epoch."""
    if not frames:
        raise ValueError('Nothing to merge')
    stacked = pd.concat(frames, ignore_index=True)
    rows = []
    for epoch, group in stacked.groupby('epoch', sort=True):
        row = {'epoch': int(epoch), 'n_seeds': int(len(group))}
        for metric in CSV.MERGED_METRICS:
            values = group[metric].dropna().to_numpy(dtype=np.float64)
            row[f'{metric}_mean'] = float(values.mean()) if values.size \
                else math.nan
            row[f'{metric}_ci95'] = confidence_half_width(values) if values.size \
                else math.nan
        rows.append(row)
    columns = ['epoch', 'n_seeds'] + [f'{m}_{s}' for m in CSV.MERGED_METRICS
                                      for s in ('mean', 'ci95')]
    return pd.DataFrame(rows, columns=columns)


def probe_points(input_dim: int, resolution: int, axes: Tuple[int, int],
                 fixed: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Cell centres of a resolution x resolution slice of the cube.

    Returns the 1-D centre coordinates and the (resolution**2, input_dim)
    points; coordinates off the two axes come from `fixed` (default 0).
    """
    centres = -1.0 + (np.arange(resolution) + 0.5) * 2.0 / resolution
    base = np.zeros(input_dim) if fixed is None else np.asarray(fixed, float)
    points = np.tile(base, (resolution * resolution, 1))
    u, v = np.meshgrid(centres, centres, indexing='ij')
    points[:, axes[0]] = u.reshape(-1)
    points[:, axes[1]] = v.reshape(-1)
    return centres, points


def sigma_probe(critics, input_dim: int, resolution: int = 50,
                axes: Tuple[int, int] = (0, 1),
                fixed: Optional[np.ndarray] = None) -> np.ndarray:
    """Min-over-critics sigma on a regular grid; entry [i, j] sits at
    (axes[0] = centre i, axes[1] = centre j)."""
    _, points = probe_points(input_dim, resolution, axes, fixed)
    return min_sigma(critics, points).reshape(resolution, resolution)


def visit_map(grid: CoverageGrid, axes: Tuple[int, int] = (0, 1)) -> np.ndarray:
    """Visit counts summed over every axis but `axes`, indexed like `sigma_probe`."""
    others = tuple(a for a in range(grid.dims) if a not in axes)
    marginal = grid.counts.sum(axis=others) if others else grid.counts
    return marginal if axes[0] < axes[1] else marginal.T


def sigma_visit_correlation(critics, grid: CoverageGrid,
                            axes: Tuple[int, int] = (0, 1)) -> float:
    """Spearman rank correlation of probed sigma against visit counts.

    Sigma is read on the slice where every axis outside `axes` sits at
    zero, while the visit counts are summed over those axes. On the 2-D
    inputs of LQG and Riverswim the two coincide; on the Point mazes the
    slice fixes velocity and action at zero and the correlation compares it
    with the marginal over all velocities and actions.
    """
    sigma = sigma_probe(critics, grid.dims, grid.bins_per_dim, axes)
    visits = visit_map(grid, axes)
    rho, _ = spearmanr(sigma.reshape(-1), visits.reshape(-1))
    return float(rho)


def grid_frame(matrix: np.ndarray, value: str, **constants) -> pd.DataFrame:
    """Long format (u, v, value) of a square probe or visit matrix."""
    resolution = matrix.shape[0]
    centres = -1.0 + (np.arange(resolution) + 0.5) * 2.0 / resolution
    u, v = np.meshgrid(centres, centres, indexing='ij')
    frame = pd.DataFrame({'u': u.reshape(-1), 'v': v.reshape(-1),
                          value: matrix.reshape(-1)})
    for key, constant in constants.items():
        frame[key] = constant
    return frame
