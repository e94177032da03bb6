"""Seeded experiment runs, parameter sweeps and their on-disk artifacts.

Layout of one run directory:

    manifest.json          resolved config, code version, per-seed status
    merged.csv             per-epoch mean and 95% half-width over seeds
    seed_<n>/metrics.csv   one row per epoch (CSV.EPOCH_COLUMNS)
    seed_<n>/checkpoint.npz
    seed_<n>/visits.csv    visit counts on the first two cube axes
    seed_<n>/sigma_probe.csv, sigma_probe.svg   (WAC only)
"""
import dataclasses
import hashlib
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import yaml

from . import __version__
from .agents import (Agent, OacConfig, SacConfig, TrainingConfig, WacConfig,
                     evaluate, load_checkpoint, make_agent, save_checkpoint,
                     train_epoch)
from .config_error import ConfigError
from .constants import ALGOS, ALPHA_MODES, CSV, DEFAULTS, ENV_IDS, VARIANTS
from .envs import Environment, make_env
from .log import log
from .metrics import (CoverageGrid, EpochRecord, RunLog,
                      confidence_half_width, default_bins, grid_frame,
                      merge_runs, read_numeric_csv, sigma_probe,
                      sigma_visit_correlation, visit_map)
from .plot_input_error import PlotInputError
from .plots import Series, heatmap, line_chart
from .replay import ReplayBuffer

__all__ = [
    'ExperimentConfig', 'SweepSpec', 'ExperimentResult', 'run_experiment',
    'run_seed', 'run_sweep', 'emit_plots', 'emit_heatmap', 'probe_sigma',
    'resolve_output_dir', 'read_manifest', 'sweep_path', 'CONFIGS_DIR',
]

MANIFEST = 'manifest.json'
MERGED = 'merged.csv'
METRICS = 'metrics.csv'
CHECKPOINT = 'checkpoint.npz'
VISITS = 'visits.csv'
SIGMA_PROBE = 'sigma_probe.csv'
SWEEP_SUMMARY = 'sweep_summary.csv'
# Epochs averaged for the final-return summary of a run.
FINAL_WINDOW = 10
PROBE_AXES = (0, 1)
# Desk-scale sweeps shipped with the package.
CONFIGS_DIR = os.path.join(os.path.dirname(__file__), 'configs')

# Config keys that are not valid Python identifiers.
KEY_ALIASES = {'lambda': 'lam'}
FIELD_KEYS = {v: k for k, v in KEY_ALIASES.items()}


@dataclass
class ExperimentConfig:
    env: str = ENV_IDS.LQG
    env_overrides: Dict[str, Any] = field(default_factory=dict)
    algo: str = ALGOS.OE_WAC
    epochs: int = DEFAULTS.EPOCHS
    seeds: List[int] = field(default_factory=lambda: list(DEFAULTS.SEEDS))
    output_dir: str = 'runs'
    workers: int = 1

    hidden_sizes: List[int] = field(
        default_factory=lambda: list(DEFAULTS.HIDDEN_SIZES))
    lr: float = DEFAULTS.LR
    batch_size: int = DEFAULTS.BATCH_SIZE
    n_explore: int = DEFAULTS.N_EXPLORE
    n_train: int = DEFAULTS.N_TRAIN
    buffer_capacity: int = DEFAULTS.BUFFER_CAPACITY
    gamma: float = DEFAULTS.GAMMA
    tau: float = DEFAULTS.TAU
    alpha_mode: str = ALPHA_MODES.AUTO
    alpha: float = 1.0
    target_entropy: Optional[float] = None

    delta: float = DEFAULTS.DELTA
    lam: float = DEFAULTS.LAMBDA
    rho: float = DEFAULTS.RHO
    shared_trunk: bool = False

    beta_ub: float = DEFAULTS.BETA_UB
    delta_oac: float = DEFAULTS.DELTA_OAC

    eval_steps: int = DEFAULTS.EVAL_STEPS
    coverage_epsilon: float = DEFAULTS.COVERAGE_EPSILON
    coverage_bins: Optional[int] = None
    probe_resolution: int = 50

    def __post_init__(self) -> None:
        self.seeds = [int(s) for s in self.seeds]
        self.hidden_sizes = [int(w) for w in self.hidden_sizes]
        error_message = ''
        if self.env not in ENV_IDS.ALL:
            error_message = f'env must be one of {ENV_IDS.ALL}, got {self.env!r}'
        elif self.algo not in ALGOS.ALL:
            error_message = f'algo must be one of {ALGOS.ALL}, got {self.algo!r}'
        elif self.epochs < 1:
            error_message = f'epochs must be >= 1, got {self.epochs}'
        elif not self.seeds or len(set(self.seeds)) != len(self.seeds):
            error_message = f'seeds must be distinct and non-empty, got {self.seeds}'
        elif self.workers < 1:
            error_message = f'workers must be >= 1, got {self.workers}'
        elif not isinstance(self.env_overrides, dict):
            error_message = 'env_overrides must be a mapping'
        elif 'gamma' in self.env_overrides:
            error_message = 'set gamma at the top level, not in env_overrides'
        elif self.eval_steps < 1:
            error_message = f'eval_steps must be >= 1, got {self.eval_steps}'
        elif not self.coverage_epsilon > 0:
            error_message = \
                f'coverage_epsilon must be > 0, got {self.coverage_epsilon}'
        elif self.coverage_bins is not None and self.coverage_bins < 1:
            error_message = f'coverage_bins must be >= 1, got {self.coverage_bins}'
        elif self.probe_resolution < 2:
            error_message = \
                f'probe_resolution must be >= 2, got {self.probe_resolution}'
        if error_message:
            raise ConfigError(error_message)
        # Each of these raises ConfigError on its own ranges.
        self.agent_config()
        self.training_config()
        self.make_env()

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> 'ExperimentConfig':
        """Build from plain config data; unknown keys are refused."""
        known = {f.name for f in dataclasses.fields(cls)}
        values, unknown = {}, []
        for key, value in (data or {}).items():
            name = KEY_ALIASES.get(key, key)
            if name not in known or key in FIELD_KEYS:
                unknown.append(key)
                continue
            values[name] = value
        if unknown:
            raise ConfigError(f'Unknown config keys {sorted(unknown)}')
        try:
            return cls(**values)
        except TypeError as error:
            raise ConfigError(str(error)) from error

    @classmethod
    def from_yaml(cls, path: str) -> 'ExperimentConfig':
        return cls.from_dict(_load_yaml(path))

    def to_dict(self) -> Dict[str, Any]:
        data = dataclasses.asdict(self)
        return {FIELD_KEYS.get(k, k): v for k, v in data.items()}

    def replace(self, **changes) -> 'ExperimentConfig':
        """Copy with changes given by config key ('lambda' included)."""
        data = self.to_dict()
        data.update(changes)
        return ExperimentConfig.from_dict(data)

    def agent_config(self) -> SacConfig:
        common = dict(alpha_mode=self.alpha_mode, alpha=self.alpha,
                      target_entropy=self.target_entropy, tau=self.tau,
                      gamma=self.gamma)
        if self.algo in ALGOS.WAC:
            variant = VARIANTS.OE if self.algo == ALGOS.OE_WAC else VARIANTS.ME
            return WacConfig(delta=self.delta, lam=self.lam, rho=self.rho,
                             variant=variant, shared_trunk=self.shared_trunk,
                             **common)
        if self.algo == ALGOS.OAC:
            return OacConfig(beta_ub=self.beta_ub, delta_oac=self.delta_oac,
                             **common)
        return SacConfig(**common)

    def training_config(self) -> TrainingConfig:
        return TrainingConfig(
            hidden_sizes=tuple(self.hidden_sizes), lr=self.lr,
            batch_size=self.batch_size, n_explore=self.n_explore,
            n_train=self.n_train, buffer_capacity=self.buffer_capacity)

    def make_env(self) -> Environment:
        overrides = dict(self.env_overrides, gamma=self.gamma)
        try:
            return make_env(self.env, overrides)
        except (TypeError, ValueError) as error:
            raise ConfigError(f'{self.env}: {error}') from error

    def make_agent(self, spec, rng: np.random.Generator) -> Agent:
        return make_agent(self.algo, spec, rng, self.agent_config(),
                          self.training_config())


def _load_yaml(path: str) -> Any:
    try:
        with open(path) as file:
            return yaml.safe_load(file)
    except (OSError, yaml.YAMLError) as error:
        raise ConfigError(f'{path}: {error}') from error


def resolve_output_dir(output_dir: str) -> str:
    """Relative output paths live under $WAC_OUTPUT_ROOT when it is set."""
    root = os.environ.get(DEFAULTS.OUTPUT_ROOT_ENV)
    if root and not os.path.isabs(output_dir):
        return os.path.join(root, output_dir)
    return output_dir


def seed_dir(output_dir: str, seed: int) -> str:
    return os.path.join(output_dir, f'seed_{seed}')


def source_digest() -> str:
    """sha256 over the package's source and layout files."""
    package = os.path.dirname(__file__)
    digest = hashlib.sha256()
    for root, dirs, files in os.walk(package):
        dirs.sort()
        for name in sorted(files):
            if name.endswith(('.py', '.yaml')) and not name.endswith('_test.py'):
                path = os.path.join(root, name)
                digest.update(os.path.relpath(path, package).encode())
                with open(path, 'rb') as file:
                    digest.update(file.read())
    return digest.hexdigest()


def _mean(values: Sequence[float]) -> float:
    return float(np.mean(values)) if len(values) else math.nan


def write_sigma_probe(agent, directory: str, resolution: int) -> Tuple[str, str]:
    matrix = sigma_probe(agent.critics, agent.spec.input_dim, resolution,
                         PROBE_AXES)
    csv_path = os.path.join(directory, SIGMA_PROBE)
    grid_frame(matrix, 'sigma', sigma0=agent.sigma0).to_csv(csv_path,
                                                            index=False)
    svg_path = csv_path[:-len('.csv')] + '.svg'
    emit_heatmap(csv_path, svg_path)
    return csv_path, svg_path


def run_seed(config: ExperimentConfig, seed: int, directory: str) -> Dict[str, Any]:
    """Train one seed for `config.epochs` epochs, writing its artifacts."""
    os.makedirs(directory, exist_ok=True)
    rng = np.random.default_rng(seed)
    eval_rng = np.random.default_rng([seed, 1])
    env, eval_env = config.make_env(), config.make_env()
    spec = env.spec
    agent = config.make_agent(spec, rng)
    buffer = ReplayBuffer(config.buffer_capacity, spec.state_dim,
                          spec.action_dim)
    grid = CoverageGrid(spec.input_dim,
                        config.coverage_bins or default_bins(spec.input_dim))
    run_log = RunLog()
    for epoch in range(1, config.epochs + 1):
        metrics = train_epoch(agent, env, buffer, rng, grid)
        result = evaluate(agent, eval_env, eval_rng, config.eval_steps)
        record = EpochRecord(
            epoch=epoch,
            return_mean=_mean(result.returns),
            return_ci95=confidence_half_width(result.returns),
            episodes_completed=result.episodes_completed,
            coverage=grid.coverage(config.coverage_epsilon),
            alpha=metrics.alpha,
            sigma_visited_mean=metrics.sigma_visited_mean,
            sigma_synthetic_mean=metrics.sigma_synthetic_mean,
            critic_loss=metrics.critic_loss,
            actor_loss=metrics.actor_loss)
        run_log.append(record)
        log.info(f'{config.algo} {config.env} seed {seed} epoch {epoch}: '
                 f'return {record.return_mean:.4g}, coverage '
                 f'{record.coverage:.4f}, alpha {record.alpha:.4g}')
    run_log.write_csv(os.path.join(directory, METRICS))
    save_checkpoint(agent, os.path.join(directory, CHECKPOINT), rng)
    grid_frame(visit_map(grid, PROBE_AXES), 'count').to_csv(
        os.path.join(directory, VISITS), index=False)

    outcome = {'seed': seed, 'status': 'ok', 'sigma_visit_spearman': None}
    if config.algo in ALGOS.WAC:
        write_sigma_probe(agent, directory, config.probe_resolution)
        rho = sigma_visit_correlation(agent.critics, grid, PROBE_AXES)
        outcome['sigma_visit_spearman'] = None if math.isnan(rho) else rho
    return outcome


def _seed_job(config_data: Dict[str, Any], seed: int,
              directory: str) -> Dict[str, Any]:
    try:
        return run_seed(ExperimentConfig.from_dict(config_data), seed, directory)
    except Exception as error:
        reason = f'{error.__class__.__name__}: {error}'
        log.error(f'Seed {seed} failed: {reason}')
        return {'seed': seed, 'status': 'failed', 'reason': reason}


@dataclass
class ExperimentResult:
    output_dir: str
    manifest: Dict[str, Any]

    @property
    def failures(self) -> List[Dict[str, Any]]:
        return self.manifest['failures']

    @property
    def ok(self) -> bool:
        return not self.failures


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run every seed, merge the survivors and write the manifest.

    A failing seed does not stop the others; its reason is kept in the
    manifest and the result reports `ok == False`.
    """
    output_dir = resolve_output_dir(config.output_dir)
    os.makedirs(output_dir, exist_ok=True)
    config_data = config.to_dict()
    jobs = [(config_data, seed, seed_dir(output_dir, seed))
            for seed in config.seeds]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(_seed_job, *zip(*jobs)))
    else:
        outcomes = [_seed_job(*job) for job in jobs]

    frames = [read_numeric_csv(
        os.path.join(seed_dir(output_dir, o['seed']), METRICS),
        CSV.EPOCH_COLUMNS) for o in outcomes if o['status'] == 'ok']
    merged = None
    if frames:
        merged = MERGED
        merge_runs(frames).to_csv(os.path.join(output_dir, MERGED),
                                  index=False, na_rep='')
    manifest = {
        'schema_version': CSV.SCHEMA_VERSION,
        'code_version': __version__,
        'source_sha256': source_digest(),
        'config': config_data,
        'seeds': outcomes,
        'failures': [o for o in outcomes if o['status'] != 'ok'],
        'merged': merged,
    }
    with open(os.path.join(output_dir, MANIFEST), 'w') as file:
        json.dump(manifest, file, indent=2, sort_keys=True)
    return ExperimentResult(output_dir, manifest)


def read_manifest(run_dir: str) -> Dict[str, Any]:
    path = os.path.join(run_dir, MANIFEST)
    try:
        with open(path) as file:
            return json.load(file)
    except (OSError, ValueError) as error:
        raise ConfigError(f'{path}: {error}') from error


# Sweeps.


@dataclass
class SweepSpec:
    base: ExperimentConfig
    # Config key -> values; the cartesian product is run in key order.
    grid: Dict[str, List[Any]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        known = {FIELD_KEYS.get(f.name, f.name)
                 for f in dataclasses.fields(ExperimentConfig)}
        for key, values in self.grid.items():
            if key not in known or key == 'output_dir':
                raise ConfigError(f'Cannot sweep over {key!r}')
            if not isinstance(values, list) or not values:
                raise ConfigError(f'Sweep values for {key!r} must be a '
                                  'non-empty list')
        # Every grid point must itself be a valid config.
        for point in self.points():
            self.base.replace(**point)

    @property
    def size(self) -> int:
        return int(np.prod([len(v) for v in self.grid.values()], dtype=np.int64))

    def points(self) -> List[Dict[str, Any]]:
        keys = list(self.grid)
        return [dict(zip(keys, combo))
                for combo in itertools.product(*self.grid.values())]

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SweepSpec':
        if not isinstance(data, dict) or not set(data) <= {'base', 'grid'}:
            raise ConfigError('A sweep maps only base and grid')
        grid = data.get('grid') or {}
        if not isinstance(grid, dict):
            raise ConfigError('Sweep grid must be a mapping')
        return cls(ExperimentConfig.from_dict(data.get('base')), dict(grid))

    @classmethod
    def from_yaml(cls, path: str) -> 'SweepSpec':
        return cls.from_dict(_load_yaml(path))


def sweep_path(spec: str) -> str:
    """`spec` itself when it exists, else the bundled sweep of that name."""
    bundled = os.path.join(CONFIGS_DIR, f'{spec}.yaml')
    if not os.path.exists(spec) and os.path.exists(bundled):
        return bundled
    return spec


def point_name(point: Dict[str, Any]) -> str:
    return '_'.join(f'{key}={value}' for key, value in point.items())


def summarize(result: ExperimentResult) -> Dict[str, Any]:
    """Seed-level average coverage and final return, then mean and CI."""
    coverages, finals = [], []
    for outcome in result.manifest['seeds']:
        if outcome['status'] != 'ok':
            continue
        frame = read_numeric_csv(
            os.path.join(seed_dir(result.output_dir, outcome['seed']), METRICS),
            CSV.EPOCH_COLUMNS)
        coverages.append(float(frame['coverage'].mean()))
        finals.append(float(frame['return_mean'].tail(FINAL_WINDOW).mean()))
    return {
        'status': 'ok' if result.ok else 'failed',
        'n_seeds': len(coverages),
        'coverage_avg_mean': _mean(coverages),
        'coverage_avg_ci95': confidence_half_width(coverages),
        'return_final_mean': _mean(finals),
        'return_final_ci95': confidence_half_width(finals),
        'output_dir': result.output_dir,
    }


def run_sweep(spec: SweepSpec) -> pd.DataFrame:
    """Run every grid point as an experiment; write and return the summary."""
    log.info(f'Sweep over {list(spec.grid) or "nothing"}: '
             f'{spec.size} grid point(s)')
    rows = []
    for point in spec.points():
        if spec.grid:
            config = spec.base.replace(
                output_dir=os.path.join(spec.base.output_dir,
                                        point_name(point)), **point)
        else:
            config = spec.base
        rows.append({**point, **summarize(run_experiment(config))})
    summary = pd.DataFrame(rows)
    output_dir = resolve_output_dir(spec.base.output_dir)
    os.makedirs(output_dir, exist_ok=True)
    summary.to_csv(os.path.join(output_dir, SWEEP_SUMMARY), index=False,
                   na_rep='')
    emit_sweep_plots(summary, list(spec.grid), output_dir)
    return summary


def emit_sweep_plots(summary: pd.DataFrame, keys: List[str],
                     output_dir: str) -> List[str]:
    """Summary metric against the first swept key, one line per remaining combo."""
    if not keys:
        return []
    x_key, rest = keys[0], keys[1:]
    x_values = list(dict.fromkeys(summary[x_key]))
    numeric = all(isinstance(v, (int, float)) and not isinstance(v, bool)
                  for v in x_values)
    written = []
    for metric in ('coverage_avg', 'return_final'):
        series = []
        groups = summary.groupby(rest, sort=False) if rest else [((), summary)]
        for group_key, group in groups:
            group_key = group_key if isinstance(group_key, tuple) else (group_key,)
            label = ', '.join(f'{k}={v}' for k, v in zip(rest, group_key)) \
                or metric
            xs = [float(v) if numeric else float(x_values.index(v))
                  for v in group[x_key]]
            series.append(Series(label, np.array(xs),
                                 group[f'{metric}_mean'].to_numpy(np.float64),
                                 group[f'{metric}_ci95'].to_numpy(np.float64)))
        try:
            chart = line_chart(series, f'{metric} by {x_key}', x_key, metric)
        except PlotInputError as error:
            log.warning(f'Plot skipped: {error}')
            continue
        path = os.path.join(output_dir, f'sweep_{metric}.svg')
        chart.write(path)
        written.append(path)
    return written


# Plots.


def emit_plots(merged: Dict[str, str], output_dir: str) -> List[str]:
    """One SVG per metric with a CI band per labelled merged CSV."""
    columns = ['epoch'] + [f'{m}_{s}' for m in CSV.MERGED_METRICS
                           for s in ('mean', 'ci95')]
    frames = {label: read_numeric_csv(path, columns)
              for label, path in merged.items()}
    os.makedirs(output_dir, exist_ok=True)
    written = []
    for metric in CSV.MERGED_METRICS:
        series = []
        for label, frame in frames.items():
            mean = frame[f'{metric}_mean'].to_numpy()
            if np.all(np.isnan(mean)):
                continue
            series.append(Series(label, frame['epoch'].to_numpy(), mean,
                                 frame[f'{metric}_ci95'].to_numpy()))
        if not series:
            log.warning(f'No values for {metric}, plot skipped')
            continue
        path = os.path.join(output_dir, f'{metric}.svg')
        line_chart(series, metric, 'epoch', metric).write(path)
        written.append(path)
    return written


def emit_heatmap(csv_path: str, out_path: str, value: str = 'sigma',
                 vmax: Optional[float] = None) -> str:
    """Render a long-format (u, v, value) dump; sigma dumps span [0, sigma0]."""
    frame = read_numeric_csv(csv_path, ['u', 'v', value])
    n = int(round(math.sqrt(len(frame))))
    if n * n != len(frame) or n == 0:
        raise PlotInputError(
            f'{csv_path}: {len(frame)} rows do not form a square grid')
    frame = frame.sort_values(['u', 'v'], kind='mergesort')
    matrix = frame[value].to_numpy().reshape(n, n)
    if vmax is None and value == 'sigma':
        raw = pd.read_csv(csv_path)
        if 'sigma0' in raw.columns:
            vmax = float(raw['sigma0'].iloc[0])
    if vmax is None:
        vmax = float(np.nanmax(matrix)) if np.any(np.isfinite(matrix)) else 1.0
    if not vmax > 0:
        vmax = 1.0
    title = f'{value} over the first two normalized axes'
    heatmap(matrix, 0.0, vmax, title).write(out_path)
    return out_path


def probe_sigma(run_dir: str, seed: int,
                resolution: Optional[int] = None) -> Tuple[str, str]:
    """Re-probe a finished seed from its checkpoint."""
    config = ExperimentConfig.from_dict(read_manifest(run_dir)['config'])
    if config.algo not in ALGOS.WAC:
        raise ConfigError(f'{config.algo} critics carry no sigma to probe')
    env = config.make_env()
    agent = config.make_agent(env.spec, np.random.default_rng(seed))
    directory = seed_dir(run_dir, seed)
    checkpoint = os.path.join(directory, CHECKPOINT)
    if not os.path.exists(checkpoint):
        raise ConfigError(f'{checkpoint}: no checkpoint for seed {seed}')
    load_checkpoint(agent, checkpoint)
    return write_sigma_probe(agent, directory,
                             resolution or config.probe_resolution)
