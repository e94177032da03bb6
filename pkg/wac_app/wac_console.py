"""Command-line front end: run, sweep, plot, probe-sigma and oracle-check."""
import argparse
import dataclasses
import os
from typing import Any, Dict, List, Optional

import yaml

from . import __version__
from .config_error import ConfigError
from .constants import ALGOS, ALPHA_MODES, ENV_IDS, EXIT_CODES
from .harness import (ExperimentConfig, SweepSpec, emit_heatmap, emit_plots,
                      probe_sigma, run_experiment, run_sweep, sweep_path)
from .log import configure, log
from .oracles import oracle_check
from .plot_input_error import PlotInputError
from .wac_error import WacError

__all__ = ['WacConsole', 'build_parser']


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    """One flag per ExperimentConfig field; unset flags leave the file value."""
    group = parser.add_argument_group('experiment config')
    group.add_argument('--config', help='YAML file with ExperimentConfig keys')
    group.add_argument('--env', choices=ENV_IDS.ALL)
    group.add_argument('--env-overrides', type=yaml.safe_load,
                       help='YAML mapping passed to the environment')
    group.add_argument('--algo', choices=ALGOS.ALL)
    group.add_argument('--epochs', type=int)
    group.add_argument('--seeds', type=int, nargs='+')
    group.add_argument('--output-dir')
    group.add_argument('--workers', type=int)
    group.add_argument('--hidden-sizes', type=int, nargs='+')
    group.add_argument('--lr', type=float)
    group.add_argument('--batch-size', type=int)
    group.add_argument('--n-explore', type=int)
    group.add_argument('--n-train', type=int)
    group.add_argument('--buffer-capacity', type=int)
    group.add_argument('--gamma', type=float)
    group.add_argument('--tau', type=float)
    group.add_argument('--alpha-mode', choices=(ALPHA_MODES.FIXED,
                                                ALPHA_MODES.AUTO))
    group.add_argument('--alpha', type=float)
    group.add_argument('--target-entropy', type=float)
    group.add_argument('--delta', type=float)
    group.add_argument('--lambda', dest='lam', type=float)
    group.add_argument('--rho', type=float)
    group.add_argument('--shared-trunk', action='store_const', const=True)
    group.add_argument('--beta-ub', type=float)
    group.add_argument('--delta-oac', type=float)
    group.add_argument('--eval-steps', type=int)
    group.add_argument('--coverage-epsilon', type=float)
    group.add_argument('--coverage-bins', type=int)
    group.add_argument('--probe-resolution', type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='wac_app', description='Wasserstein actor-critic experiments')
    parser.add_argument('--version', action='version', version=__version__)
    parser.add_argument('--debug', action='store_true',
                        help='log at DEBUG level')
    verbs = parser.add_subparsers(dest='verb', required=True)

    run = verbs.add_parser('run', help='train every seed of one config')
    _add_config_flags(run)

    sweep = verbs.add_parser('sweep', help='run a grid of configs')
    sweep.add_argument('spec', help='YAML file with base and grid, or the '
                       'name of a sweep in wac_app/configs')

    plot = verbs.add_parser('plot', help='render merged CSVs as SVG')
    plot.add_argument('merged', nargs='+',
                      help='merged.csv paths, optionally LABEL=PATH')
    plot.add_argument('--out', required=True, help='output directory')

    probe = verbs.add_parser('probe-sigma',
                             help='re-probe sigma from a seed checkpoint')
    probe.add_argument('run_dir')
    probe.add_argument('--seed', type=int, required=True)
    probe.add_argument('--resolution', type=int)
    probe.add_argument('--heatmap', help='render an existing probe CSV instead')

    oracle = verbs.add_parser('oracle-check',
                              help='run the closed-form verification suite')
    oracle.add_argument('--seed', type=int, default=0)
    return parser


class WacConsole:
    """Dispatches one parsed command and maps failures to exit codes."""

    def __init__(self, argv: Optional[List[str]] = None) -> None:
        self.args = build_parser().parse_args(argv)
        configure(self.args.debug)

    def execute(self) -> int:
        handler = {
            'run': self.run,
            'sweep': self.sweep,
            'plot': self.plot,
            'probe-sigma': self.probe_sigma,
            'oracle-check': self.oracle_check,
        }[self.args.verb]
        try:
            return handler()
        except (ConfigError, PlotInputError) as error:
            print(f'Error: {error}')
            return EXIT_CODES.CONFIG_ERROR
        except WacError as error:
            log.error(f'{self.args.verb} failed: {error}')
            return EXIT_CODES.RUN_FAILURE

    def config(self) -> ExperimentConfig:
        data: Dict[str, Any] = {}
        if self.args.config:
            config = ExperimentConfig.from_yaml(self.args.config)
            data = config.to_dict()
        for f in dataclasses.fields(ExperimentConfig):
            value = getattr(self.args, f.name, None)
            if value is not None:
                data['lambda' if f.name == 'lam' else f.name] = value
        return ExperimentConfig.from_dict(data)

    def run(self) -> int:
        result = run_experiment(self.config())
        print(f'Run written to {result.output_dir}')
        for failure in result.failures:
            print(f'  seed {failure["seed"]} failed: {failure["reason"]}')
        return EXIT_CODES.OK if result.ok else EXIT_CODES.RUN_FAILURE

    def sweep(self) -> int:
        summary = run_sweep(SweepSpec.from_yaml(sweep_path(self.args.spec)))
        print(summary.to_string(index=False))
        failed = (summary['status'] != 'ok').any()
        return EXIT_CODES.RUN_FAILURE if failed else EXIT_CODES.OK

    def plot(self) -> int:
        merged = {}
        for item in self.args.merged:
            label, _, path = item.rpartition('=')
            label = label or os.path.basename(os.path.dirname(
                os.path.abspath(path)))
            merged[label] = path
        for path in emit_plots(merged, self.args.out):
            print(path)
        return EXIT_CODES.OK

    def probe_sigma(self) -> int:
        if self.args.heatmap:
            out = os.path.splitext(self.args.heatmap)[0] + '.svg'
            print(emit_heatmap(self.args.heatmap, out))
            return EXIT_CODES.OK
        for path in probe_sigma(self.args.run_dir, self.args.seed,
                                self.args.resolution):
            print(path)
        return EXIT_CODES.OK

    def oracle_check(self) -> int:
        results = oracle_check(self.args.seed)
        for result in results:
            status = 'ok' if result.passed else 'FAILED'
            print(f'{result.name:<26} {result.error:.3e} '
                  f'(tolerance {result.tolerance:.0e}) {status}')
        if all(r.passed for r in results):
            return EXIT_CODES.OK
        return EXIT_CODES.RUN_FAILURE
