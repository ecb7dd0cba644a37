"""
Command-line interface.

    ouestimation solve --scheme iir --theta 0.5 --ell 2 --n 4
    ouestimation simulate --scheme fr --epochs 1000000 --seed 1
    ouestimation sweep --table1
    ouestimation sweep --fig2 --workers 4
    ouestimation validate-config --config config.py

Settings come from the defaults, then --config (a Python file like
config_template.py), then flags; OUESTIMATION_OUTPUT_DIR overrides the
output directory.

Exit codes: 0 success, 1 invalid configuration, 2 solver failure, 3 I/O failure.
"""

import os
import sys
import json
import argparse
from dataclasses import asdict
from functools import partial
from typing import List, Optional
import pandas as pd
from ouestimation.penalty import OUMsePenalty
from ouestimation.channel import iir_delay_pmf
from ouestimation.policyiir import solve_iir
from ouestimation.policyfr import solve_fr
from ouestimation import experiments
from ouestimation import plots
from ouestimation import runconfig
from ouestimation import savedata
from ouestimation import simulator
from ouestimation.utils import CSV_FLOAT_FORMAT, ConfigError, SolverError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_IO = 3

FR_METHODS = {'auto': 'auto', 'closed_form': 'closed_form', 'numeric': 'series'}


def _overrides(args) -> dict:
    names = {'OU.theta': 'theta', 'OU.sigma': 'sigma', 'CODING.ell': 'ell', 'CODING.n': 'n',
             'CODING.t_b': 't_b', 'CODING.beta': 'beta', 'CODING.epsilon': 'epsilon',
             'SCHEME': 'scheme', 'SOLVER.method': 'method',
             'SIMULATION.num_epochs': 'epochs', 'SIMULATION.seed': 'seed',
             'SIMULATION.warmup_epochs': 'warmup', 'SIMULATION.batches': 'batches',
             'SIMULATION.replications': 'replications', 'SWEEP.workers': 'workers',
             'OUTPUT_DIR': 'output_dir'}
    values = {path: getattr(args, attr, None) for path, attr in names.items()}
    if getattr(args, 'sequential', False):
        values['SOLVER.pipelined'] = False
    if getattr(args, 'trace', False):
        values['SIMULATION.keep_trace'] = True
    if values['SCHEME'] is not None:
        values['SCHEME'] = values['SCHEME'].upper()
    return values


def _load(args) -> runconfig.RunConfig:
    path = args.config
    if path is None and os.path.isfile(runconfig.default_config_path()):
        path = runconfig.default_config_path()
    return runconfig.load_run_config(path, _overrides(args))


def _output_path(config: runconfig.RunConfig, filename: str) -> str:
    os.makedirs(config.output_dir, exist_ok=True)
    return os.path.join(config.output_dir, filename)


def solve(config: runconfig.RunConfig, debug: bool = False):
    """Optimal policy of config.scheme for the OU MMSE penalty."""
    penalty = OUMsePenalty(config.ou, config.coding.ell)
    if config.scheme == 'IIR':
        pmf = iir_delay_pmf(config.coding, tail_tol=config.solver.tail_tol)
        return solve_iir(penalty, pmf, tol=config.solver.tol,
                         method=config.solver.method, debug=debug)
    return solve_fr(penalty, config.coding, pipelined=config.solver.pipelined,
                    method=FR_METHODS[config.solver.method], debug=debug)


def _solution_record(config, solution) -> dict:
    record = {'scheme': config.scheme, 'theta': config.ou.theta, 'sigma': config.ou.sigma,
              'ell': config.coding.ell, 'n': config.coding.n, 't_b': config.coding.t_b,
              'beta': config.coding.beta, 'epsilon': config.coding.epsilon,
              'lambda_star': solution.lambda_star, 'method': solution.method}
    if config.scheme == 'IIR':
        record.update(threshold=solution.threshold, iterations=solution.iterations,
                      residual=solution.residual, tail_bound=solution.tail_bound)
    else:
        record.update(wait_gap=solution.wait_gap, k_spacing=solution.k_spacing,
                      spacing=solution.spacing, p0=solution.p0, pipelined=solution.pipelined)
    return record


def cmd_solve(args) -> int:
    config = _load(args)
    solution = solve(config, debug=args.debug)
    record = _solution_record(config, solution)
    print(f'Scheme: {config.scheme}  (theta={config.ou.theta:g}, sigma={config.ou.sigma:g}, '
          f'ell={config.coding.ell}, n={config.coding.n}, t_b={config.coding.t_b:g}, '
          f'beta={config.coding.beta:g}, epsilon={config.coding.epsilon:g})')
    print(f'lambda* = {solution.lambda_star:.12g}')
    if config.scheme == 'IIR':
        print(f'Waiting rule: w(y) = max({solution.threshold:.9g} - y, 0)')
        print(f'Bisection: {solution.iterations} iterations, residual={solution.residual:.3g}, '
              f'tail bound={solution.tail_bound:.3g}')
    else:
        print(f'Zero wait; wait_gap={solution.wait_gap:.9g}, attempt spacing={solution.spacing:.9g}, '
              f'p0={solution.p0:.9g}')
    if args.json:
        filepath = _output_path(config, f'solve_{config.scheme.lower()}.json')
        with open(filepath, 'w') as jsonfile:
            json.dump(record, jsonfile, indent=2, sort_keys=True)
        print(f'Saved {filepath}')
    return EXIT_OK


def _run_simulation(config: runconfig.RunConfig, solution, debug: bool):
    penalty = OUMsePenalty(config.ou, config.coding.ell)
    if config.scheme == 'IIR':
        run = partial(simulator.simulate_iir, penalty, config.coding, solution.wait)
    else:
        run = partial(simulator.simulate_fr, penalty, config.coding,
                      pipelined=config.solver.pipelined)
    if config.replications == 1:
        return run(config.simulation, debug=debug)
    return simulator.replicate(run, config.simulation, config.replications,
                               workers=config.workers)


def cmd_simulate(args) -> int:
    config = _load(args)
    solution = solve(config, debug=args.debug)
    result = _run_simulation(config, solution, args.debug)
    verdict = 'PASS' if result.within(solution.lambda_star) else 'FAIL'
    print(f'Simulated {config.scheme}: {result.avg_penalty:.9g} +/- {result.std_error:.3g} '
          f'({result.epoch_count} epochs)')
    print(f'Analytic lambda* = {solution.lambda_star:.9g}   [{verdict}]')
    summary = dict(scheme=config.scheme, lambda_star=solution.lambda_star,
                   seed=config.simulation.seed, verdict=verdict, **result.summary())
    scheme = config.scheme.lower()
    pd.DataFrame([summary]).to_csv(_output_path(config, f'simulation_{scheme}.csv'),
                                   index=False, float_format=CSV_FLOAT_FORMAT)
    if result.trace is not None:
        simulator.write_trace_csv(result, _output_path(config, f'trace_{scheme}.csv'))
    if args.end_to_end:
        report = simulator.end_to_end_mse_check(config.ou, config.coding, config.simulation,
                                                pipelined=config.solver.pipelined,
                                                debug=args.debug)
        checks = [check for check in (report.ideal, report.lloyd_max) if check is not None]
        for check in checks:
            print(f'End-to-end ({check.quantizer}): {check.empirical_mse:.9g} '
                  f'+/- {check.std_error:.3g}, predicted {check.predicted:.9g}, '
                  f'gap to lambda* {100 * check.relative_gap:.3g}%')
        pd.DataFrame([asdict(check) for check in checks]).to_csv(
            _output_path(config, f'end_to_end_{scheme}.csv'), index=False,
            float_format=CSV_FLOAT_FORMAT)
    if args.save_h5:
        savedata.to_file([config, result], _output_path(config, f'simulation_{scheme}.h5'),
                         overwrite=True)
    print(f'Results in {config.output_dir}')
    return EXIT_OK


def _print_argmins(argmins: pd.DataFrame) -> None:
    for row in argmins.itertuples():
        ties = f'  ties: {row.ties}' if row.ties else ''
        print(f'  {row.scheme:>3} theta={row.theta:<5g} epsilon={row.epsilon:<4g} '
              f'beta={row.beta:<5g} (ell*, n*) = ({row.ell}, {row.n})  '
              f'lambda*={row.lambda_star:.9g}{ties}')


def _write_beta_curves(config, spec, result, tag: str) -> None:
    """Curves CSV and chart of one process, and where FR overtakes IIR."""
    curves = experiments.curve_frame(result)
    curves.to_csv(_output_path(config, f'{tag}_curves.csv'), index=False,
                  float_format=CSV_FLOAT_FORMAT)
    if spec.ell_min == spec.ell_max:
        bits = f'ell={spec.ell_min}'
    else:
        bits = f'ell in [{spec.ell_min}, {spec.ell_max}]'
    plots.plot_beta_sweep(curves, _output_path(config, f'{tag}_beta_sweep.svg'),
                          title=f'theta={spec.ou.theta:g}, {bits}')
    if not {'IIR', 'FR'} <= set(spec.schemes):
        return
    for eps in spec.epsilons:
        crossover = experiments.find_crossover(result, eps)
        text = 'none in range' if crossover is None else f'beta >= {crossover:g}'
        print(f'FR better than IIR (theta={spec.ou.theta:g}, epsilon={eps:g}): {text}')


def cmd_sweep(args) -> int:
    config = _load(args)
    workers = config.workers
    if args.table1:
        name, specs = 'table1', experiments.table1_specs()
    elif args.fig2:
        name, specs = 'fig2', [experiments.fig2_spec()]
    else:
        name, specs = 'sweep', list(config.sweeps)
    results = [experiments.grid_search(spec, workers=workers, debug=args.debug) for spec in specs]
    result = experiments.merge_results(results)

    experiments.write_records_csv(result, _output_path(config, f'{name}_records.csv'))
    experiments.write_argmins_csv(result, _output_path(config, f'{name}_argmins.csv'))
    if result.failures:
        experiments.write_failures_csv(result, _output_path(config, f'{name}_failures.csv'))

    if any(len(spec.betas) > 1 for spec in specs):
        for spec, spec_result in zip(specs, results):
            _write_beta_curves(config, spec, spec_result,
                               name if len(specs) == 1 else f'{name}_theta{spec.ou.theta:g}')
    else:
        print('Best (ell, n) per setting:')
        _print_argmins(result.argmins)
    if args.table1:
        for message in experiments.table1_discrepancies(result.argmins):
            print(f'Differs from reference optimum: {message}')
    if len(specs) > 1:
        trend = experiments.ell_trend_report(result.argmins)
        print(f'Best ell nonincreasing in theta: {trend.consistent}')
        for message in trend.findings:
            print(f'  {message}')
    if args.save_h5:
        savedata.to_file([config, result], _output_path(config, f'{name}.h5'), overwrite=True)
    print(f'Results in {config.output_dir}')
    if result.failures:
        print(f'{len(result.failures)} grid points failed; see {name}_failures.csv', file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_validate_config(args) -> int:
    config = _load(args)
    print(runconfig.describe(config))
    print('Configuration is valid.')
    return EXIT_OK


def _add_model_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--scheme', type=str.lower, choices=['iir', 'fr'], help='Coding scheme')
    parser.add_argument('--theta', type=float, help='OU mean-reversion rate')
    parser.add_argument('--sigma', type=float, help='OU diffusion scale')
    parser.add_argument('--ell', type=int, help='Quantization bits')
    parser.add_argument('--n', type=int, help='Codeword bits')
    parser.add_argument('--t-b', dest='t_b', type=float, help='Time per bit')
    parser.add_argument('--beta', type=float, help='Processing time per decoding attempt')
    parser.add_argument('--epsilon', type=float, help='BSC crossover probability')
    parser.add_argument('--method', choices=runconfig.SOLVER_METHODS, help='Solver path')
    parser.add_argument('--sequential', action='store_true',
                        help='FR attempts spaced n_bar apart instead of just in time')


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='Python configuration file (see config_template.py)')
    common.add_argument('--output-dir', dest='output_dir', help='Directory for result files')
    common.add_argument('--debug', action='store_true', help='Print solver progress')

    parser = argparse.ArgumentParser(prog='ouestimation',
                                     description='Timely estimation of an OU process over '
                                                 'a noisy channel (IIR and FR coding).')
    subparsers = parser.add_subparsers(dest='command', required=True)

    solve_parser = subparsers.add_parser('solve', parents=[common], help='Optimal policy')
    _add_model_arguments(solve_parser)
    solve_parser.add_argument('--json', action='store_true', help='Also write a JSON record')
    solve_parser.set_defaults(func=cmd_solve)

    sim_parser = subparsers.add_parser('simulate', parents=[common], help='Monte Carlo check')
    _add_model_arguments(sim_parser)
    sim_parser.add_argument('--epochs', type=int, help='Epochs to average')
    sim_parser.add_argument('--seed', type=int, help='Random seed')
    sim_parser.add_argument('--warmup', type=int, help='Epochs discarded first')
    sim_parser.add_argument('--batches', type=int, help='Batches for the standard error')
    sim_parser.add_argument('--replications', type=int, help='Independent runs to pool')
    sim_parser.add_argument('--workers', type=int, help='Worker processes for replications')
    sim_parser.add_argument('--trace', action='store_true', help='Write the per-epoch trace')
    sim_parser.add_argument('--end-to-end', dest='end_to_end', action='store_true',
                            help='Also simulate the OU source, quantizer and estimator')
    sim_parser.add_argument('--save-h5', dest='save_h5', action='store_true',
                            help='Also save results to HDF5')
    sim_parser.set_defaults(func=cmd_simulate)

    sweep_parser = subparsers.add_parser('sweep', parents=[common], help='Parameter sweeps')
    preset = sweep_parser.add_mutually_exclusive_group()
    preset.add_argument('--table1', action='store_true', help='Best (ell, n) for two thetas')
    preset.add_argument('--fig2', action='store_true', help='IIR against FR over beta')
    sweep_parser.add_argument('--workers', type=int, help='Worker processes')
    sweep_parser.add_argument('--save-h5', dest='save_h5', action='store_true',
                              help='Also save results to HDF5')
    sweep_parser.set_defaults(func=cmd_sweep)

    check_parser = subparsers.add_parser('validate-config', parents=[common],
                                         help='Validate and print a configuration')
    check_parser.set_defaults(func=cmd_validate_config)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns the exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f'Invalid configuration: {exc}', file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f'Solver failure: {exc}', file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, TypeError) as exc:
        print(f'Invalid input: {exc}', file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f'I/O failure: {exc}', file=sys.stderr)
        return EXIT_IO


if __name__ == '__main__':
    sys.exit(main())
