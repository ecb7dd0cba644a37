"""
Parameter sweeps over the quantization bits (ell), codeword length (n) and
processing time (beta) for the IIR and FR schemes.

- grid_search: optimal average MMSE at every (scheme, epsilon, beta, ell, n)
  and the best (ell, n) per setting.
- beta_sweep: IIR against FR as a function of beta, n optimized per point.
- ell_trend_report: how the best ell moves with the process rate theta.

Presets: table1_specs() (best (ell, n) grid) and fig2_spec() (beta comparison).
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import List, Optional, Sequence, Tuple
import h5py
import numpy as np
import pandas as pd
from ouestimation.penalty import OUMsePenalty, OUParams
from ouestimation.channel import CodingConfig, iir_delay_pmf
from ouestimation.policyiir import LAMBDA_TOL, solve_iir
from ouestimation.policyfr import fr_lambda_closed_form
from ouestimation.utils import SCHEME_LABELS, CSV_FLOAT_FORMAT, SolverError
from ouestimation import utils

PREFIX = " SWEEP:"

TIE_RTOL = 1e-9
RECORD_COLUMNS = ['scheme', 'theta', 'sigma', 'epsilon', 'ell', 'n', 't_b', 'beta',
                  'lambda_star', 'iterations', 'residual']
SETTING_COLUMNS = ['scheme', 'theta', 'sigma', 'epsilon', 't_b', 'beta']
ARGMIN_COLUMNS = SETTING_COLUMNS + ['ell', 'n', 'lambda_star', 'ties']

# Reference best (ell, n) for sigma^2=1, t_b=0.05, beta=0.15
TABLE1_REFERENCE = {
    ('IIR', 0.01, 0.1): (5, 7), ('FR', 0.01, 0.1): (5, 7),
    ('IIR', 0.01, 0.4): (4, 10), ('FR', 0.01, 0.4): (4, 6),
    ('IIR', 0.5, 0.1): (2, 4), ('FR', 0.5, 0.1): (2, 4),
    ('IIR', 0.5, 0.4): (1, 3), ('FR', 0.5, 0.4): (2, 4),
}
FIG2_BETAS = tuple(np.round(np.arange(0.0, 1.5 + 1e-9, 0.05), 10))


@dataclass(frozen=True)
class SweepSpec:
    """
    Grid of coding configurations for one OU process.

    Attributes:
        ou: OU process parameters.
        epsilons: BSC crossover probabilities.
        ell_min, ell_max: Range of quantization bits (inclusive).
        n_extra: n runs up to ell + n_extra (inclusive).
        t_b: Time per bit.
        betas: Processing times.
        schemes: Subset of ('IIR', 'FR').
        n_values: Fixed codeword lengths instead of the ell-relative range
            (values below ell are skipped).
        min_redundancy: Smallest n - ell kept on the grid (2 keeps codes that
            correct at least one bit error).
        pipelined: Just-in-time FR spacing.
    """
    ou: OUParams
    epsilons: Tuple[float, ...]
    ell_min: int = 1
    ell_max: int = 8
    n_extra: int = 24
    t_b: float = 0.05
    betas: Tuple[float, ...] = (0.15,)
    schemes: Tuple[str, ...] = ('IIR', 'FR')
    n_values: Optional[Tuple[int, ...]] = None
    min_redundancy: int = 0
    pipelined: bool = True

    def __post_init__(self):
        object.__setattr__(self, 'epsilons', tuple(float(eps) for eps in np.atleast_1d(self.epsilons)))
        object.__setattr__(self, 'betas', tuple(float(beta) for beta in np.atleast_1d(self.betas)))
        object.__setattr__(self, 'schemes', tuple(self.schemes))
        if not self.epsilons:
            raise ValueError('epsilons must not be empty')
        if not self.betas:
            raise ValueError('betas must not be empty')
        if not self.schemes:
            raise ValueError('schemes must not be empty')
        for scheme in self.schemes:
            if scheme not in SCHEME_LABELS:
                raise ValueError(f'unknown scheme {scheme!r}')
        if not 1 <= self.ell_min <= self.ell_max:
            raise ValueError(f'need 1 <= ell_min <= ell_max, got [{self.ell_min}, {self.ell_max}]')
        if self.n_extra < 0:
            raise ValueError(f'n_extra must be non-negative, got {self.n_extra}')
        if not 0 <= self.min_redundancy <= self.n_extra:
            raise ValueError(f'min_redundancy must be in [0, n_extra], got {self.min_redundancy}')
        if self.n_values is not None:
            object.__setattr__(self, 'n_values', tuple(int(n) for n in self.n_values))
            if not any(n >= self.ell_min + self.min_redundancy for n in self.n_values):
                raise ValueError('n_values has no codeword length >= ell_min + min_redundancy')

    def codeword_lengths(self, ell: int) -> List[int]:
        if self.n_values is not None:
            return [n for n in self.n_values if n >= ell + self.min_redundancy]
        return list(range(ell + self.min_redundancy, ell + self.n_extra + 1))

    def points(self) -> List[Tuple[str, float, float, int, int]]:
        """All (scheme, epsilon, beta, ell, n) grid points in a fixed order."""
        return [(scheme, eps, beta, ell, n)
                for scheme, eps, beta in product(self.schemes, self.epsilons, self.betas)
                for ell in range(self.ell_min, self.ell_max + 1)
                for n in self.codeword_lengths(ell)]


@dataclass(frozen=True, eq=False)
class SweepResult:
    """
    Results of a sweep.

    Attributes:
        records: One row per solved grid point (RECORD_COLUMNS).
        argmins: Best (ell, n) per setting (ARGMIN_COLUMNS); 'ties' lists
            every (ell, n) within the tie tolerance, as 'ell:n' separated by ';'.
        findings: Messages worth reporting (ties, discrepancies).
        failures: Grid points that could not be solved, with the error.
    """
    records: pd.DataFrame
    argmins: pd.DataFrame
    findings: List[str] = field(default_factory=list)
    failures: List[dict] = field(default_factory=list)

    def append_to_file(self, h5file: h5py.File) -> h5py.Group:
        """
        Save records and argmins under '/sweep' (schemes stored as numeric labels).

        Raises:
            UserWarning: If no grid point was solved.
        """
        if self.records.empty:
            raise UserWarning('No sweep records. Nothing was saved.')
        sweep_group = h5file.create_group('/sweep')
        for name, frame in (('records', self.records), ('argmins', self.argmins)):
            group = sweep_group.create_group(name)
            for colname, vals in frame.items():
                if colname == 'scheme':
                    group.create_dataset(colname, data=vals.map(SCHEME_LABELS).to_numpy())
                elif vals.dtype == object:
                    group.create_dataset(colname, data=vals.to_numpy().astype(str).tolist(),
                                         dtype=h5py.string_dtype())
                else:
                    group.create_dataset(colname, data=vals.to_numpy())
        utils.append_dict_to_hdf5(sweep_group, 'schemeLabels', SCHEME_LABELS)
        return sweep_group


def solve_point(ou: OUParams, t_b: float, point: Tuple[str, float, float, int, int],
                pipelined: bool = True) -> dict:
    """Optimal average MMSE at one grid point, as a record."""
    scheme, eps, beta, ell, n = point
    cfg = CodingConfig(ell=ell, n=n, t_b=t_b, beta=beta, epsilon=eps)
    if scheme == 'IIR':
        solution = solve_iir(OUMsePenalty(ou, ell), iir_delay_pmf(cfg), tol=LAMBDA_TOL)
        lambda_star, iterations, residual = solution.lambda_star, solution.iterations, solution.residual
    else:
        lambda_star, iterations, residual = fr_lambda_closed_form(ou, cfg, pipelined), 0, 0.0
    return {'scheme': scheme, 'theta': ou.theta, 'sigma': ou.sigma, 'epsilon': eps,
            'ell': ell, 'n': n, 't_b': t_b, 'beta': beta, 'lambda_star': lambda_star,
            'iterations': iterations, 'residual': residual}


def _solve_or_fail(ou, t_b, pipelined, point):
    try:
        return solve_point(ou, t_b, point, pipelined), None
    except (SolverError, ValueError) as exc:
        scheme, eps, beta, ell, n = point
        return None, {'scheme': scheme, 'epsilon': eps, 'beta': beta, 'ell': ell, 'n': n,
                      'error': f'{type(exc).__name__}: {exc}'}


def find_argmins(records: pd.DataFrame, tie_rtol: float = TIE_RTOL) -> Tuple[pd.DataFrame, List[str]]:
    """
    Best (ell, n) per setting. Points within tie_rtol (relative) of the
    minimum are ties, resolved by the smallest (ell, n).

    Returns:
        (argmins, findings) where findings describe every tie.
    """
    rows = []
    findings = []
    if records.empty:
        return pd.DataFrame(columns=ARGMIN_COLUMNS), findings
    for setting, group in records.groupby(SETTING_COLUMNS, sort=True):
        best = group['lambda_star'].min()
        ties = group[group['lambda_star'] <= best + tie_rtol * abs(best)]
        ties = ties.sort_values(['ell', 'n'])
        chosen = ties.iloc[0]
        tie_text = ';'.join(f'{int(row.ell)}:{int(row.n)}' for row in ties.itertuples()) if len(ties) > 1 else ''
        if tie_text:
            findings.append(f'Tie for {dict(zip(SETTING_COLUMNS, setting))}: {tie_text} '
                            f'(chose {int(chosen.ell)}:{int(chosen.n)})')
        rows.append(dict(zip(SETTING_COLUMNS, setting), ell=int(chosen.ell), n=int(chosen.n),
                         lambda_star=float(chosen.lambda_star), ties=tie_text))
    return pd.DataFrame(rows, columns=ARGMIN_COLUMNS), findings


def grid_search(spec: SweepSpec, workers: Optional[int] = 1, debug: bool = False) -> SweepResult:
    """
    Solve every grid point of spec and find the best (ell, n) per setting.

    IIR points use the bisection solver; FR points use the closed form.
    Points that fail are recorded in SweepResult.failures and skipped.

    Args:
        spec: Sweep grid.
        workers: Worker processes (1 runs serially, None uses all cores).
        debug: Print progress.

    Returns:
        SweepResult with records sorted by (scheme, epsilon, beta, ell, n).
    """
    points = spec.points()
    if debug:
        print(f'{PREFIX} solving {len(points)} grid points for theta={spec.ou.theta}')
    args = ([spec.ou] * len(points), [spec.t_b] * len(points), [spec.pipelined] * len(points), points)
    if workers == 1:
        outcomes = list(map(_solve_or_fail, *args))
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            outcomes = list(executor.map(_solve_or_fail, *args, chunksize=16))
    records = [rec for rec, _ in outcomes if rec is not None]
    failures = [fail for _, fail in outcomes if fail is not None]
    findings = []
    for fail in failures:
        message = f'Excluded {fail}'
        findings.append(message)
        print(f'{PREFIX} {message}')
    records = pd.DataFrame(records, columns=RECORD_COLUMNS)
    if not records.empty:
        records['_order'] = records['scheme'].map(SCHEME_LABELS)
        records = (records.sort_values(['_order', 'theta', 'epsilon', 'beta', 'ell', 'n'])
                   .drop(columns='_order').reset_index(drop=True))
    argmins, tie_findings = find_argmins(records)
    for message in tie_findings:
        print(f'{PREFIX} {message}')
    if debug:
        print(f'{PREFIX} done: {len(records)} records, {len(failures)} failures')
    return SweepResult(records=records, argmins=argmins,
                       findings=findings + tie_findings, failures=failures)


def merge_results(results: Sequence[SweepResult]) -> SweepResult:
    """Concatenate sweeps over different processes into one result."""
    records = pd.concat([res.records for res in results], ignore_index=True)
    argmins = pd.concat([res.argmins for res in results], ignore_index=True)
    return SweepResult(records=records, argmins=argmins,
                       findings=[msg for res in results for msg in res.findings],
                       failures=[fail for res in results for fail in res.failures])


def table1_specs(ell_max: int = 8, n_extra: int = 24, min_redundancy: int = 2) -> List[SweepSpec]:
    """Reference (ell, n) grid, one spec per theta. Codes correct at least one bit by default."""
    return [SweepSpec(ou=OUParams(theta=theta, sigma=1.0), epsilons=(0.1, 0.4),
                      ell_min=1, ell_max=ell_max, n_extra=n_extra, t_b=0.05, betas=(0.15,),
                      min_redundancy=min_redundancy)
            for theta in (0.01, 0.5)]


def fig2_spec(betas: Sequence[float] = FIG2_BETAS, n_extra: int = 24) -> SweepSpec:
    """IIR against FR over beta with theta=0.25 and ell=3 bits."""
    return SweepSpec(ou=OUParams(theta=0.25, sigma=1.0), epsilons=(0.1, 0.4),
                     ell_min=3, ell_max=3, n_extra=n_extra, t_b=0.05, betas=tuple(betas))


def table1_discrepancies(argmins: pd.DataFrame) -> List[str]:
    """Settings whose best (ell, n) differs from TABLE1_REFERENCE."""
    messages = []
    for row in argmins.itertuples():
        key = (row.scheme, round(row.theta, 12), round(row.epsilon, 12))
        expected = TABLE1_REFERENCE.get(key)
        if expected is not None and expected != (row.ell, row.n):
            messages.append(f'{row.scheme} theta={row.theta} epsilon={row.epsilon}: '
                            f'found ({row.ell}, {row.n}), expected {expected}')
    return messages


def beta_sweep(spec: SweepSpec, workers: Optional[int] = 1, debug: bool = False) -> SweepResult:
    """
    Optimal average MMSE of each scheme as a function of beta, with (ell, n)
    optimized over the spec's range at every beta. The curves are the argmins.
    """
    if not spec.betas:
        raise ValueError('beta grid must not be empty')
    return grid_search(spec, workers=workers, debug=debug)


def curve_frame(result: SweepResult) -> pd.DataFrame:
    """Curve data (beta, lambda_star) per scheme and epsilon, sorted by beta."""
    curves = result.argmins[['scheme', 'epsilon', 'beta', 'ell', 'n', 'lambda_star']]
    return curves.sort_values(['scheme', 'epsilon', 'beta']).reset_index(drop=True)


def find_crossover(result: SweepResult, epsilon: float) -> Optional[float]:
    """
    Smallest beta on the grid from which FR beats IIR at every larger beta.

    Returns:
        The crossover beta, or None if FR is not better at the largest beta.
    """
    curves = curve_frame(result)
    curves = curves[np.isclose(curves['epsilon'].astype(float), epsilon)]
    if not {'IIR', 'FR'} <= set(curves['scheme']):
        raise ValueError(f'need both schemes at epsilon={epsilon}')
    table = curves.pivot_table(index='beta', columns='scheme', values='lambda_star')
    table = table.dropna().sort_index()
    fr_better = (table['FR'] < table['IIR']).to_numpy()
    if not fr_better[-1]:
        return None
    last_worse = np.flatnonzero(~fr_better)
    start = 0 if last_worse.size == 0 else last_worse[-1] + 1
    return float(table.index[start])


@dataclass(frozen=True, eq=False)
class TrendReport:
    """
    Best ell against theta.

    Attributes:
        table: One row per (scheme, epsilon, t_b, beta, theta) with ell_star.
        consistent: True if ell_star never increases with theta.
        findings: Description of each violation.
    """
    table: pd.DataFrame
    consistent: bool
    findings: List[str]


def ell_trend_report(argmins: pd.DataFrame) -> TrendReport:
    """
    Check that the best ell is nonincreasing in theta, all else fixed.
    Violations are reported, not raised.
    """
    table = (argmins[['scheme', 'epsilon', 't_b', 'beta', 'theta', 'ell']]
             .rename(columns={'ell': 'ell_star'})
             .sort_values(['scheme', 'epsilon', 't_b', 'beta', 'theta'])
             .reset_index(drop=True))
    findings = []
    for key, group in table.groupby(['scheme', 'epsilon', 't_b', 'beta'], sort=True):
        ells = group['ell_star'].to_numpy()
        thetas = group['theta'].to_numpy()
        for ind in np.flatnonzero(np.diff(ells) > 0):
            findings.append(f'{key}: ell*={ells[ind + 1]} at theta={thetas[ind + 1]} '
                            f'exceeds ell*={ells[ind]} at theta={thetas[ind]}')
    return TrendReport(table=table, consistent=not findings, findings=findings)


def write_records_csv(result: SweepResult, filepath: str) -> None:
    result.records.to_csv(filepath, index=False, float_format=CSV_FLOAT_FORMAT)


def write_argmins_csv(result: SweepResult, filepath: str) -> None:
    result.argmins.to_csv(filepath, index=False, float_format=CSV_FLOAT_FORMAT)


def write_failures_csv(result: SweepResult, filepath: str) -> None:
    """Manifest of the grid points that could not be solved."""
    pd.DataFrame(result.failures, columns=['scheme', 'epsilon', 'beta', 'ell', 'n', 'error']).to_csv(
        filepath, index=False, float_format=CSV_FLOAT_FORMAT)


def read_records_csv(filepath: str) -> pd.DataFrame:
    """Read sweep records written by write_records_csv."""
    records = pd.read_csv(filepath)
    if list(records.columns) != RECORD_COLUMNS:
        raise ValueError(f'Unexpected record header in {filepath}: {list(records.columns)}')
    return records


def read_argmins_csv(filepath: str) -> pd.DataFrame:
    argmins = pd.read_csv(filepath, keep_default_na=False)
    if list(argmins.columns) != ARGMIN_COLUMNS:
        raise ValueError(f'Unexpected argmin header in {filepath}: {list(argmins.columns)}')
    return argmins
