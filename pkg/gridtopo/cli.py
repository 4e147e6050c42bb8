"""
gridtopo command line: simulate measurements, estimate (G, B~) with the
ALM or the reference solver, score estimates, run Monte-Carlo sweeps and
print case statistics.

Exit codes: 0 success, 2 usage error, 3 data / schema error, 4 numerical failure.
"""

import json
from pathlib import Path

import click
import humanize
import pandas as pd

from gridtopo import io
from gridtopo.alm import estimate as alm_estimate
from gridtopo.alm import resolve_lambdas
from gridtopo.config import (
    MODEL_KINDS,
    AlmConfig,
    ExperimentConfig,
    GridSpec,
    OracleConfig,
    SimSpec,
)
from gridtopo.datagen import gen_grid, grid_from_case, simulate
from gridtopo.errors import EXIT_DATA, GridTopoError, SchemaError, UndefinedRatioError
from gridtopo.experiment import run_montecarlo
from gridtopo.lapcore import (
    ComplexAdmittance,
    LineList,
    RealLaplacian,
    fscore,
    magnitude_ratio,
    mse,
    support_of,
)
from gridtopo.models import MeasurementSet, NoiseModel, build_quadratic
from gridtopo.oracle import solve as oracle_solve
from gridtopo.plotting import render
from gridtopo.utils import get_threads
from gridtopo.utils import logger as _logger

logger = _logger.getChild('cli')

MEASUREMENTS_FILE = 'measurements.csv'


class GridTopoGroup(click.Group):
    """Maps gridtopo errors onto exit codes instead of tracebacks"""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except GridTopoError as e:
            click.echo(f'Error: {e}', err=True)
            ctx.exit(e.exit_code)
        except OSError as e:
            click.echo(f'Error: {e}', err=True)
            ctx.exit(EXIT_DATA)


def _model_option(**kwargs):
    return click.option('--model', 'model_kind', type=click.Choice(MODEL_KINDS), **kwargs)


def _solver_options(f):
    """Flags overriding the solver config file"""
    options = [
        click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='Solver config (toml or json)'),
        click.option('--rho', type=click.FloatRange(min=0, min_open=True), help='Penalty parameter'),
        click.option('--lambda-g', type=click.FloatRange(min=0), help='l1 weight on G'),
        click.option('--lambda-b', type=click.FloatRange(min=0), help='l1 weight on B~'),
        click.option('--max-iters', type=click.IntRange(min=1), help='Iteration cap'),
        click.option('--eps', type=click.FloatRange(min=0, min_open=True), help='Stopping tolerance'),
        click.option('--seed', type=int, help='Echoed into the report'),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def _solver_config(config_path: str | None, **overrides) -> AlmConfig:
    base = AlmConfig.from_file(config_path) if config_path else AlmConfig()
    return base.with_overrides(**overrides)


def _truth(case: str | None, grid: GridSpec | None) -> tuple[ComplexAdmittance, LineList]:
    if case is not None:
        return grid_from_case(case)
    if grid is None:
        raise click.UsageError('Either --case or --grid-m is required')
    return gen_grid(grid)


def _load_noise(meas_path: Path, sigma2: float | None, noise_path: str | None) -> NoiseModel:
    """--noise matrix, then --sigma2, then the sidecar next to the measurements"""
    if noise_path:
        return io.read_noise(noise_path)
    if sigma2 is None:
        sidecar = io.read_json(io.sidecar_path(meas_path))
        if 'sigma2' not in sidecar:
            raise SchemaError(f'{io.sidecar_path(meas_path)}: no sigma2 recorded')
        sigma2 = float(sidecar['sigma2'])
    m = int(pd.read_csv(meas_path, usecols=['bus'])['bus'].nunique())
    return NoiseModel.isotropic(m, sigma2)


def _load_measurements(meas: str, model_kind: str, sigma2: float | None, noise: str | None) -> MeasurementSet:
    meas_path = Path(meas)
    return io.read_measurements(meas_path, model_kind, _load_noise(meas_path, sigma2, noise))


def _write_estimate(out: Path, g: RealLaplacian | None, b: RealLaplacian, report: dict):
    out.mkdir(parents=True, exist_ok=True)
    if g is not None:
        io.write_matrix(out / 'g_hat.csv', g.entries)
    io.write_matrix(out / 'b_hat.csv', b.entries)
    io.write_json(out / 'report.json', report)


@click.group(cls=GridTopoGroup)
@click.version_option(package_name='gridtopo')
def cli():
    """Admittance matrix estimation with Laplacian constraints"""


@cli.command('simulate')
@click.option('--case', help='Bundled case name (ieee14, ieee33) or case CSV path')
@click.option('--grid-m', type=click.IntRange(min=2), help='Random grid with this many buses instead of a case')
@click.option('--extra-edges', type=click.IntRange(min=0), default=0, show_default=True)
@click.option('--overlap', type=click.FloatRange(min=0, max=1, min_open=True), default=1.0, show_default=True)
@click.option('--ratio-mean', type=click.FloatRange(min=0, min_open=True), default=1.0, show_default=True)
@_model_option(required=True)
@click.option('--snr-db', type=float, default=30.0, show_default=True)
@click.option('--samples', type=click.IntRange(min=1), default=800, show_default=True)
@click.option('--noiseless', is_flag=True, help='Record R_eta but add no noise')
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--out', type=click.Path(file_okay=False), default='.', show_default=True)
def simulate_cmd(
    case: str | None,
    grid_m: int | None,
    extra_edges: int,
    overlap: float,
    ratio_mean: float,
    model_kind: str,
    snr_db: float,
    samples: int,
    noiseless: bool,
    seed: int,
    out: str,
):
    """Simulate measurements; writes measurements.csv, its sidecar and the truth"""
    grid = None
    if grid_m is not None:
        grid = GridSpec(m=grid_m, extra_edges=extra_edges, overlap=overlap, ratio_mean=ratio_mean, seed=seed)
    adm, lines = _truth(case, grid)
    spec = SimSpec(model_kind=model_kind, n_samples=samples, snr_db=snr_db, noiseless=noiseless, seed=seed)
    meas = simulate(adm, spec)

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    meas_path = out_dir / MEASUREMENTS_FILE
    io.write_measurements(meas_path, meas)
    io.write_case(out_dir / 'truth_case.csv', lines)
    io.write_matrix(out_dir / 'truth_g.csv', adm.g.entries)
    io.write_matrix(out_dir / 'truth_b.csv', adm.b_tilde.entries)
    io.write_json(
        io.sidecar_path(meas_path),
        {
            'sigma2': meas.noise.sigma2,
            'seed': seed,
            'case': case,
            'grid': None if grid is None else grid.to_dict(),
            'spec': spec.to_dict(),
            'm': meas.m,
        },
    )
    click.echo(f'Wrote {meas.n_samples} samples x {meas.m} buses to {meas_path} (sigma2={meas.noise.sigma2:.6g})')


@cli.command('estimate')
@click.option('--meas', required=True, type=click.Path(dir_okay=False), help='Measurement CSV')
@_model_option(required=True, help='Model the measurement file was written for')
@click.option('--fit', type=click.Choice(MODEL_KINDS), help='Model to fit, defaults to --model')
@click.option('--sigma2', type=click.FloatRange(min=0, min_open=True), help='R_eta = sigma2 I')
@click.option('--noise', type=click.Path(dir_okay=False), help='R_eta matrix CSV')
@_solver_options
@click.option('--out', type=click.Path(file_okay=False), default='.', show_default=True)
def estimate_cmd(meas, model_kind, fit, sigma2, noise, config_path, out, **overrides):
    """Estimate G and B~ with the augmented Lagrangian solver"""
    cfg = _solver_config(config_path, **overrides)
    data = _load_measurements(meas, model_kind, sigma2, noise)
    report = alm_estimate(data, cfg, fit)
    payload = {'model': model_kind, 'fit': fit or model_kind, 'seed': cfg.seed, **report.to_dict()}
    _write_estimate(Path(out), report.g_hat, report.b_hat_tilde, payload)
    click.echo(
        f'{"Converged" if report.converged else "Not converged"} after {report.iterations} iterations',
    )


@cli.command('oracle')
@click.option('--meas', required=True, type=click.Path(dir_okay=False), help='Measurement CSV')
@_model_option(required=True)
@click.option('--fit', type=click.Choice(MODEL_KINDS), help='Model to fit, defaults to --model')
@click.option('--sigma2', type=click.FloatRange(min=0, min_open=True))
@click.option('--noise', type=click.Path(dir_okay=False))
@_solver_options
@click.option('--oracle-config', type=click.Path(dir_okay=False), help='Reference solver config')
@click.option('--out', type=click.Path(file_okay=False), default='.', show_default=True)
def oracle_cmd(meas, model_kind, fit, sigma2, noise, config_path, oracle_config, out, **overrides):
    """Solve the same program with projected gradient descent (small M only)"""
    data = _load_measurements(meas, model_kind, sigma2, noise)
    cfg = resolve_lambdas(data, _solver_config(config_path, **overrides))
    ocfg = OracleConfig.from_file(oracle_config) if oracle_config else OracleConfig()
    result = oracle_solve(build_quadratic(data, fit), cfg.lambda_g, cfg.lambda_b, ocfg)
    payload = {
        'model': model_kind,
        'fit': fit or model_kind,
        'lambda_g': cfg.lambda_g,
        'lambda_b': cfg.lambda_b,
        **result.to_dict(),
    }
    g = None if result.g is None else RealLaplacian(result.g)
    _write_estimate(Path(out), g, RealLaplacian(result.b_tilde), payload)
    click.echo(f'Oracle objective {result.objective:.12g} after {result.iterations} iterations')


@cli.command('eval')
@click.option('--case', required=True, help='Ground-truth case name or CSV path')
@click.option('--b', 'b_path', required=True, type=click.Path(dir_okay=False), help='Estimated B~ CSV')
@click.option('--g', 'g_path', type=click.Path(dir_okay=False), help='Estimated G CSV')
@click.option('--out', type=click.Path(dir_okay=False), help='Also write the metrics JSON here')
def eval_cmd(case, b_path, g_path, out):
    """Print the MSE and support F-score of an estimate as JSON"""
    truth, _ = grid_from_case(case)
    b_hat = io.read_matrix(b_path)
    metrics = {
        'mse_b': mse(truth.b_tilde, b_hat),
        'fscore_b': fscore(support_of(truth.b_tilde), support_of(b_hat)),
    }
    if g_path:
        g_hat = io.read_matrix(g_path)
        metrics['mse_g'] = mse(truth.g, g_hat)
        metrics['fscore_g'] = fscore(support_of(truth.g), support_of(g_hat))
    if out:
        io.write_json(out, metrics)
    click.echo(json.dumps(metrics, indent=2, sort_keys=True))


@cli.command('montecarlo')
@click.option('--config', 'config_path', required=True, type=click.Path(dir_okay=False), help='Experiment config')
@click.option('--trials', type=click.IntRange(min=1))
@click.option('--seed', type=int)
@click.option('--out', type=click.Path(file_okay=False))
@click.option('--threads', type=click.IntRange(min=1), default=1, show_default=True, help='GRIDTOPO_THREADS wins')
@click.option('--plot', is_flag=True, help='Also render MSE / F-score figures')
def montecarlo_cmd(config_path, trials, seed, out, threads, plot):
    """Monte-Carlo sweep over SNR and trials"""
    cfg = ExperimentConfig.from_file(config_path)
    overrides = {k: v for k, v in {'trials': trials, 'seed': seed, 'out': out}.items() if v is not None}
    if overrides:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), **overrides})

    report = run_montecarlo(cfg, threads=get_threads(threads))
    summary = report.write(cfg.out)
    if plot:
        render(report, cfg.out)
    click.echo(
        f'{humanize.intcomma(summary["rows"])} rows, {summary["failed"]} failed, '
        f'results digest {summary["results_xxh32"]}',
    )


def case_stats(case: str) -> dict:
    """Support sizes of G and B~, their support F-score and the mean |b~|/|g| ratio"""
    adm, _ = grid_from_case(case)
    support_g, support_b = support_of(adm.g), support_of(adm.b_tilde)
    try:
        ratio = magnitude_ratio(adm.g, adm.b_tilde)
    except UndefinedRatioError:
        ratio = None
    return {
        'case': Path(case).stem if case.endswith('.csv') else case,
        'buses': adm.m,
        'support_g': len(support_g),
        'support_b': len(support_b),
        'fscore': fscore(support_g, support_b),
        'ratio': ratio,
    }


@cli.command('case-stats')
@click.argument('cases', nargs=-1)
@click.option('--json', 'as_json', is_flag=True, help='Emit JSON instead of a table')
def case_stats_cmd(cases, as_json):
    """Table of joint-sparsity statistics for the given (default: bundled) cases"""
    rows = [case_stats(case) for case in (cases or ('ieee14', 'ieee33'))]
    if as_json:
        click.echo(json.dumps(rows, indent=2))
        return
    table = pd.DataFrame(
        [
            {
                'case': row['case'],
                'buses': humanize.intcomma(row['buses']),
                '|supp G|': humanize.intcomma(row['support_g']),
                '|supp B~|': humanize.intcomma(row['support_b']),
                'F-score': f'{row["fscore"]:.3f}',
                'ratio': 'n/a' if row['ratio'] is None else f'{row["ratio"]:.3f}',
            }
            for row in rows
        ],
    )
    click.echo(table.to_string(index=False))


def main():
    cli()  # pylint: disable=no-value-for-parameter


if __name__ == '__main__':
    main()
