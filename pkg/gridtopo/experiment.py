"""
Monte-Carlo sweeps: for every SNR and trial, simulate fresh measurements on
a fixed grid, fit each model variant with the ALM and score the estimates.
"""

import dataclasses
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import pandas as pd
import xxhash

from gridtopo import io
from gridtopo.alm import estimate
from gridtopo.config import ExperimentConfig, ModelKind, SimSpec
from gridtopo.datagen import gen_grid, grid_from_case, simulate
from gridtopo.errors import GridTopoError
from gridtopo.lapcore import ComplexAdmittance, fscore, mse, support_of
from gridtopo.utils import FLOAT_FORMAT
from gridtopo.utils import logger as _logger

logger = _logger.getChild('experiment')

RESULT_COLUMNS = (
    'snr_db',
    'trial',
    'variant',
    'mse_g',
    'mse_b',
    'fscore_g',
    'fscore_b',
    'iterations',
    'converged',
    'error',
)
METRICS = ['mse_g', 'mse_b', 'fscore_g', 'fscore_b', 'iterations']


@dataclasses.dataclass(frozen=True)
class Trial:
    snr_index: int
    snr_db: float
    trial: int
    seed: int


def trial_seed(base: int, snr_index: int, trials: int, trial: int) -> int:
    """Every (SNR, trial) gets its own seed, independent of scheduling"""
    return base + snr_index * trials + trial


def plan_trials(cfg: ExperimentConfig) -> list[Trial]:
    return [
        Trial(k, float(snr), t, trial_seed(cfg.seed, k, cfg.trials, t))
        for k, snr in enumerate(cfg.snr_db)
        for t in range(cfg.trials)
    ]


def truth_of(cfg: ExperimentConfig) -> ComplexAdmittance:
    if cfg.grid is not None:
        adm, _ = gen_grid(cfg.grid)
    else:
        adm, _ = grid_from_case(str(cfg.case))
    return adm


def score(truth: ComplexAdmittance, g_hat: np.ndarray | None, b_hat: np.ndarray) -> dict[str, float]:
    """MSE and support F-score per matrix; the G metrics are NaN when G was not estimated"""
    row = {
        'mse_b': mse(truth.b_tilde, b_hat),
        'fscore_b': fscore(support_of(truth.b_tilde), support_of(b_hat)),
        'mse_g': float('nan'),
        'fscore_g': float('nan'),
    }
    if g_hat is not None:
        row['mse_g'] = mse(truth.g, g_hat)
        row['fscore_g'] = fscore(support_of(truth.g), support_of(g_hat))
    return row


def _run_variant(truth: ComplexAdmittance, meas, cfg: ExperimentConfig, variant: ModelKind) -> dict:
    try:
        report = estimate(meas, cfg.solver, variant)
    except GridTopoError as e:
        return {
            'mse_g': float('nan'),
            'mse_b': float('nan'),
            'fscore_g': float('nan'),
            'fscore_b': float('nan'),
            'iterations': 0,
            'converged': False,
            'error': f'{type(e).__name__}: {e}',
        }
    g_hat = None if report.g_hat is None else report.g_hat.entries
    return {
        **score(truth, g_hat, report.b_hat_tilde.entries),
        'iterations': report.iterations,
        'converged': report.converged,
        'error': '',
    }


def run_trial(truth: ComplexAdmittance, cfg: ExperimentConfig, trial: Trial) -> tuple[list[dict], list[dict]]:
    """One simulation, every variant fitted to it; returns (result rows, timing rows)"""
    spec = SimSpec(
        model_kind=cfg.model_kind,
        n_samples=cfg.n_samples,
        snr_db=trial.snr_db,
        voltage_profile=cfg.voltage_profile,
        seed=trial.seed,
    )
    meas = simulate(truth, spec)

    rows, timings = [], []
    for variant in cfg.fitted_variants:
        start = time.perf_counter()
        row = _run_variant(truth, meas, cfg, variant)
        elapsed = time.perf_counter() - start
        if row['error']:
            logger.warning(
                f'snr={trial.snr_db} trial={trial.trial} variant={variant} failed: {row["error"]}',
            )
        rows.append({'snr_db': trial.snr_db, 'trial': trial.trial, 'variant': variant, **row})
        timings.append(
            {'snr_db': trial.snr_db, 'trial': trial.trial, 'variant': variant, 'wall_time_s': elapsed},
        )
    return rows, timings


@dataclasses.dataclass(frozen=True, eq=False)
class ExperimentReport:
    config: ExperimentConfig
    results: pd.DataFrame
    timings: pd.DataFrame

    @property
    def aggregates(self) -> pd.DataFrame:
        """Median and mean of every metric per (variant, SNR), flat column names"""
        table = self.results.groupby(['variant', 'snr_db'], sort=True)[METRICS].agg(['median', 'mean'])
        table.columns = [f'{metric}_{stat}' for metric, stat in table.columns]
        return table.reset_index()

    @property
    def n_failed(self) -> int:
        return int((self.results['error'] != '').sum())

    def results_csv(self) -> str:
        return self.results.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n')

    def write(self, out_dir: str | Path) -> dict:
        """results.csv, aggregates.csv, timings.csv and summary.json; returns the summary"""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        results_text = self.results_csv()
        (out / 'results.csv').write_text(results_text, encoding='utf-8')
        self.aggregates.to_csv(
            out / 'aggregates.csv',
            index=False,
            float_format=FLOAT_FORMAT,
            lineterminator='\n',
        )
        self.timings.to_csv(out / 'timings.csv', index=False, float_format=FLOAT_FORMAT, lineterminator='\n')

        summary = {
            'config': self.config.to_dict(),
            'rows': len(self.results),
            'failed': self.n_failed,
            'results_xxh32': xxhash.xxh32(results_text.encode()).hexdigest(),
        }
        io.write_json(out / 'summary.json', summary)
        return summary


def run_montecarlo(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    """
    Trials run on a thread pool; results are gathered in plan order so the
    output does not depend on the thread count.
    """
    truth = truth_of(cfg)
    trials = plan_trials(cfg)
    logger.info(
        f'Monte-Carlo: {len(cfg.snr_db)} SNRs x {cfg.trials} trials x '
        f'{len(cfg.fitted_variants)} variants on M={truth.m}, {threads} thread(s)',
    )

    def task(trial: Trial):
        return run_trial(truth, cfg, trial)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(task, trials))
    else:
        outputs = [task(t) for t in trials]

    rows = [row for result_rows, _ in outputs for row in result_rows]
    timing_rows = [row for _, timing in outputs for row in timing]
    report = ExperimentReport(
        config=cfg,
        results=pd.DataFrame(rows, columns=list(RESULT_COLUMNS)),
        timings=pd.DataFrame(timing_rows, columns=['snr_db', 'trial', 'variant', 'wall_time_s']),
    )
    logger.info(f'Monte-Carlo done: {len(report.results)} rows, {report.n_failed} failed')
    return report
