"""
Test the Monte-Carlo harness
"""

import os
import tempfile
from pathlib import Path
from unittest import TestCase, skipUnless

import numpy as np
import pandas as pd
import xxhash

from gridtopo.config import AlmConfig, ExperimentConfig, GridSpec
from gridtopo.datagen import gen_grid
from gridtopo.experiment import RESULT_COLUMNS, plan_trials, run_montecarlo, score, trial_seed

SLOW = bool(os.getenv('GRIDTOPO_SLOW'))


def small_config(**kwargs) -> ExperimentConfig:
    values = {
        'model_kind': 'ac',
        'snr_db': [10.0, 20.0],
        'grid': GridSpec(m=4, extra_edges=1, seed=1),
        'variants': ['ac', 'dlpf'],
        'trials': 2,
        'n_samples': 40,
        'solver': AlmConfig(max_iters=50),
        'seed': 3,
    }
    values.update(kwargs)
    return ExperimentConfig(**values)


class TestPlan(TestCase):
    """Test trial planning and scoring"""

    def test_seeds(self):
        """Check every (SNR, trial) pair gets a distinct, position-derived seed"""
        trials = plan_trials(small_config(trials=3))
        self.assertEqual(6, len(trials))
        self.assertEqual([3, 4, 5, 6, 7, 8], [t.seed for t in trials])
        self.assertEqual(3 + 1 * 3 + 2, trial_seed(3, 1, 3, 2))

    def test_score_truth(self):
        """Check the truth scores MSE 0 and F-score 1"""
        adm, _ = gen_grid(GridSpec(m=5, seed=2))
        row = score(adm, adm.g.entries, adm.b_tilde.entries)
        self.assertEqual({'mse_g': 0.0, 'mse_b': 0.0, 'fscore_g': 1.0, 'fscore_b': 1.0}, row)

    def test_score_without_g(self):
        """Check G metrics are NaN when G isn't estimated"""
        adm, _ = gen_grid(GridSpec(m=3, seed=2))
        row = score(adm, None, adm.b_tilde.entries)
        self.assertTrue(np.isnan(row['mse_g']))
        self.assertTrue(np.isnan(row['fscore_g']))


class TestRunMontecarlo(TestCase):
    """Small end-to-end sweeps"""

    def test_rows(self):
        """Check one row per SNR, trial and variant"""
        report = run_montecarlo(small_config())
        self.assertEqual(list(RESULT_COLUMNS), list(report.results.columns))
        self.assertEqual(8, len(report.results))
        self.assertEqual({'ac': 4, 'dlpf': 4}, report.results['variant'].value_counts().to_dict())
        self.assertEqual(0, report.n_failed)
        self.assertEqual(8, len(report.timings))

    def test_thread_count_independent(self):
        """Check the results CSV is byte-identical with 1 and 2 threads"""
        cfg = small_config()
        self.assertEqual(run_montecarlo(cfg, threads=1).results_csv(), run_montecarlo(cfg, threads=2).results_csv())

    def test_aggregates(self):
        """Check the per-(variant, SNR) table"""
        table = run_montecarlo(small_config()).aggregates
        self.assertEqual(4, len(table))
        for column in ('variant', 'snr_db', 'mse_b_median', 'mse_b_mean', 'fscore_g_median', 'iterations_mean'):
            self.assertIn(column, table.columns)

    def test_dc_has_no_g_metrics(self):
        """Check DC sweeps leave the G columns empty"""
        report = run_montecarlo(small_config(model_kind='dc', variants=None, snr_db=[20.0], trials=1))
        self.assertTrue(report.results['mse_g'].isna().all())
        self.assertEqual(['dc'], list(report.results['variant']))

    def test_write(self):
        """Check the output files and the results digest"""
        report = run_montecarlo(small_config(trials=1))
        with tempfile.TemporaryDirectory() as tmp:
            summary = report.write(tmp)
            out = Path(tmp)
            for name in ('results.csv', 'aggregates.csv', 'timings.csv', 'summary.json'):
                self.assertTrue((out / name).exists(), name)
            digest = xxhash.xxh32((out / 'results.csv').read_bytes()).hexdigest()
            self.assertEqual(digest, summary['results_xxh32'])
            self.assertEqual(4, summary['rows'])
            self.assertNotIn('wall_time_s', pd.read_csv(out / 'results.csv').columns)


@skipUnless(SLOW, 'set GRIDTOPO_SLOW=1 to run')
class TestAcceptance(TestCase):
    """Sweeps on the 33-bus feeder with the default solver settings"""

    def sweep(self, model_kind: str, snr_db: list[float], seed: int, variants=None) -> pd.DataFrame:
        cfg = ExperimentConfig(
            model_kind=model_kind,
            case='ieee33',
            snr_db=snr_db,
            variants=variants,
            trials=20,
            n_samples=800,
            seed=seed,
        )
        return run_montecarlo(cfg, threads=4).results

    def test_high_snr_support_recovery(self):
        """Check DLPF fits of 40 dB DLPF data recover both supports in 90% of trials"""
        results = self.sweep('dlpf', [40.0], 7)
        perfect = (results['fscore_g'] == 1.0) & (results['fscore_b'] == 1.0)
        self.assertGreaterEqual(perfect.mean(), 0.9)

    def test_mse_falls_with_snr(self):
        """Check the median B~ error of DLPF fits strictly decreases from 10 to 40 dB"""
        results = self.sweep('dlpf', [10.0, 20.0, 30.0, 40.0], 5)
        medians = results.groupby('snr_db')['mse_b'].median().sort_index()
        self.assertTrue(medians.is_monotonic_decreasing, medians.to_dict())
        self.assertTrue(medians.is_unique, medians.to_dict())

    def test_matched_model_wins_on_ac_data(self):
        """Check the AC fit has the lowest B~ error and the best support on 30 dB AC data"""
        results = self.sweep('ac', [30.0], 11, variants=['ac', 'dlpf', 'dc'])
        by_variant = results.groupby('variant')
        mse = by_variant['mse_b'].median()
        fscore = by_variant['fscore_b'].median()
        self.assertLessEqual(mse['ac'], mse['dlpf'])
        # DLPF at most on par with DC
        self.assertLessEqual(mse['dlpf'], 1.1 * mse['dc'])
        self.assertGreaterEqual(fscore['ac'], fscore['dlpf'])
        self.assertGreaterEqual(fscore['ac'], fscore['dc'])

    def test_matched_model_wins(self):
        """Check the DLPF fit has the lowest median B~ error on 40 dB DLPF data"""
        results = self.sweep('dlpf', [40.0], 11, variants=['dlpf', 'dc', 'ac'])
        medians = results.groupby('variant')['mse_b'].median()
        self.assertLessEqual(medians['dlpf'], medians['dc'])
        self.assertLessEqual(medians['dlpf'], medians['ac'])
