"""
Test the augmented Lagrangian solver
"""

import dataclasses
from unittest import TestCase

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from gridtopo.alm import (
    AlmState,
    BlockSystem,
    _cho_factor,
    build_e_matrix,
    effective_rho,
    estimate,
    finalize,
    gamma_vector,
    init_from_samples,
    update_b,
    update_multipliers,
)
from gridtopo.config import AlmConfig, GridSpec, SimSpec
from gridtopo.datagen import gen_grid, simulate
from gridtopo.errors import SingularSystemError
from gridtopo.lapcore import LineList, build_admittance, check_laplacian
from gridtopo.models import build_quadratic
from gridtopo.utils import unvec, vec

# tight stop for accuracy checks
EXACT = AlmConfig(eps=1e-20, max_iters=3000)


def rel_error(truth: np.ndarray, est: np.ndarray) -> float:
    return float(np.linalg.norm(est - truth) / np.linalg.norm(truth))


class TestBuildingBlocks(TestCase):
    """Test E, the multiplier step and finalization"""

    def test_e_matrix_action(self):
        """Check E vec(X) = vec(X11' + 2X - 2X')"""
        rng = np.random.default_rng(0)
        x = rng.standard_normal((4, 4))
        ones = np.ones((4, 4))
        assert_allclose(vec(x @ ones + 2 * x - 2 * x.T), build_e_matrix(4) @ vec(x))

    def test_e_matrix_null_space(self):
        """Check E is PSD and vanishes on Laplacians"""
        e = build_e_matrix(4)
        assert_allclose(e, e.T)
        self.assertGreater(np.linalg.eigvalsh(e)[0], -1e-12)
        lap = np.array([[2.0, -1, -1, 0], [-1, 1, 0, 0], [-1, 0, 2, -1], [0, 0, -1, 1]])
        assert_allclose(np.zeros(16), e @ vec(lap), atol=1e-15)

    def test_multipliers_at_feasible_point(self):
        """Check a feasible point with zero multipliers leaves them at zero"""
        lap = np.array([[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]])
        state = AlmState.start(lap, lap, rho=0.5)
        updated = update_multipliers(state, AlmConfig())
        assert_array_equal(np.zeros((3, 3)), updated.lam_b)
        assert_array_equal(np.zeros(3), updated.mu_g)
        assert_array_equal(np.zeros((3, 3)), updated.v_b)
        self.assertEqual(1, updated.iter)

    def test_multipliers_diagonal_held(self):
        """Check Lambda stays zero on the diagonal and tracks positive off-diagonals"""
        x = np.array([[1.0, 0.5], [0.5, 1.0]])
        updated = update_multipliers(AlmState.start(x, x, rho=2.0, estimates_g=False), AlmConfig())
        assert_array_equal(np.array([[0.0, 1.0], [1.0, 0.0]]), updated.lam_b)
        # G multipliers untouched when G isn't estimated
        assert_array_equal(np.zeros((2, 2)), updated.lam_g)
        assert_allclose(np.array([3.0, 3.0]), updated.mu_b)

    def test_finalize_is_feasible(self):
        """Check finalized outputs pass the Laplacian invariants"""
        rng = np.random.default_rng(1)
        for _ in range(10):
            g_hat, b_hat = finalize(rng.standard_normal((5, 5)), rng.standard_normal((5, 5)))
            self.assertEqual([], check_laplacian(g_hat.entries))
            self.assertEqual([], check_laplacian(b_hat.entries))

    def test_finalize_without_g(self):
        """Check finalize passes None through for G"""
        g_hat, _ = finalize(None, np.zeros((3, 3)))
        self.assertIsNone(g_hat)

    def test_cho_factor_jitter(self):
        """Check a singular PSD system is rescued by jitter, a zero one is not"""
        _cho_factor(np.ones((3, 3)), 1e-10, 'ones')
        with self.assertRaises(SingularSystemError):
            _cho_factor(np.zeros((3, 3)), 0.0, 'zeros')

    def test_block_system_solves(self):
        """Check the active-set solve against a dense solve"""
        rng = np.random.default_rng(2)
        a = rng.standard_normal((9, 9))
        h = a @ a.T
        system = BlockSystem(h, 0.3, 1e-10, 'test')
        active = np.zeros((3, 3), dtype=bool)
        active[0, 1] = active[1, 0] = True
        rhs = rng.standard_normal(9)
        dense = h + 0.3 * build_e_matrix(3) + 0.3 * np.diag(vec(active).astype(float))
        assert_allclose(np.linalg.solve(dense, rhs), system.solve_with_active_set(active, rhs), rtol=1e-8)

    def test_block_system_reuses_factor(self):
        """Check a repeated active set reuses the cached factorization"""
        rng = np.random.default_rng(3)
        a = rng.standard_normal((4, 4))
        system = BlockSystem(a @ a.T + np.eye(4), 1.0, 1e-10, 'test')
        active = np.zeros((2, 2), dtype=bool)
        first = system.solve_with_active_set(active, np.ones(4))
        assert_array_equal(first, system.solve_with_active_set(active, np.ones(4)))
        self.assertEqual(1, system.factorizations)
        active[0, 1] = active[1, 0] = True
        system.solve_with_active_set(active, np.ones(4))
        self.assertEqual(2, system.factorizations)

    def test_relative_rho(self):
        """Check rho scales with the mean curvature only when relative"""
        adm, _ = gen_grid(GridSpec(m=3, seed=1))
        q = build_quadratic(simulate(adm, SimSpec(model_kind='dc', n_samples=20, seed=1)))
        self.assertEqual(0.5, effective_rho(q, AlmConfig(rho=0.5, rho_relative=False)))
        expected = 0.5 * np.trace(q.h4_mat) / 9
        self.assertAlmostEqual(1.0, effective_rho(q, AlmConfig(rho=0.5)) / expected)

    def test_init_is_laplacian(self):
        """Check the covariance-based initial point is a Laplacian"""
        adm, _ = gen_grid(GridSpec(m=4, extra_edges=1, seed=3))
        g0, b0 = init_from_samples(simulate(adm, SimSpec(model_kind='ac', n_samples=30, seed=3)))
        assert_allclose(np.zeros(4), g0.sum(axis=1), atol=1e-12)
        assert_allclose(np.zeros(4), b0.sum(axis=1), atol=1e-12)
        self.assertTrue(np.all(b0[~np.eye(4, dtype=bool)] <= 0))


class TestMaskedUpdate(TestCase):
    """Substitute update_b's output back into the stationarity equations"""

    LAMBDA = 0.1

    def setUp(self):
        adm, _ = gen_grid(GridSpec(m=3, seed=12))
        self.q = build_quadratic(simulate(adm, SimSpec(model_kind='dc', n_samples=40, seed=12)))
        self.e = build_e_matrix(3)

    def state(self, cfg: AlmConfig) -> AlmState:
        rng = np.random.default_rng(5)
        lam = np.abs(rng.standard_normal((3, 3)))
        lam = (lam + lam.T) / 2
        np.fill_diagonal(lam, 0.0)
        start = AlmState.start(np.zeros((3, 3)), np.zeros((3, 3)), effective_rho(self.q, cfg), False)
        return dataclasses.replace(
            start,
            mu_b=rng.standard_normal(3),
            v_b=rng.standard_normal((3, 3)),
            lam_b=lam,
        )

    def rhs(self, state: AlmState) -> np.ndarray:
        return (
            -self.q.h3_mat @ vec(state.g)
            - self.q.h2_vec
            - gamma_vector(state.mu_b, state.v_b, self.LAMBDA, 3)
        )

    def test_one_shot(self):
        """Check mask=1 entries solve the inactive system and mask=0 the active one"""
        cfg = AlmConfig(lambda_b=self.LAMBDA, mask_refinements=0)
        state = self.state(cfg)
        rho, rhs = state.rho, self.rhs(state)
        x = update_b(self.q, state, cfg)

        x1 = unvec(np.linalg.solve(self.q.h4_mat + rho * self.e, rhs), 3)
        x2 = unvec(np.linalg.solve(self.q.h4_mat + rho * (self.e + np.eye(9)), rhs - vec(state.lam_b)), 3)
        mask = (state.lam_b + rho * x1 <= 0) | np.eye(3, dtype=bool)
        assert_allclose(x1[mask], x[mask], rtol=1e-8, atol=1e-10)
        assert_allclose(x2[~mask], x[~mask], rtol=1e-8, atol=1e-10)

    def test_active_set(self):
        """Check the refined update solves the system of its own active set"""
        cfg = AlmConfig(lambda_b=self.LAMBDA)
        state = self.state(cfg)
        rho, rhs = state.rho, self.rhs(state)
        x = update_b(self.q, state, cfg)

        active = ~np.eye(3, dtype=bool) & (state.lam_b + rho * x > 0)
        system = self.q.h4_mat + rho * self.e + rho * np.diag(vec(active).astype(float))
        residual = system @ vec(x) - (rhs - vec(active * state.lam_b))
        self.assertLessEqual(np.linalg.norm(residual), 1e-8 * (1 + np.linalg.norm(rhs)))


class TestRun(TestCase):
    """End-to-end solver runs"""

    # default solver settings, no regularization
    UNREGULARIZED = AlmConfig(lambda_g=0.0, lambda_b=0.0)

    def test_noiseless_chain(self):
        """Check the default settings recover a 4-bus DC chain to 1e-4"""
        lines = LineList(lines=((1, 2, 0.0, 1.0), (2, 3, 0.0, 0.5), (3, 4, 0.0, 2.0)), m=4)
        adm = build_admittance(lines)
        meas = simulate(adm, SimSpec(model_kind='dc', n_samples=50, noiseless=True, seed=1))
        report = estimate(meas, self.UNREGULARIZED)
        self.assertTrue(report.converged)
        self.assertLessEqual(rel_error(adm.b_tilde.entries, report.b_hat_tilde.entries), 1e-4)

    def test_noiseless_dc_recovery(self):
        """Check the default settings recover B~ to 1e-6 from noiseless DC data"""
        adm, _ = gen_grid(GridSpec(m=6, extra_edges=3, seed=11))
        meas = simulate(adm, SimSpec(model_kind='dc', n_samples=100, noiseless=True, seed=11))
        report = estimate(meas, self.UNREGULARIZED)
        self.assertIsNone(report.g_hat)
        self.assertTrue(report.converged)
        self.assertLessEqual(rel_error(adm.b_tilde.entries, report.b_hat_tilde.entries), 1e-6)

    def test_noiseless_ac_recovery(self):
        """Check G and B~ are recovered to 1e-3 from noiseless AC data"""
        adm, _ = gen_grid(GridSpec(m=4, extra_edges=1, seed=5))
        meas = simulate(adm, SimSpec(model_kind='ac', n_samples=200, noiseless=True, seed=5))
        report = estimate(meas, EXACT.with_overrides(lambda_b=0.0, lambda_g=0.0))
        self.assertLessEqual(rel_error(adm.g.entries, report.g_hat.entries), 1e-3)
        self.assertLessEqual(rel_error(adm.b_tilde.entries, report.b_hat_tilde.entries), 1e-3)

    def test_outputs_feasible(self):
        """Check every model's finalized output passes the invariants on noisy data"""
        adm, _ = gen_grid(GridSpec(m=5, extra_edges=2, seed=8))
        for kind in ('ac', 'dlpf', 'dc'):
            meas = simulate(adm, SimSpec(model_kind=kind, n_samples=100, snr_db=20, seed=8))
            report = estimate(meas, AlmConfig(max_iters=200))
            self.assertEqual([], check_laplacian(report.b_hat_tilde.entries), kind)
            if report.g_hat is not None:
                self.assertEqual([], check_laplacian(report.g_hat.entries), kind)
            self.assertEqual(report.iterations, len(report.objective_history))
            self.assertTrue(np.isfinite(report.objective))

    def test_iteration_cap(self):
        """Check max_iters=1 stops after one iteration, unconverged"""
        adm, _ = gen_grid(GridSpec(m=4, seed=2))
        meas = simulate(adm, SimSpec(model_kind='dlpf', n_samples=50, seed=2))
        report = estimate(meas, AlmConfig(max_iters=1))
        self.assertEqual(1, report.iterations)
        self.assertFalse(report.converged)

    def test_deterministic(self):
        """Check two runs give bit-identical estimates"""
        adm, _ = gen_grid(GridSpec(m=4, extra_edges=1, seed=9))
        meas = simulate(adm, SimSpec(model_kind='ac', n_samples=60, snr_db=25, seed=9))
        first = estimate(meas, AlmConfig(max_iters=100))
        second = estimate(meas, AlmConfig(max_iters=100))
        assert_array_equal(first.g_hat.entries, second.g_hat.entries)
        assert_array_equal(first.b_hat_tilde.entries, second.b_hat_tilde.entries)
        self.assertEqual(first.objective_history, second.objective_history)

    def test_model_mismatch(self):
        """Check AC data can be fitted with the linearized models"""
        adm, _ = gen_grid(GridSpec(m=4, seed=4))
        meas = simulate(adm, SimSpec(model_kind='ac', n_samples=60, seed=4))
        self.assertIsNone(estimate(meas, AlmConfig(max_iters=50), 'dc').g_hat)
        self.assertIsNotNone(estimate(meas, AlmConfig(max_iters=50), 'dlpf').g_hat)

    def test_default_lambda_reported(self):
        """Check unset lambdas resolve to the data-driven default"""
        adm, _ = gen_grid(GridSpec(m=3, seed=6))
        meas = simulate(adm, SimSpec(model_kind='dc', n_samples=40, seed=6))
        report = estimate(meas, AlmConfig(max_iters=5, lambda_scale=2.0))
        expected = 2.0 * meas.noise.sigma2 * np.sqrt(np.log(3) / 40)
        self.assertAlmostEqual(expected, report.lambda_b)

    def test_feasible_at_convergence(self):
        """Check the raw iterates violate each constraint by < 1e-4 ||X||_F once converged"""
        adm, _ = gen_grid(GridSpec(m=5, extra_edges=2, seed=13))
        for kind in ('ac', 'dlpf', 'dc'):
            meas = simulate(adm, SimSpec(model_kind=kind, n_samples=200, snr_db=30, seed=13))
            report = estimate(meas, AlmConfig(eps=1e-12, max_iters=20000))
            self.assertTrue(report.converged, kind)
            for name, norms in report.feasibility.items():
                for violation in ('row_sums', 'asymmetry', 'positive_offdiag'):
                    self.assertLess(norms[violation], 1e-4 * norms['norm'], f'{kind} {name} {violation}')
