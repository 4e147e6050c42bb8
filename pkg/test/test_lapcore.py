"""
Test the Laplacian helpers: construction, projection, thresholding and metrics
"""

from unittest import TestCase

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from gridtopo.datagen import grid_from_case
from gridtopo.errors import DimensionError, GridTopoError, LineListError, UndefinedRatioError
from gridtopo.lapcore import (
    ComplexAdmittance,
    LineList,
    RealLaplacian,
    SupportSet,
    build_admittance,
    check_laplacian,
    fscore,
    is_connected,
    magnitude_ratio,
    mse,
    project_to_laplacian,
    support_of,
    threshold_offdiag,
    threshold_tau,
)


def chain(m: int, weight: float = 1.0) -> np.ndarray:
    lines = LineList(lines=tuple((i, i + 1, weight, weight) for i in range(1, m)), m=m)
    return build_admittance(lines).b_tilde.entries.copy()


class TestBuildAdmittance(TestCase):
    """Test build_admittance and LineList validation"""

    def test_three_bus_chain(self):
        """Check the Laplacian of a unit 3-bus chain"""
        expected = np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]], dtype=float)
        assert_array_equal(expected, chain(3))

    def test_outputs_are_laplacians(self):
        """Check both parts pass the invariants"""
        lines = LineList(lines=((1, 2, 0.5, 2.0), (2, 3, 0.0, 1.0), (1, 3, 1.5, 0.25)), m=4)
        adm = build_admittance(lines)
        self.assertEqual([], check_laplacian(adm.g.entries))
        self.assertEqual([], check_laplacian(adm.b_tilde.entries))
        # bus 4 is isolated
        assert_array_equal(np.zeros(4), adm.b_tilde.entries[3])

    def test_empty_line_list(self):
        """Check that no lines give zero matrices"""
        adm = build_admittance(LineList(lines=(), m=3))
        assert_array_equal(np.zeros((3, 3)), adm.g.entries)

    def test_round_trip_through_lines(self):
        """Check LineList.from_admittance inverts build_admittance"""
        lines = LineList(lines=((1, 2, 0.5, 2.0), (2, 3, 0.0, 1.0)), m=3)
        self.assertEqual(lines, LineList.from_admittance(build_admittance(lines)))

    def test_duplicate_line(self):
        """Check a repeated bus pair is rejected in either orientation"""
        with self.assertRaises(LineListError):
            LineList(lines=((1, 2, 1.0, 1.0), (2, 1, 1.0, 1.0)), m=2)

    def test_bad_lines(self):
        """Check self loops, out-of-range buses and negative values"""
        for line in ((1, 1, 1.0, 1.0), (1, 3, 1.0, 1.0), (1, 2, -1.0, 1.0)):
            with self.assertRaises(LineListError):
                LineList(lines=(line,), m=2)

    def test_admittance_y(self):
        """Check Y = G - jB~"""
        adm = build_admittance(LineList(lines=((1, 2, 1.0, 3.0),), m=2))
        assert_allclose(np.array([[1 - 3j, -1 + 3j], [-1 + 3j, 1 - 3j]]), adm.y)

    def test_mismatched_parts(self):
        """Check G and B~ must have the same size"""
        with self.assertRaises(DimensionError):
            ComplexAdmittance(RealLaplacian.zeros(2), RealLaplacian.zeros(3))


class TestCheckLaplacian(TestCase):
    """Test the invariant checks"""

    def test_valid(self):
        """Check a chain passes"""
        self.assertEqual([], check_laplacian(chain(5)))

    def test_asymmetric(self):
        """Check asymmetry is reported"""
        a = chain(3)
        a[0, 1] = -0.5
        a[0, 0] = 0.5
        self.assertIn('symmetry', check_laplacian(a))

    def test_from_matrix_rejects(self):
        """Check the validating constructor raises on a non-Laplacian"""
        with self.assertRaises(GridTopoError):
            RealLaplacian.from_matrix(np.eye(3))

    def test_entries_read_only(self):
        """Check a RealLaplacian cannot be modified in place"""
        lap = RealLaplacian(chain(3))
        with self.assertRaises(ValueError):
            lap.entries[0, 0] = 5.0


class TestProjection(TestCase):
    """Test project_to_laplacian and thresholding"""

    def test_projection_is_feasible(self):
        """Check random matrices project onto the Laplacian set"""
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = rng.standard_normal((6, 6))
            projected = project_to_laplacian(a).entries
            self.assertEqual([], check_laplacian(projected))
            assert_array_equal(projected, projected.T)

    def test_projection_fixes_laplacians(self):
        """Check a Laplacian is left unchanged"""
        a = chain(4, 0.7)
        assert_allclose(a, project_to_laplacian(a).entries, atol=1e-15)

    def test_threshold_tau(self):
        """Check tau = min(diag) / M"""
        self.assertAlmostEqual(1.0 / 3, threshold_tau(chain(3)))
        self.assertEqual(0.0, threshold_tau(np.zeros((3, 3))))

    def test_threshold_prunes_small_entries(self):
        """Check entries below tau are dropped and row sums restored"""
        a = chain(3)
        a[0, 2] = a[2, 0] = -0.01
        a[0, 0] += 0.01
        a[2, 2] += 0.01
        pruned = threshold_offdiag(a).entries
        self.assertEqual(0.0, pruned[0, 2])
        assert_allclose(np.zeros(3), pruned.sum(axis=1), atol=1e-15)
        assert_array_equal(chain(3), pruned)

    def test_threshold_identity_on_zero_diagonal(self):
        """Check the zero matrix passes through"""
        assert_array_equal(np.zeros((3, 3)), threshold_offdiag(np.zeros((3, 3))).entries)


class TestMetrics(TestCase):
    """Test supports, F-score, MSE and the magnitude ratio"""

    def test_fscore_identical(self):
        """Check identical supports score 1"""
        support = support_of(chain(4))
        self.assertEqual(1.0, fscore(support, support))

    def test_fscore_empty(self):
        """Check two empty supports score 1"""
        empty = SupportSet(frozenset(), 3)
        self.assertEqual(1.0, fscore(empty, empty))

    def test_fscore_disjoint(self):
        """Check disjoint supports score 0"""
        self.assertEqual(
            0.0,
            fscore(SupportSet(frozenset({(1, 2)}), 3), SupportSet(frozenset({(2, 3)}), 3)),
        )

    def test_support_normalizes_pairs(self):
        """Check pairs are stored as i < j"""
        self.assertEqual(frozenset({(1, 2)}), SupportSet(frozenset({(2, 1)}), 2).edges)

    def test_mse(self):
        """Check mse against the trace formula"""
        a = chain(3)
        self.assertEqual(0.0, mse(a, a))
        self.assertAlmostEqual(9.0 / 9, mse(a, a + np.eye(3) * np.sqrt(3)))

    def test_magnitude_ratio_undefined(self):
        """Check the ratio needs jointly nonzero entries"""
        with self.assertRaises(UndefinedRatioError):
            magnitude_ratio(np.zeros((2, 2)), chain(2))

    def test_is_connected(self):
        """Check reachability on a support set"""
        self.assertTrue(is_connected(support_of(chain(4)), 4))
        self.assertFalse(is_connected({(1, 2), (3, 4)}, 4))


class TestBundledCases(TestCase):
    """Joint-sparsity statistics of the bundled IEEE cases"""

    def test_ieee14(self):
        """Check 15 conductive lines out of 20, F-score 2*15/(2*15+5)"""
        adm, lines = grid_from_case('ieee14')
        self.assertEqual(14, adm.m)
        self.assertEqual(20, len(lines))
        support_g, support_b = support_of(adm.g), support_of(adm.b_tilde)
        self.assertEqual(15, len(support_g))
        self.assertEqual(20, len(support_b))
        self.assertTrue(support_g.edges <= support_b.edges)
        self.assertAlmostEqual(6 / 7, fscore(support_g, support_b))

    def test_ieee33(self):
        """Check the radial feeder: 32 lines, identical supports"""
        adm, _ = grid_from_case('ieee33')
        self.assertEqual(33, adm.m)
        support_g, support_b = support_of(adm.g), support_of(adm.b_tilde)
        self.assertEqual(32, len(support_g))
        self.assertEqual(32, len(support_b))
        self.assertEqual(1.0, fscore(support_g, support_b))
        self.assertAlmostEqual(0.853, magnitude_ratio(adm.g, adm.b_tilde), places=3)
        self.assertTrue(is_connected(support_b, 33))

    def test_cases_are_laplacians(self):
        """Check both bundled cases pass the invariants"""
        for case in ('ieee14', 'ieee33'):
            adm, _ = grid_from_case(case)
            self.assertEqual([], check_laplacian(adm.g.entries))
            self.assertEqual([], check_laplacian(adm.b_tilde.entries))
