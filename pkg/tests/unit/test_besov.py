#!/usr/bin/env python3
"""
BOUSSINESQ SUITE UNIT TESTS - BESOV NORMS
Partition of unity, dyadic blocks, heat characterization and its closed-form oracle
"""

import os
import sys
import unittest

import numpy as np

# Add the project root to the path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..'))

try:
    from besov import (BesovIndex, besov_norm_dyadic, besov_norm_heat, bump, build_ladder, cutoff, dyadic_block,
                       embedding_ratio, heat_window, partial_dyadic_sum, random_corpus,
                       windowed_single_mode_heat_norm)
    from field_core import from_function, lp_norm, make_grid, random_band_limited, to_spectral
    from suite_errors import DomainError
except ImportError as e:
    print(f"Warning: Could not import besov: {e}")
    build_ladder = None


@unittest.skipIf(build_ladder is None, "besov module not available")
class TestPartition(unittest.TestCase):

    def setUp(self):
        self.grid = make_grid(2, 32, 2 * np.pi)
        self.ladder = build_ladder(self.grid)

    def test_cutoff_plateau(self):
        self.assertEqual(float(cutoff(0.5)), 1.0)
        self.assertEqual(float(cutoff(2.0)), 0.0)
        self.assertTrue(0.0 < float(cutoff(1.0)) < 1.0)
        self.assertEqual(float(bump(0.5)), 0.0)

    def test_ladder_range_for_default_box(self):
        self.assertEqual(self.ladder.j_min, 0)
        self.assertEqual(self.ladder.j_max, 3)

    def test_blocks_sum_to_one_off_the_mean(self):
        total = sum(self.ladder.partition[j] for j in self.ladder.indices)
        nonzero = self.grid.k_squared > 0
        np.testing.assert_allclose(total[nonzero], 1.0, atol=1e-14)
        self.assertEqual(total[self.grid.zero_mode], 0.0)

    def test_full_partial_sum_is_identity_on_mean_zero_fields(self):
        f = random_band_limited(self.grid, np.random.default_rng(2), band=10)
        np.testing.assert_allclose(partial_dyadic_sum(f, 3, self.ladder).coeffs, f.coeffs, atol=1e-14)

    def test_block_outside_ladder_raises(self):
        f = random_band_limited(self.grid, np.random.default_rng(2))
        with self.assertRaises(DomainError):
            dyadic_block(f, 7, self.ladder)
        with self.assertRaises(DomainError):
            partial_dyadic_sum(f, -1, self.ladder)


@unittest.skipIf(build_ladder is None, "besov module not available")
class TestNorms(unittest.TestCase):

    def setUp(self):
        self.grid = make_grid(2, 32, 2 * np.pi)

    def test_index_validation(self):
        with self.assertRaises(DomainError):
            BesovIndex(0.5, 2.0, -1.0)
        with self.assertRaises(DomainError):
            BesovIndex(2.0, 2.0, 0.0).require_heat()

    def test_dyadic_norm_is_homogeneous(self):
        f = random_band_limited(self.grid, np.random.default_rng(4), band=8)
        idx = BesovIndex(2.0, 2.0, -0.5)
        self.assertAlmostEqual(besov_norm_dyadic(f * 3.0, idx), 3.0 * besov_norm_dyadic(f, idx), places=10)

    def test_heat_norm_matches_single_shell_closed_form(self):
        f = to_spectral(from_function(self.grid, lambda x1, x2: np.cos(2 * x1)))
        idx = BesovIndex(2.0, 2.0, -1.0)
        times = heat_window(self.grid)
        expected = windowed_single_mode_heat_norm(lp_norm(f, 2), 4.0, idx.s, idx.r, times[0], times[-1])
        self.assertAlmostEqual(besov_norm_heat(f, idx) / expected, 1.0, delta=1e-3)

    def test_heat_and_dyadic_norms_are_comparable(self):
        idx = BesovIndex(2.0, 2.0, -0.5)
        for f in random_corpus(self.grid, seed=7, size=5):
            ratio = besov_norm_heat(f, idx) / besov_norm_dyadic(f, idx)
            self.assertTrue(0.1 <= ratio <= 10.0, ratio)

    def test_corpus_is_seeded(self):
        a = random_corpus(self.grid, seed=9, size=3)
        b = random_corpus(self.grid, seed=9, size=3)
        for fa, fb in zip(a, b):
            np.testing.assert_array_equal(fa.coeffs, fb.coeffs)

    def test_embedding_ratio(self):
        f = random_band_limited(self.grid, np.random.default_rng(5), band=6)
        self.assertAlmostEqual(embedding_ratio(f, 2.0, 2.0, 2.0, 2.0, -0.5), 1.0, places=12)
        ratio = embedding_ratio(f, 2.0, 2.0, 4.0, 4.0, -0.5)
        self.assertTrue(np.isfinite(ratio) and ratio > 0.0)
        with self.assertRaises(DomainError):
            embedding_ratio(f, 4.0, 2.0, 2.0, 2.0, -0.5)
        with self.assertRaises(DomainError):
            embedding_ratio(f, 2.0, 4.0, 2.0, 2.0, -0.5)


if __name__ == '__main__':
    print("=" * 60)
    print("BOUSSINESQ SUITE - BESOV UNIT TESTS")
    print("=" * 60)
    unittest.main(verbosity=2)
