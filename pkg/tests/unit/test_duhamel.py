#!/usr/bin/env python3
"""
BOUSSINESQ SUITE UNIT TESTS - DUHAMEL OPERATORS
Exponential integrator, closed-form single-mode convolutions and damping weights
"""

import os
import sys
import unittest

import numpy as np

# Add the project root to the path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..'))

try:
    from duhamel import (DampedExponents, DampingWeight, check_weights, damped_convolution, duhamel_C,
                         duhamel_damped, duhamel_weighted, exponential_convolution, phi_weights)
    from exponents import WeightExponents, exponent_family
    from field_core import from_function, gradient, make_grid, to_physical, to_spectral
    from suite_errors import DomainError, ExponentError
    from timeline import SpaceTimeNormSpec, Timeline, graded_times
except ImportError as e:
    print(f"Warning: Could not import duhamel: {e}")
    exponential_convolution = None


@unittest.skipIf(exponential_convolution is None, "duhamel module not available")
class TestExponentialConvolution(unittest.TestCase):

    def setUp(self):
        self.grid = make_grid(2, 8, 2 * np.pi)
        self.sine = to_spectral(from_function(self.grid, lambda x1, x2: np.sin(x1)))
        self.times = graded_times(2.0, 8)
        self.steady = Timeline.from_profile(self.sine, self.times, np.ones_like)

    def _sine_amplitude(self, tl):
        # coefficient of sin x1 relative to the input mode
        return np.real(tl.coeffs[:, 1, 0] / self.sine.coeffs[1, 0])

    def test_phi_weights_are_continuous_at_the_series_switch(self):
        below = np.array(phi_weights(-0.0099999))
        above = np.array(phi_weights(-0.0100001))
        np.testing.assert_allclose(below, above, rtol=1e-6)
        np.testing.assert_allclose(phi_weights(0.0), (0.5, 0.5))

    def test_steady_forcing_C_and_A(self):
        decay = 1.0 - np.exp(-self.times)
        np.testing.assert_allclose(self._sine_amplitude(exponential_convolution(self.steady, "C")), decay,
                                   atol=1e-12)
        np.testing.assert_allclose(self._sine_amplitude(exponential_convolution(self.steady, "A")), -decay,
                                   atol=1e-12)

    def test_steady_forcing_B_is_the_gradient_of_C(self):
        out = exponential_convolution(self.steady, "B")
        self.assertEqual(out.rank, 1)
        expected = gradient(self.sine) * (1.0 - np.exp(-self.times[-1]))
        np.testing.assert_allclose(out.snapshot(len(out) - 1).coeffs, expected.coeffs, atol=1e-12)

    def test_evaluation_between_nodes(self):
        value = to_physical(duhamel_C(self.steady, 0.3)).values
        x1, _ = self.grid.coordinates()
        np.testing.assert_allclose(value, (1.0 - np.exp(-0.3)) * np.sin(x1), atol=1e-12)

    def test_div_needs_a_vector(self):
        with self.assertRaises(DomainError):
            exponential_convolution(self.steady, "div")
        with self.assertRaises(DomainError):
            exponential_convolution(self.steady, "E")

    def test_second_order_in_time(self):
        def error(m):
            times = np.linspace(0.0, 2.0, m + 1)
            tl = Timeline.from_profile(self.sine, times, np.cos)
            exact = (np.cos(times) + np.sin(times) - np.exp(-times)) / 2.0
            return np.max(np.abs(self._sine_amplitude(exponential_convolution(tl, "C")) - exact))

        self.assertGreaterEqual(error(16) / error(32), 3.5)


@unittest.skipIf(exponential_convolution is None, "duhamel module not available")
class TestDamping(unittest.TestCase):

    def setUp(self):
        self.grid = make_grid(2, 8, 2 * np.pi)
        self.sine = to_spectral(from_function(self.grid, lambda x1, x2: np.sin(x1)))
        self.times = graded_times(1.0, 8)

    def test_linear_damping_adds_a_decay_rate(self):
        weight = DampingWeight(2.0, 2.0, self.times, self.times.copy())
        steady = Timeline.from_profile(self.sine, self.times, np.ones_like)
        out = damped_convolution(steady, "C", weight)
        amp = np.real(out.coeffs[:, 1, 0] / self.sine.coeffs[1, 0])
        np.testing.assert_allclose(amp, (1.0 - np.exp(-3.0 * self.times)) / 3.0, atol=1e-12)

    def test_weight_from_constant_terms(self):
        steady = Timeline.from_profile(self.sine, self.times, np.ones_like)
        weight = DampingWeight.build(1e-3, 2.0, [(steady, 2.0, 0.0)])
        norm4 = (np.pi * np.sqrt(2.0)) ** 4
        np.testing.assert_allclose(weight.cumulative, norm4 * self.times, rtol=1e-12)
        self.assertAlmostEqual(weight.h(0, len(self.times) - 1), np.exp(-1e-3 * norm4), places=12)

    def test_invalid_weights(self):
        with self.assertRaises(DomainError):
            DampingWeight(-1.0, 2.0, self.times, self.times.copy())
        with self.assertRaises(DomainError):
            DampingWeight(1.0, 2.0, self.times, -self.times)

    def test_damped_probe_needs_positive_lambda(self):
        steady = Timeline.from_profile(self.sine, self.times, np.ones_like)
        spec = SpaceTimeNormSpec(4.0, 2.0)
        exps = DampedExponents((spec,), spec, spec)
        with self.assertRaises(DomainError):
            duhamel_damped("C", steady, steady, DampingWeight.none(self.times), exps)
        probe = duhamel_damped("C", steady, steady, DampingWeight(1.0, 4.0, self.times, self.times.copy()), exps)
        self.assertGreater(probe.bound_side, 0.0)
        self.assertTrue(np.isfinite(probe.ratio))

@unittest.skipIf(exponential_convolution is None, "duhamel module not available")
class TestWeightedNorms(unittest.TestCase):

    def setUp(self):
        grid = make_grid(2, 8, 2 * np.pi)
        sine = to_spectral(from_function(grid, lambda x1, x2: np.sin(x1)))
        self.steady = Timeline.from_profile(sine, graded_times(2.0, 8), np.ones_like)
        fam = exponent_family(3, 2.4, 16.0, "theorem2")
        self.w = fam.weights
        self.in_spec = SpaceTimeNormSpec(32.0, 2.4, self.w.alpha)
        self.out_spec = SpaceTimeNormSpec(32.0, fam.p3, self.w.gamma1)

    def test_family_weights_are_accepted(self):
        result = duhamel_weighted("C", self.steady, self.w, self.in_spec, self.out_spec)
        self.assertTrue(np.isfinite(result.ratio))
        self.assertGreater(result.ratio, 0.0)
        self.assertEqual(result.weighted_output.shape, self.steady.times.shape)
        self.assertEqual(result.weighted_output[0], 0.0)

    def test_missing_weights_raise(self):
        with self.assertRaises(DomainError):
            duhamel_weighted("C", self.steady, None, self.in_spec, self.out_spec)

    def test_broken_alpha_relation_raises(self):
        broken = WeightExponents(self.w.alpha + 0.01, self.w.beta, self.w.gamma1, self.w.gamma2)
        with self.assertRaises(ExponentError):
            check_weights(broken, self.in_spec, self.out_spec)

    def test_broken_gamma2_relation_raises(self):
        broken = WeightExponents(self.w.alpha, self.w.beta, self.w.gamma1, self.w.gamma1 + 0.25)
        with self.assertRaises(ExponentError):
            check_weights(broken, self.in_spec, self.out_spec)
        with self.assertRaises(ExponentError):
            check_weights(self.w, SpaceTimeNormSpec(8.0, 2.4, self.w.alpha), self.out_spec)

    def test_weight_outside_the_family_raises(self):
        stray = SpaceTimeNormSpec(32.0, 2.4, 0.3)
        with self.assertRaises(ExponentError):
            duhamel_weighted("C", self.steady, self.w, self.in_spec, stray)
        with self.assertRaises(ExponentError):
            duhamel_weighted("B", self.steady, self.w, stray, self.out_spec)



if __name__ == '__main__':
    print("=" * 60)
    print("BOUSSINESQ SUITE - DUHAMEL UNIT TESTS")
    print("=" * 60)
    unittest.main(verbosity=2)
