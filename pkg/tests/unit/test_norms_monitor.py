#!/usr/bin/env python3
"""
BOUSSINESQ SUITE UNIT TESTS - NORM MONITOR
Inferred constants, display reports, damped increments and cross-run aggregation
"""

import json
import os
import sys
import unittest

import numpy as np
import pandas as pd

# Add the project root to the path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..'))

try:
    from boussinesq_solver import SolverState, eta_from_ingredients, single_mode_velocity
    from field_core import make_grid, to_spectral
    from norms_monitor import (constant_stability, delta_u, fit_vertical_constants, gronwall_tails,
                               infer_constant, ledger_rows, theorem_report)
    from timeline import Timeline, graded_times
except ImportError as e:
    print(f"Warning: Could not import norms_monitor: {e}")
    theorem_report = None


def _state(grid, times, u=None):
    u = u if u is not None else Timeline.zeros(grid, times, 1)
    return SolverState(0, Timeline.zeros(grid, times, 0), u, Timeline.zeros(grid, times, 0))


@unittest.skipIf(theorem_report is None, "norms_monitor module not available")
class TestReports(unittest.TestCase):

    def setUp(self):
        self.grid = make_grid(2, 16, 2 * np.pi)
        self.times = graded_times(1.0, 8)

    def test_infer_constant(self):
        self.assertEqual(infer_constant(0.0, 0.0), 0.0)
        self.assertEqual(infer_constant(1.0, 0.0), float("inf"))
        self.assertAlmostEqual(infer_constant(2.0, 4.0), 0.5)

    def test_zero_run_reports_zero_constants(self):
        eta_report = eta_from_ingredients(0.0, 0.0, 0.0, 2.0, "theorem1", p=1.2)
        reports = theorem_report([_state(self.grid, self.times)], "theorem1", eta_report)
        self.assertEqual([rep.name for rep in reports],
                         ["horizontal", "vertical", "pressure", "temperature", "horizontal iterate-uniform"])
        for rep in reports:
            self.assertEqual(rep.lhs, 0.0)
            self.assertEqual(rep.inferred_constant, 0.0)

    def test_ledger_rows_carry_eta(self):
        eta_report = eta_from_ingredients(0.01, 0.0, 0.5, 2.0, "theorem1", p=1.2)
        reports = theorem_report([_state(self.grid, self.times)], "theorem1", eta_report, "max_iterations")
        rows = ledger_rows("abc", reports, eta_report)
        self.assertEqual(len(rows), 5)
        for row in rows:
            self.assertEqual(row["run_id"], "abc")
            self.assertEqual(row["status"], "max_iterations")
            self.assertAlmostEqual(row["eta"], eta_report.eta)
            self.assertIsInstance(json.loads(row["parts"]), dict)

    def test_vertical_report_is_scaled_by_the_vertical_data_alone(self):
        u = Timeline.constant(to_spectral(single_mode_velocity(self.grid, amplitude=0.2)), self.times)
        eta_report = eta_from_ingredients(0.0, 0.1, 0.4, 2.0, "theorem1", p=1.2)
        reports = theorem_report([_state(self.grid, self.times, u)], "theorem1", eta_report)
        vertical = next(rep for rep in reports if rep.name == "vertical")
        self.assertEqual(vertical.rhs_shape, "C2*|u0^d|")
        self.assertEqual(vertical.rhs_scale, 0.4)
        self.assertGreater(vertical.lhs, 0.0)
        self.assertAlmostEqual(vertical.inferred_constant, vertical.lhs / 0.4, places=12)
        row = next(row for row in ledger_rows("v", reports, eta_report) if row["inequality"] == "vertical")
        self.assertEqual(row["rhs_scale"], row["ud_besov"])


@unittest.skipIf(theorem_report is None, "norms_monitor module not available")
class TestIncrements(unittest.TestCase):

    def setUp(self):
        self.grid = make_grid(2, 16, 2 * np.pi)
        self.times = graded_times(1.0, 8)
        u = to_spectral(single_mode_velocity(self.grid, amplitude=0.5))
        self.prev = _state(self.grid, self.times, Timeline.constant(u, self.times))
        self.next = _state(self.grid, self.times, Timeline.constant(u * 2.0, self.times))

    def test_identical_states_have_zero_increment(self):
        self.assertEqual(delta_u(self.prev, self.prev, 1.0, "theorem1", 2.0).value, 0.0)

    def test_damping_shrinks_the_increment(self):
        values = [delta_u(self.prev, self.next, lam, "theorem1", 2.0).value for lam in (0.0, 1.0, 10.0)]
        self.assertGreater(values[0], values[1])
        self.assertGreater(values[1], values[2])
        self.assertGreater(values[2], 0.0)

    def test_profile_is_cumulative(self):
        inc = delta_u(self.prev, self.next, 0.0, "theorem1", 2.0)
        self.assertEqual(inc.profile[0], 0.0)
        self.assertTrue(np.all(np.diff(inc.profile) >= 0))

    def test_gronwall_tails(self):
        profile = np.linspace(0.0, 2.0, self.times.size)
        self.assertEqual(gronwall_tails(self.times, profile, 0.0), {"L^4/eps": 2.0, "L^2/eps": 2.0})
        tails = gronwall_tails(self.times, profile, 0.5)
        self.assertLess(tails["L^4/eps"], 2.0)
        self.assertLess(tails["L^2/eps"], tails["L^4/eps"])


@unittest.skipIf(theorem_report is None, "norms_monitor module not available")
class TestAggregation(unittest.TestCase):

    def test_constant_stability_ignores_degenerate_values(self):
        frame = pd.DataFrame({"inequality": ["horizontal"] * 4 + ["pressure"],
                              "inferred_constant": [1.0, 2.0, float("inf"), 0.0, 3.0]})
        out = constant_stability(frame)
        self.assertAlmostEqual(out["horizontal"], 2.0)
        self.assertAlmostEqual(out["pressure"], 1.0)

    def test_vertical_fit(self):
        ud = np.array([0.1, 0.5, 1.0, 2.0])
        frame = pd.DataFrame({"inequality": "vertical", "ud_besov": ud, "lhs": 3.0 * ud + 0.5})
        c2, c3 = fit_vertical_constants(frame)
        self.assertAlmostEqual(c2, 3.0, places=10)
        self.assertAlmostEqual(c3, 0.5, places=10)
        self.assertTrue(np.isnan(fit_vertical_constants(frame.iloc[:1])[0]))


if __name__ == '__main__':
    print("=" * 60)
    print("BOUSSINESQ SUITE - NORM MONITOR UNIT TESTS")
    print("=" * 60)
    unittest.main(verbosity=2)
