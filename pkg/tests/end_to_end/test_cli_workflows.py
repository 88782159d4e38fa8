#!/usr/bin/env python3
"""
BOUSSINESQ SUITE END-TO-END TESTS - CLI WORKFLOWS
Complete subcommand runs through the command line driver on tiny grids
"""

import io
import json
import os
import shutil
import sys
import tempfile
import unittest
from contextlib import redirect_stdout
from pathlib import Path
from unittest.mock import patch

import pandas as pd

# Add the project root to the path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..'))

try:
    from boussinesq_suite import EXIT_INVARIANT, EXIT_OK, EXIT_VALIDATION, P_CHECK_WARNING, main, run
    from suite_errors import DomainError
except ImportError as e:
    print(f"Warning: Could not import boussinesq_suite: {e}")
    run = None


TINY_SIMULATION = {
    "grid": {"n_per_axis": 16},
    "time": {"horizon": 1.0, "intervals": 8},
    "data": {"trunc_level": 2},
}

TINY_PROBES = {"probes": {"n_per_axis": 8, "intervals": 4, "ensemble_size": 2, "include_weighted": False}}


@unittest.skipIf(run is None, "boussinesq_suite module not available")
class TestCliWorkflows(unittest.TestCase):
    """Each subcommand against a scratch output directory"""

    def setUp(self):
        self.out = tempfile.mkdtemp(prefix="boussinesq-e2e-")
        env = {k: v for k, v in os.environ.items() if not k.startswith("BOUSSINESQ_")}
        self.env = patch.dict(os.environ, env, clear=True)
        self.dotenv = patch("run_config.load_dotenv")
        self.env.start()
        self.dotenv.start()

    def tearDown(self):
        self.dotenv.stop()
        self.env.stop()
        shutil.rmtree(self.out, ignore_errors=True)

    def _run(self, subcommand, config, seed=7):
        with redirect_stdout(io.StringIO()):
            return run(subcommand, config, seed, self.out)

    def test_simulate_zero_data(self):
        result, code = self._run("simulate", TINY_SIMULATION)
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(result["status"], "converged")
        out_dir = Path(self.out) / "simulate"
        for name in ("iterations.csv", "ledger.csv", "history.json", "theta_T.bin", "u_T.bin",
                     "plot_iterations.gp", "manifest.json"):
            self.assertTrue((out_dir / name).exists(), name)
        self.assertTrue((Path(self.out) / "ledger.sqlite").exists())

        manifest = json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
        self.assertEqual(manifest["subcommand"], "simulate")
        self.assertEqual(manifest["seed"], 7)
        self.assertEqual(manifest["config"]["grid"]["n_per_axis"], 16)
        self.assertIn("heat_kernel_normalization", manifest["open_questions"])
        self.assertFalse(manifest["open_questions"]["cutoff_applied"])
        self.assertTrue(manifest["constraints"])

        ledger = pd.read_csv(out_dir / "ledger.csv")
        self.assertEqual(len(ledger), 5)
        self.assertTrue((ledger["run_id"] == result["run_id"]).all())

    def test_report_after_simulate(self):
        self._run("simulate", TINY_SIMULATION)
        result, code = self._run("report", {})
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(result["rows"], 5)
        out_dir = Path(self.out) / "report"
        constants = pd.read_csv(out_dir / "constants.csv")
        self.assertEqual(constants["inequality"].iloc[-1], "vertical least-squares")
        runs = pd.read_csv(out_dir / "runs.csv")
        self.assertEqual(list(runs["subcommand"]), ["simulate"])
        plot = (out_dir / "plot_ledger.gp").read_text(encoding="utf-8")
        self.assertIn('"horizontal"', plot)

    def test_report_on_an_empty_ledger(self):
        result, code = self._run("report", {})
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(result["rows"], 0)
        self.assertTrue((Path(self.out) / "report" / "constants.csv").exists())

    def test_verify_ops_is_deterministic(self):
        result, code = self._run("verify-ops", TINY_PROBES)
        self.assertEqual(code, EXIT_OK)
        probes = Path(self.out) / "verify-ops" / "probes.csv"
        first = probes.read_bytes()
        self._run("verify-ops", TINY_PROBES)
        self.assertEqual(first, probes.read_bytes())
        frame = pd.read_csv(probes)
        self.assertEqual(len(frame), 6)
        self.assertIn("riesz potential", set(frame["operator"]))
        self.assertTrue((Path(self.out) / "verify-ops" / "damping.csv").exists())

    def test_besov_corpus(self):
        config = {"besov": {"n_per_axis": 16, "corpus_size": 3}}
        result, code = self._run("besov", config)
        self.assertEqual(code, EXIT_OK)
        out_dir = Path(self.out) / "besov"
        self.assertEqual(len(pd.read_csv(out_dir / "besov.csv")), 9)
        self.assertEqual(len(pd.read_csv(out_dir / "heat_time.csv")), 3)
        self.assertEqual(result["skipped_s"], [])

    def test_epsilon_sweep(self):
        config = dict(TINY_SIMULATION, sweep={"kind": "epsilon", "eps_list": [0.1, 0.0]})
        result, code = self._run("sweep", config)
        self.assertEqual(code, EXIT_OK)
        out_dir = Path(self.out) / "sweep"
        self.assertEqual(len(pd.read_csv(out_dir / "sweep.csv")), 1)
        self.assertEqual(len(pd.read_csv(out_dir / "runs.csv")), 2)

    def test_open_clause_warning_is_logged_once_per_sweep(self):
        config = dict(TINY_SIMULATION, sweep={"kind": "epsilon", "eps_list": [0.1, 0.05, 0.0]})
        with self.assertLogs(level="WARNING") as logs:
            result, code = self._run("sweep", config)
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(sum(P_CHECK_WARNING in line for line in logs.output), 1)

    def test_library_error_inside_a_command_exits_with_code_two(self):
        with patch("boussinesq_suite.cmd_besov", side_effect=DomainError("ladder too short")):
            result, code = self._run("besov", {"besov": {"n_per_axis": 16, "corpus_size": 3}})
        self.assertEqual(code, EXIT_INVARIANT)
        self.assertFalse(result["success"])
        self.assertEqual(result["status"], "failed")
        self.assertIn("ladder too short", result["error"])
        manifest = json.loads((Path(self.out) / "besov" / "manifest.json").read_text(encoding="utf-8"))
        self.assertEqual(manifest["result"]["status"], "failed")

    def test_invalid_config_writes_nothing(self):
        result, code = self._run("simulate", {"exponents": {"p": 1.5}})
        self.assertEqual(code, EXIT_VALIDATION)
        self.assertFalse(result["success"])
        self.assertTrue(any("p < dr/(2r-1)" in err for err in result["errors"]))
        self.assertFalse((Path(self.out) / "simulate").exists())

    def test_unknown_subcommand(self):
        result, code = self._run("plot", {})
        self.assertEqual(code, EXIT_VALIDATION)

    def test_main_reads_the_config_file(self):
        path = Path(self.out) / "run.json"
        path.write_text(json.dumps(TINY_SIMULATION), encoding="utf-8")
        with redirect_stdout(io.StringIO()):
            code = main(["simulate", "--config", str(path), "--seed", "3", "--out", self.out, "--quiet"])
        self.assertEqual(code, EXIT_OK)
        manifest = json.loads((Path(self.out) / "simulate" / "manifest.json").read_text(encoding="utf-8"))
        self.assertEqual(manifest["seed"], 3)

    def test_main_rejects_unreadable_config(self):
        bad = Path(self.out) / "bad.json"
        bad.write_text("{not json", encoding="utf-8")
        with redirect_stdout(io.StringIO()):
            self.assertEqual(main(["simulate", "--config", str(bad), "--out", self.out, "--quiet"]),
                             EXIT_VALIDATION)
            self.assertEqual(main(["simulate", "--config", str(Path(self.out) / "missing.json"),
                                   "--out", self.out, "--quiet"]), EXIT_VALIDATION)


if __name__ == '__main__':
    print("=" * 60)
    print("BOUSSINESQ SUITE - CLI WORKFLOW END-TO-END TESTS")
    print("=" * 60)
    unittest.main(verbosity=2)
