"""
Tests for Simlab CLI functionality
"""

import json
import os
import unittest
import tempfile
import subprocess
import sys

from simlab.cli import build_parser

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


class TestCLI(unittest.TestCase):
    """Test cases for CLI commands"""

    def setUp(self):
        """Set up test environment"""
        # Create a temporary directory for test output
        self.temp_dir = tempfile.TemporaryDirectory()
        self.output_dir = self.temp_dir.name
        self.data_path = os.path.join(self.output_dir, "data.csv")

    def tearDown(self):
        """Clean up after tests"""
        self.temp_dir.cleanup()

    def run_cli(self, *args):
        return subprocess.run(
            [sys.executable, '-m', 'simlab.cli', *args],
            capture_output=True,
            text=True,
            cwd=REPO_ROOT,
        )

    def generate(self, n=30):
        result = self.run_cli('gen', '--scenario', '3', '--n', str(n), '--seed', '7',
                              '--out', self.data_path, '--quiet')
        self.assertEqual(result.returncode, 0, f"CLI command failed: {result.stderr}")

    def test_gen_command(self):
        """Test the gen command"""
        self.generate()

        self.assertTrue(os.path.exists(self.data_path))
        with open(os.path.join(self.output_dir, 'data.json')) as f:
            sidecar = json.load(f)
        self.assertEqual(sidecar['scenario']['scenario_id'], 3)
        self.assertEqual(sidecar['seed'], 7)

        with open(self.data_path) as f:
            lines = f.read().splitlines()
        self.assertEqual(lines[0], 'x1,x2,x3,a,y')
        self.assertEqual(len(lines), 31)

    def test_estimate_and_compare_commands(self):
        """Test estimating both rules and comparing them"""
        self.generate()
        pmm_path = os.path.join(self.output_dir, 'pmm.json')
        zom_path = os.path.join(self.output_dir, 'zom.json')

        for model, path in (('krr', pmm_path), ('zom', zom_path)):
            result = self.run_cli('estimate', '--data', self.data_path, '--method', 'jackknife',
                                  '--model', model, '--out', path, '--quiet')
            self.assertEqual(result.returncode, 0, f"CLI command failed: {result.stderr}")

        with open(pmm_path) as f:
            estimate = json.load(f)
        self.assertEqual(estimate['method'], 'jackknife')
        self.assertEqual(len(estimate['residuals']), 30)
        self.assertEqual(estimate['metadata']['propensity'], 'known_uniform')

        result = self.run_cli('compare', '--pmm', pmm_path, '--zom', zom_path)
        self.assertEqual(result.returncode, 0, f"CLI command failed: {result.stderr}")
        self.assertIn('T Statistic', result.stdout)

    def test_estimate_cv_to_stdout(self):
        """Test the cv estimator printing JSON"""
        self.generate(n=90)
        result = self.run_cli('estimate', '--data', self.data_path, '--method', 'cv',
                              '--model', 'krr', '--folds', '5', '--repeats', '2',
                              '--propensity', 'empirical')
        self.assertEqual(result.returncode, 0, f"CLI command failed: {result.stderr}")
        estimate = json.loads(result.stdout)
        self.assertEqual(estimate['method'], 'cv')
        self.assertEqual(estimate['metadata']['folds'], 5)
        self.assertEqual(estimate['metadata']['propensity'], 'empirical')

    def test_estimate_without_sidecar_needs_arms(self):
        """Test that a bare CSV needs --arms"""
        result = self.run_cli('estimate', '--data', os.path.join(REPO_ROOT, 'tests', 'test_data', 'small.csv'),
                              '--model', 'zom')
        self.assertEqual(result.returncode, 1)
        self.assertIn('Error:', result.stderr)

    def test_estimate_bad_file(self):
        """Test the error path for an unreadable dataset"""
        result = self.run_cli('estimate', '--data', os.path.join(REPO_ROOT, 'tests', 'test_data', 'nan_outcome.csv'),
                              '--arms', '2', '--model', 'zom')
        self.assertEqual(result.returncode, 1)
        self.assertIn("column 'y'", result.stderr)

    def test_study_command(self):
        """Test the study command"""
        config_path = os.path.join(self.output_dir, 'study.json')
        with open(config_path, 'w') as f:
            json.dump({"scenarios": [3], "sample_sizes": [30], "replicates": 3, "seed": 1,
                       "mc_draws": 100000}, f)
        out = os.path.join(self.output_dir, 'results')

        result = self.run_cli('study', '--config', config_path, '--out', out, '--skip-failed', '--quiet')
        self.assertEqual(result.returncode, 0, f"CLI command failed: {result.stderr}")
        for name in ('replicates.csv', 'coverage.csv', 'power.csv', 'normality.csv', 'metadata.json'):
            self.assertTrue(os.path.exists(os.path.join(out, name)), name)

    def test_study_bad_config(self):
        """Test the error path for an invalid config"""
        config_path = os.path.join(self.output_dir, 'study.json')
        with open(config_path, 'w') as f:
            json.dump({"scenarios": [9]}, f)
        result = self.run_cli('study', '--config', config_path, '--out', self.output_dir)
        self.assertEqual(result.returncode, 1)
        self.assertIn('Error:', result.stderr)


class TestParser(unittest.TestCase):
    """Test cases for argument parsing"""

    def test_top_level_quiet_reaches_the_command(self):
        args = build_parser().parse_args(["--quiet", "gen", "--scenario", "1", "--n", "10", "--out", "d.csv"])
        self.assertTrue(args.quiet)
        self.assertFalse(args.verbose)

    def test_command_level_flags(self):
        args = build_parser().parse_args(["study", "--config", "c.json", "--verbose"])
        self.assertTrue(args.verbose)
        self.assertFalse(args.quiet)

    def test_flags_default_off(self):
        args = build_parser().parse_args(["compare", "--pmm", "p.json", "--zom", "z.json"])
        self.assertFalse(args.quiet)
        self.assertFalse(args.verbose)


if __name__ == '__main__':
    unittest.main()
