#!/usr/bin/env python3
"""
Test script for the plots and the report dashboard.
"""

import os
import tempfile
import unittest

import numpy as np

from eval_harness import MetricReport
from motion_enums import StudyKind
from visualization.motion_visualizer import MotionVisualizer
from visualization.report_dashboard import ReportDashboard


def timing_report() -> MetricReport:
    report = MetricReport(StudyKind.TIMING.value, {}, 0, environment={},
                          metrics={"sample_ratio": 1.1, "run_count": 5, "decode_r2": None})
    report.rows = [{"length": n, "sample_seconds": 0.2, "decode_seconds": n / 1000, "quality": 0.05}
                   for n in (196, 392, 588)]
    report.label("quality")
    return report


class TestVisualization(unittest.TestCase):
    """Test cases for PNG plots and the HTML dashboard."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.visualizer = MotionVisualizer(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def assertWritten(self, path):
        self.assertTrue(os.path.exists(path))
        self.assertGreater(os.path.getsize(path), 0)

    def test_study_plots(self):
        self.assertWritten(self.visualizer.plot_loss_matrix(np.random.default_rng(0).random((30, 30))))
        self.assertWritten(self.visualizer.plot_training_curves([1.0, 0.5, 0.25], [1e-3, 5e-4, 1e-4]))
        self.assertWritten(self.visualizer.plot_transition_curves(
            [{"frame": f, "end-pose": 0.1, "zero-mask": 0.3} for f in range(-4, 4)]))
        self.assertWritten(self.visualizer.plot_guidance_sweep(
            [{"guidance": g, "prompt_consistency": 1.0, "chance_consistency": 1.2, "round_trip_error": 0.1 * g}
             for g in (0.0, 2.5, 3.5)]))
        self.assertWritten(self.visualizer.plot_timing(timing_report().rows))

    def test_summary_table(self):
        table = ReportDashboard([timing_report()]).summary_table()
        self.assertEqual(sorted(table.metric), ["decode_r2", "run_count", "sample_ratio"])
        self.assertEqual(list(table.columns), ["experiment", "seed", "metric", "value", "label"])

    def test_dashboard(self):
        failed = MetricReport(StudyKind.RECON_STUDY.value, {"f_max": 1, "representation": "sin", "num_phases": 4},
                              0, metrics={"error": {"category": "config", "message": "bad"}}, environment={})
        path = ReportDashboard([timing_report(), failed]).generate_dashboard(
            os.path.join(self.tmp.name, "html", "dashboard.html"), title="timing")
        self.assertWritten(path)
        with open(path) as f:
            self.assertIn("Inference time by length", f.read())


if __name__ == '__main__':
    unittest.main()
