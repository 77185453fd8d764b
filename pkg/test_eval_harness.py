#!/usr/bin/env python3
"""
Test script for the evaluation harness and its report format.
"""

import json
import os
import tempfile
import unittest

import numpy as np
import torch

from diffusion import DenoiserConfig, DenoiserModel, DiffusionStack, ParamScaler, make_schedule
from errors import ValidationError
from eval_harness import (PROXY, SCHEMA_VERSION, MetricReport, _linear_r2, cycle_round_trip, flag_corpus_seeds,
                          guidance_sweep, load_reports, recon_ordering, recon_study, save_reports,
                          timing_profile, transition_study)
from motion_enums import StudyKind
from phase_autoencoder import AutoencoderConfig, PhaseCodec
from synthetic_corpus import CorpusConfig, synth_corpus
from text_encoder import Vocabulary

PROMPTS = ["walk forward", "jump"]


def tiny_stack() -> DiffusionStack:
    torch.manual_seed(0)
    codec = PhaseCodec(synth_corpus(CorpusConfig(count_per_family=1), seed=0).skeleton, AutoencoderConfig(
        num_phases=4, f_max=3, window=8, conv_channels=4, hidden=8, decoder_hidden=8))
    model = DenoiserModel(Vocabulary.build(PROMPTS), 4, codec.pose_dim, 3, width=16, layers=1, heads=2,
                          text_dim=8)
    model.eval()
    return DiffusionStack(codec, model, make_schedule(4), ParamScaler.identity(12),
                          DenoiserConfig(width=16, layers=1, heads=2, num_steps=4), 40, fps=12.5, root_height=0.9)


def recon_report(f_max, representation, num_phases, mse) -> MetricReport:
    config = {"f_max": f_max, "representation": representation, "num_phases": num_phases}
    return MetricReport(StudyKind.RECON_STUDY.value, config, 0, metrics={"recon_mse": mse}, environment={})


class TestMetricReport(unittest.TestCase):
    """Test cases for report persistence."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip(self):
        report = MetricReport("timing", {"runs": 5}, 3, metrics={"sample_ratio": 1.2},
                              rows=[{"length": 196, "quality": 0.1}], corpus_seed=7)
        report.label("quality")
        path = save_reports([report], os.path.join(self.tmp.name, "report.json"))
        with open(path) as f:
            document = json.load(f)
        self.assertEqual(document["schema_version"], SCHEMA_VERSION)
        loaded = load_reports(path)[0]
        self.assertEqual(loaded, report)
        self.assertEqual(loaded.labels["quality"], PROXY)
        self.assertIn("cpu_count", loaded.environment)
        self.assertEqual(list(loaded.to_frame().columns), ["length", "quality"])

    def test_unknown_schema_version(self):
        data = MetricReport("timing", {}, 0).to_dict()
        data["schema_version"] = SCHEMA_VERSION + 1
        with self.assertRaises(ValidationError):
            MetricReport.from_dict(data)

    def test_failed_flag(self):
        report = MetricReport("recon-study", {}, 0)
        self.assertFalse(report.failed)
        report.metrics["error"] = {"category": "config", "message": "x"}
        self.assertTrue(report.failed)

    def test_mixed_corpus_seeds_are_flagged(self):
        reports = [MetricReport("timing", {}, 0, corpus_seed=1), MetricReport("timing", {}, 0, corpus_seed=2)]
        self.assertTrue(flag_corpus_seeds(reports))
        self.assertTrue(all(len(r.notes) == 1 for r in reports))
        self.assertTrue(flag_corpus_seeds(reports))
        self.assertEqual(len(reports[0].notes), 1)

    def test_single_corpus_seed_is_not_flagged(self):
        reports = [MetricReport("timing", {}, 0, corpus_seed=1), MetricReport("timing", {}, 0)]
        self.assertFalse(flag_corpus_seeds(reports))
        self.assertEqual(reports[0].notes, [])


class TestProxies(unittest.TestCase):
    """Test cases for the shared metric helpers."""

    def test_linear_r2(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        self.assertAlmostEqual(_linear_r2(x, 3 * x + 1), 1.0, places=12)
        self.assertEqual(_linear_r2(x, np.full(4, 2.0)), 1.0)
        self.assertLess(_linear_r2(x, np.array([1.0, -1.0, 1.0, -1.0])), 0.5)

    def test_recon_ordering(self):
        reports = [recon_report(8, "sin", 128, 4.0), recon_report(30, "sin", 128, 2.0),
                   recon_report(30, "sincos", 128, 1.0), recon_report(30, "sincos", 256, 1.03)]
        ordering = recon_ordering(reports)
        self.assertTrue(ordering["sincos_beats_sin"])
        self.assertTrue(ordering["f30_beats_f8"])
        self.assertTrue(ordering["full_beats_baseline"])
        self.assertTrue(ordering["more_phases_marginal"])

    def test_recon_ordering_missing_cell(self):
        ordering = recon_ordering([recon_report(30, "sin", 128, 2.0)])
        self.assertIsNone(ordering["sincos_beats_sin"])

    def test_cycle_round_trip_short_clip(self):
        stack = tiny_stack()
        clip = synth_corpus(CorpusConfig(count_per_family=1), seed=0).clips[0].segment(1, 30)
        self.assertTrue(np.isfinite(cycle_round_trip(stack.codec, clip, 196)))


class TestStudies(unittest.TestCase):
    """Test cases for the studies on tiny models."""

    def setUp(self):
        self.stack = tiny_stack()
        self.clips = []
        for clip in synth_corpus(CorpusConfig(count_per_family=1), seed=5).clips:
            self.clips.append(clip.copy(t_s=clip.metadata["gt_t_s"], t_e=clip.metadata["gt_t_e"]))

    def test_recon_study_records_failing_cell(self):
        config = AutoencoderConfig(epochs=1, batch_size=4, window=8, conv_channels=4, hidden=8, decoder_hidden=8)
        reports = recon_study(self.clips[:3], self.clips[3:], config, grid=[(3, "sin", 4), (1, "sin", 4)],
                              seed=0, corpus_seed=5)
        self.assertEqual(len(reports), 2)
        self.assertFalse(reports[0].failed)
        self.assertIn("mpjpe", reports[0].metrics)
        self.assertEqual(reports[0].labels["mpjpe"], PROXY)
        self.assertTrue(reports[1].failed)
        self.assertEqual(reports[1].metrics["error"]["category"], "config")

    def test_timing_needs_five_runs(self):
        with self.assertRaises(ValidationError):
            timing_profile(self.stack, runs=4)

    def test_timing_profile(self):
        report = timing_profile(self.stack, "walk forward", lengths=(20, 40, 60), runs=5, warmup=0,
                                sampling_steps=2)
        self.assertEqual([row["length"] for row in report.rows], [20, 40, 60])
        self.assertEqual(report.metrics["run_count"], 5)
        self.assertGreaterEqual(report.metrics["sample_ratio"], 1.0)
        self.assertEqual(self.stack.diffusion_calls, 15)
        self.assertEqual(report.labels["quality"], PROXY)

    def test_transition_study_needs_pairs(self):
        with self.assertRaises(ValidationError):
            transition_study(self.stack, [("walk forward", "jump")])

    def test_guidance_sweep_rows(self):
        report = guidance_sweep(self.stack, PROMPTS, self.clips, scales=(2.5,), sampling_steps=2)
        self.assertEqual([row["guidance"] for row in report.rows], [0.0, 2.5])
        self.assertEqual(report.metrics["best_guidance"], 2.5)
        self.assertTrue(report.metrics["best_in_band"])
        for row in report.rows:
            self.assertTrue(np.isfinite(row["prompt_consistency"]))
            self.assertTrue(np.isfinite(row["chance_consistency"]))


if __name__ == '__main__':
    unittest.main()
