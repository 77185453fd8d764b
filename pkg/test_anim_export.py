#!/usr/bin/env python3
"""
Test script for animation export.
"""

import json
import os
import tempfile
import unittest

import numpy as np
import pandas as pd

from anim_export import CSV_NAME, MANIFEST_NAME, export_anim, positions_frame, render_manifest
from motion_core import clip_positions
from motion_enums import ExportFormat
from synthetic_corpus import CorpusConfig, synth_corpus


class TestAnimExport(unittest.TestCase):
    """Test cases for CSV, PNG frame and manifest export."""

    def setUp(self):
        """Create a temp dir and a short synthetic clip"""
        self.tmp = tempfile.TemporaryDirectory()
        self.clip = synth_corpus(CorpusConfig(families=["walk forward"], count_per_family=1), seed=2).clips[0]
        self.clip = self.clip.segment(1, 25)

    def tearDown(self):
        self.tmp.cleanup()

    def test_csv_matches_forward_kinematics(self):
        files = export_anim(self.clip, self.tmp.name, ExportFormat.CSV)
        self.assertEqual(files, [os.path.join(self.tmp.name, CSV_NAME)])
        df = pd.read_csv(files[0], float_precision="round_trip")
        self.assertEqual(df.shape, (25, 1 + 3 * self.clip.skeleton.num_joints))
        self.assertEqual(list(df.columns[:4]), ["frame", "pelvis_x", "pelvis_y", "pelvis_z"])
        self.assertEqual(df.frame.tolist(), list(range(25)))
        expected = clip_positions(self.clip).reshape(25, -1)
        np.testing.assert_array_equal(df.iloc[:, 1:].to_numpy(), expected)

    def test_csv_is_byte_stable(self):
        path = export_anim(self.clip, os.path.join(self.tmp.name, "a"), ExportFormat.CSV)[0]
        again = export_anim(self.clip, os.path.join(self.tmp.name, "b"), ExportFormat.CSV)[0]
        with open(path, "rb") as f, open(again, "rb") as g:
            self.assertEqual(f.read(), g.read())

    def test_positions_frame_columns(self):
        df = positions_frame(self.clip)
        self.assertEqual(df.columns[-1], f"{self.clip.skeleton.joint_names[-1]}_z")

    def test_manifest(self):
        path = export_anim(self.clip, self.tmp.name, ExportFormat.STICK_MP4_SCRIPT)[0]
        self.assertEqual(os.path.basename(path), MANIFEST_NAME)
        with open(path) as f:
            manifest = json.load(f)
        self.assertEqual(manifest["num_frames"], 25)
        self.assertEqual(manifest["fps"], self.clip.fps)
        self.assertEqual(len(manifest["positions"]), 25)
        self.assertEqual(manifest["parents"][0], -1)
        self.assertEqual(manifest, json.loads(json.dumps(render_manifest(self.clip))))

    def test_png_frames(self):
        files = export_anim(self.clip, self.tmp.name, ExportFormat.FRAMES_PNG, every=10)
        self.assertEqual([os.path.basename(f) for f in files],
                         ["frame_00000.png", "frame_00010.png", "frame_00020.png"])
        self.assertTrue(all(os.path.getsize(f) > 0 for f in files))

    def test_format_from_string(self):
        self.assertEqual(ExportFormat("frames-png"), ExportFormat.FRAMES_PNG)
        with self.assertRaises(ValueError):
            ExportFormat("gif")


if __name__ == '__main__':
    unittest.main()
