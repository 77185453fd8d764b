#!/usr/bin/env python3
"""
Test script for Motion JSON reading and writing.
"""

import json
import os
import tempfile
import unittest

import numpy as np

from errors import MotionParseError
from motion_io import MANIFEST_NAME, clip_from_dict, clip_to_dict, load_clip, load_dataset, save_clip, save_dataset
from synthetic_corpus import CorpusConfig, synth_corpus


class TestClipFiles(unittest.TestCase):
    """Test cases for single-clip files."""

    def setUp(self):
        """Create a temp dir and a synthetic clip"""
        self.tmp = tempfile.TemporaryDirectory()
        self.clip = synth_corpus(CorpusConfig(families=["walk forward"], count_per_family=1), seed=3).clips[0]
        self.clip = self.clip.copy(t_s=self.clip.metadata["gt_t_s"], t_e=self.clip.metadata["gt_t_e"])

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip_is_exact(self):
        path = save_clip(self.clip, os.path.join(self.tmp.name, "walk.json"))
        loaded = load_clip(path)
        np.testing.assert_array_equal(loaded.rotations, self.clip.rotations)
        np.testing.assert_array_equal(loaded.root_positions, self.clip.root_positions)
        self.assertEqual(loaded.skeleton, self.clip.skeleton)
        self.assertEqual((loaded.t_s, loaded.t_e), (self.clip.t_s, self.clip.t_e))
        self.assertEqual(loaded.text, self.clip.text)
        self.assertEqual(loaded.fps, 12.5)
        self.assertEqual(loaded.metadata["period"], self.clip.metadata["period"])

    def test_missing_fps(self):
        data = clip_to_dict(self.clip)
        del data["fps"]
        with self.assertRaises(MotionParseError) as ctx:
            clip_from_dict(data, path="walk.json")
        self.assertEqual(ctx.exception.field, "fps")
        self.assertEqual(ctx.exception.exit_code, 3)

    def test_missing_frame_rotation(self):
        data = clip_to_dict(self.clip)
        del data["frames"][4]["rot"]
        with self.assertRaises(MotionParseError) as ctx:
            clip_from_dict(data)
        self.assertEqual(ctx.exception.field, "frames[4].rot")

    def test_bad_annotation(self):
        data = clip_to_dict(self.clip)
        data["t_s"], data["t_e"] = 50, 10
        with self.assertRaises(MotionParseError):
            clip_from_dict(data)

    def test_non_unit_rotation_rejected_on_load(self):
        data = clip_to_dict(self.clip)
        data["frames"][3]["rot"][0] = [2.0, 0.0, 0.0, 0.0]
        path = os.path.join(self.tmp.name, "scaled.json")
        with open(path, "w") as f:
            json.dump(data, f)
        with self.assertRaises(MotionParseError) as ctx:
            load_clip(path)
        self.assertIn("not a unit quaternion", str(ctx.exception))
        self.assertEqual(ctx.exception.path, path)

    def test_invalid_json_reports_line(self):
        path = os.path.join(self.tmp.name, "broken.json")
        with open(path, "w") as f:
            f.write('{\n"fps": 12.5,\n"frames": [\n')
        with self.assertRaises(MotionParseError) as ctx:
            load_clip(path)
        self.assertIsNotNone(ctx.exception.line)
        self.assertEqual(ctx.exception.path, path)

    def test_missing_file(self):
        with self.assertRaises(MotionParseError):
            load_clip(os.path.join(self.tmp.name, "absent.json"))

    def test_error_dict(self):
        try:
            clip_from_dict({}, path="x.json")
        except MotionParseError as e:
            payload = e.to_dict()
        self.assertEqual(payload["category"], "parse")
        self.assertEqual(payload["path"], "x.json")
        self.assertEqual(payload["field"], "fps")


class TestDatasetDirectory(unittest.TestCase):
    """Test cases for dataset directories."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dataset = synth_corpus(CorpusConfig(count_per_family=3), seed=5)

    def tearDown(self):
        self.tmp.cleanup()

    def test_dataset_round_trip(self):
        manifest = save_dataset(self.dataset, self.tmp.name)
        self.assertEqual(os.path.basename(manifest), MANIFEST_NAME)
        loaded = load_dataset(self.tmp.name)
        self.assertEqual(len(loaded), len(self.dataset))
        self.assertEqual(loaded.splits, self.dataset.splits)
        for a, b in zip(loaded.clips, self.dataset.clips):
            np.testing.assert_array_equal(a.rotations, b.rotations)

    def test_manifest_lists_splits(self):
        save_dataset(self.dataset, self.tmp.name)
        with open(os.path.join(self.tmp.name, MANIFEST_NAME)) as f:
            manifest = json.load(f)
        self.assertEqual(len(manifest["clips"]), 12)
        self.assertTrue(all(entry["split"] for entry in manifest["clips"]))

    def test_missing_manifest(self):
        with self.assertRaises(MotionParseError):
            load_dataset(self.tmp.name)


if __name__ == '__main__':
    unittest.main()
