#!/usr/bin/env python3
"""
Test script for the motion data model and forward kinematics.
"""

import unittest

import numpy as np

from errors import StructuralError, ValidationError
from motion_core import (MotionClip, MotionDataset, Pose, Skeleton, clip_to_features, default_humanoid,
                         features_to_clip, forward_kinematics, pad_or_trim, pose_condition_vector,
                         quat_from_axis_angle, quat_identity, quat_normalize, quat_to_matrix)


def chain_skeleton(joints: int = 3) -> Skeleton:
    offsets = np.zeros((joints, 3))
    offsets[1:, 0] = 1.0
    return Skeleton([f"j{i}" for i in range(joints)], [-1] + list(range(joints - 1)), offsets)


def random_rotations(rng, shape) -> np.ndarray:
    return quat_normalize(rng.normal(size=tuple(shape) + (4,)))


def matrix_fk_oracle(skeleton: Skeleton, pose: Pose) -> np.ndarray:
    """Compose explicit 4x4 transforms root to leaf."""
    transforms = []
    for j, parent in enumerate(skeleton.parents):
        local = np.eye(4)
        local[:3, :3] = quat_to_matrix(pose.joint_rotations[j])
        local[:3, 3] = pose.root_position if parent < 0 else skeleton.offsets[j]
        transforms.append(local if parent < 0 else transforms[parent] @ local)
    return np.array([t[:3, 3] for t in transforms])


class TestForwardKinematics(unittest.TestCase):
    """Test cases for forward kinematics."""

    def setUp(self):
        self.chain = chain_skeleton()
        self.humanoid = default_humanoid()
        self.rng = np.random.default_rng(0)

    def test_identity_chain(self):
        positions = forward_kinematics(self.chain, Pose.rest(3))
        np.testing.assert_allclose(positions, [[0, 0, 0], [1, 0, 0], [2, 0, 0]], atol=1e-12)

    def test_root_rotation_about_z(self):
        rotations = quat_identity((3,))
        rotations[0] = quat_from_axis_angle((0, 0, 1), np.pi / 2)
        positions = forward_kinematics(self.chain, Pose(np.zeros(3), rotations))
        np.testing.assert_allclose(positions[1], [0, 1, 0], atol=1e-9)
        np.testing.assert_allclose(positions[2], [0, 2, 0], atol=1e-9)

    def test_matches_matrix_oracle(self):
        for _ in range(20):
            pose = Pose(self.rng.normal(size=3), random_rotations(self.rng, (self.humanoid.num_joints,)))
            np.testing.assert_allclose(forward_kinematics(self.humanoid, pose),
                                       matrix_fk_oracle(self.humanoid, pose), atol=1e-9)

    def test_bone_lengths_preserved(self):
        pose = Pose(self.rng.normal(size=3), random_rotations(self.rng, (self.humanoid.num_joints,)))
        positions = forward_kinematics(self.humanoid, pose)
        for j, parent in enumerate(self.humanoid.parents):
            if parent >= 0:
                self.assertAlmostEqual(np.linalg.norm(positions[j] - positions[parent]),
                                       np.linalg.norm(self.humanoid.offsets[j]), delta=1e-9)

    def test_joint_count_mismatch(self):
        with self.assertRaises(StructuralError):
            forward_kinematics(self.chain, Pose.rest(4))


class TestDataModel(unittest.TestCase):
    """Test cases for Skeleton, Pose and MotionClip invariants."""

    def setUp(self):
        self.skeleton = chain_skeleton()

    def test_skeleton_requires_sorted_parents(self):
        with self.assertRaises(StructuralError):
            Skeleton(["a", "b", "c"], [-1, 2, 0], np.zeros((3, 3)))

    def test_skeleton_single_root(self):
        with self.assertRaises(StructuralError):
            Skeleton(["a", "b"], [-1, -1], np.zeros((2, 3)))

    def test_pose_requires_unit_quaternions(self):
        with self.assertRaises(ValidationError):
            Pose(np.zeros(3), np.full((3, 4), 0.9))

    def test_pose_rejects_non_finite(self):
        with self.assertRaises(ValidationError):
            Pose(np.array([np.nan, 0, 0]), quat_identity((3,)))

    def test_clip_needs_two_frames(self):
        with self.assertRaises(ValidationError):
            MotionClip(self.skeleton, 12.5, np.zeros((1, 3)), quat_identity((1, 3)))

    def test_clip_needs_positive_fps(self):
        with self.assertRaises(ValidationError):
            MotionClip(self.skeleton, 0.0, np.zeros((4, 3)), quat_identity((4, 3)))

    def test_clip_requires_unit_quaternions(self):
        rotations = quat_identity((4, 3))
        rotations[2, 1] *= 1.5
        with self.assertRaises(ValidationError) as ctx:
            MotionClip(self.skeleton, 12.5, np.zeros((4, 3)), rotations)
        self.assertIn("joint 1 at frame 2", str(ctx.exception))

    def test_segment_is_inclusive(self):
        root = np.arange(10, dtype=float)[:, None] * np.ones(3)
        clip = MotionClip(self.skeleton, 12.5, root, quat_identity((10, 3)), text="x")
        segment = clip.segment(3, 7)
        self.assertEqual(segment.num_frames, 5)
        np.testing.assert_array_equal(segment.root_positions[0], root[2])

    def test_dataset_rejects_unknown_split(self):
        clip = MotionClip(self.skeleton, 12.5, np.zeros((4, 3)), quat_identity((4, 3)))
        with self.assertRaises(ValidationError):
            MotionDataset([clip], {"holdout": [0]})


class TestPadOrTrim(unittest.TestCase):
    """Test cases for pad_or_trim."""

    def setUp(self):
        self.skeleton = default_humanoid()
        rng = np.random.default_rng(1)
        self.make = lambda n: MotionClip(self.skeleton, 12.5, rng.normal(size=(n, 3)),
                                         random_rotations(rng, (n, self.skeleton.num_joints)))

    def test_same_length_unchanged(self):
        clip = self.make(196)
        padded = pad_or_trim(clip, 196)
        np.testing.assert_array_equal(padded.rotations, clip.rotations)
        np.testing.assert_array_equal(padded.root_positions, clip.root_positions)

    def test_short_clip_holds_last_frame(self):
        clip = self.make(100)
        padded = pad_or_trim(clip, 196)
        self.assertEqual(padded.num_frames, 196)
        self.assertEqual(padded.original_length, 100)
        for i in range(100, 196):
            np.testing.assert_array_equal(padded.rotations[i], clip.rotations[99])
            np.testing.assert_array_equal(padded.root_positions[i], clip.root_positions[99])

    def test_long_clip_keeps_prefix(self):
        clip = self.make(300)
        trimmed = pad_or_trim(clip, 196)
        self.assertEqual(trimmed.num_frames, 196)
        self.assertEqual(trimmed.original_length, 300)
        np.testing.assert_array_equal(trimmed.rotations, clip.rotations[:196])

    def test_target_below_two_rejected(self):
        with self.assertRaises(ValidationError):
            pad_or_trim(self.make(10), 1)


class TestFeatureVectors(unittest.TestCase):
    """Test cases for the network pose features."""

    def setUp(self):
        self.skeleton = default_humanoid()
        rng = np.random.default_rng(2)
        self.clip = MotionClip(self.skeleton, 12.5, np.cumsum(rng.normal(size=(40, 3)), axis=0),
                               random_rotations(rng, (40, self.skeleton.num_joints)), text="walk")

    def test_features_round_trip(self):
        features = clip_to_features(self.clip)
        self.assertEqual(features.shape, (40, self.skeleton.pose_dim))
        np.testing.assert_array_equal(features[0, :3], np.zeros(3))
        restored = features_to_clip(features, self.skeleton, 12.5, "walk", self.clip.root_positions[0])
        np.testing.assert_allclose(restored.root_positions, self.clip.root_positions, atol=1e-9)
        np.testing.assert_allclose(restored.rotations, self.clip.rotations, atol=1e-12)

    def test_condition_vector_zeroes_horizontal_root(self):
        vector = pose_condition_vector(self.clip.pose(5))
        self.assertEqual(vector[0], 0.0)
        self.assertEqual(vector[2], 0.0)
        self.assertEqual(vector[1], self.clip.root_positions[5, 1])
        self.assertEqual(vector.shape, (self.skeleton.pose_dim,))


if __name__ == '__main__':
    unittest.main()
