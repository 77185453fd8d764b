"""
PhaseGen - Motion core

Skeleton and motion data model, quaternion helpers and forward kinematics.

Rotations are unit quaternions stored as (w, x, y, z) with the canonical sign
w >= 0. Frame indices inside arrays are 0-based; segment annotations
(t_s, t_e) are 1-based frame numbers in [1, t_T].
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from errors import StructuralError, ValidationError
from motion_enums import Split

ROOT_PARENT = -1
UNIT_TOLERANCE = 1e-6


# ---------------------------------------------------------------------------
# Quaternions
# ---------------------------------------------------------------------------

def quat_identity(shape: Sequence[int] = ()) -> np.ndarray:
    q = np.zeros(tuple(shape) + (4,), dtype=np.float64)
    q[..., 0] = 1.0
    return q


def quat_canonical(q: np.ndarray) -> np.ndarray:
    """Flip quaternions with w < 0 so that w >= 0."""
    q = np.asarray(q, dtype=np.float64)
    sign = np.where(q[..., :1] < 0.0, -1.0, 1.0)
    return q * sign


def quat_normalize(q: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    return quat_canonical(q / np.maximum(norm, eps))


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors v by unit quaternions q (broadcasting over leading dims)."""
    w = q[..., :1]
    u = q[..., 1:]
    uv = np.cross(u, v)
    return v + 2.0 * w * uv + 2.0 * np.cross(u, uv)


def quat_from_axis_angle(axis: Sequence[float], angle) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * np.asarray(angle, dtype=np.float64)
    q = np.concatenate([np.cos(half)[..., None], np.sin(half)[..., None] * axis], axis=-1)
    return quat_canonical(q)


def quat_from_euler_xyz(angles: np.ndarray) -> np.ndarray:
    """Quaternion of R = Rz(γ) · Ry(β) · Rx(α) for angles [..., (α, β, γ)]."""
    angles = np.asarray(angles, dtype=np.float64)
    qx = quat_from_axis_angle((1.0, 0.0, 0.0), angles[..., 0])
    qy = quat_from_axis_angle((0.0, 1.0, 0.0), angles[..., 1])
    qz = quat_from_axis_angle((0.0, 0.0, 1.0), angles[..., 2])
    return quat_canonical(quat_mul(qz, quat_mul(qy, qx)))


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1),
        np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1),
        np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1),
    ], axis=-2)


# ---------------------------------------------------------------------------
# Data model
# ---------------------------------------------------------------------------

@dataclass
class Skeleton:
    joint_names: List[str]
    parents: List[int]
    offsets: np.ndarray
    name: str = "skeleton"

    def __post_init__(self):
        self.joint_names = [str(n) for n in self.joint_names]
        self.parents = [int(p) for p in self.parents]
        self.offsets = np.asarray(self.offsets, dtype=np.float64).reshape(-1, 3)

        num_joints = len(self.joint_names)
        if num_joints == 0:
            raise StructuralError("skeleton has no joints")
        if len(self.parents) != num_joints or self.offsets.shape[0] != num_joints:
            raise StructuralError(
                f"skeleton arrays disagree: {num_joints} names, {len(self.parents)} parents, "
                f"{self.offsets.shape[0]} offsets")
        roots = [i for i, p in enumerate(self.parents) if p == ROOT_PARENT]
        if roots != [0]:
            raise StructuralError(f"skeleton must have exactly one root at index 0, found {roots}")
        for i, parent in enumerate(self.parents[1:], start=1):
            if not 0 <= parent < i:
                raise StructuralError(f"joint {i} has parent {parent}; parents must be topologically sorted")
        if not np.all(np.isfinite(self.offsets)):
            raise ValidationError("skeleton offsets must be finite")

    @property
    def num_joints(self) -> int:
        return len(self.joint_names)

    @property
    def pose_dim(self) -> int:
        """Length of a pose feature vector: root (3) + one quaternion per joint."""
        return 3 + 4 * self.num_joints

    def bone_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.offsets[1:], axis=-1)

    def mean_bone_length(self) -> float:
        return float(np.mean(self.bone_lengths()))

    def joint_index(self, name: str) -> int:
        return self.joint_names.index(name)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "joints": list(self.joint_names),
            "parents": list(self.parents),
            "offsets": self.offsets.tolist(),
        }

    def __eq__(self, other) -> bool:
        if not isinstance(other, Skeleton):
            return NotImplemented
        return (self.joint_names == other.joint_names and self.parents == other.parents
                and np.array_equal(self.offsets, other.offsets))


@dataclass
class Pose:
    root_position: np.ndarray
    joint_rotations: np.ndarray

    def __post_init__(self):
        self.root_position = np.asarray(self.root_position, dtype=np.float64).reshape(3)
        self.joint_rotations = np.asarray(self.joint_rotations, dtype=np.float64).reshape(-1, 4)
        if not (np.all(np.isfinite(self.root_position)) and np.all(np.isfinite(self.joint_rotations))):
            raise ValidationError("pose contains non-finite values")
        norms = np.linalg.norm(self.joint_rotations, axis=-1)
        if np.any(np.abs(norms - 1.0) > UNIT_TOLERANCE):
            raise ValidationError("pose rotations must be unit quaternions")

    @property
    def num_joints(self) -> int:
        return self.joint_rotations.shape[0]

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.root_position, self.joint_rotations.reshape(-1)])

    @classmethod
    def from_vector(cls, vector: np.ndarray, num_joints: int) -> "Pose":
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape[-1] != 3 + 4 * num_joints:
            raise StructuralError(f"pose vector has {vector.shape[-1]} entries, expected {3 + 4 * num_joints}")
        return cls(vector[:3], quat_normalize(vector[3:].reshape(num_joints, 4)))

    @classmethod
    def rest(cls, num_joints: int) -> "Pose":
        return cls(np.zeros(3), quat_identity((num_joints,)))


@dataclass
class MotionClip:
    skeleton: Skeleton
    fps: float
    root_positions: np.ndarray
    rotations: np.ndarray
    text: Optional[str] = None
    t_s: Optional[int] = None
    t_e: Optional[int] = None
    original_length: Optional[int] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.fps = float(self.fps)
        self.root_positions = np.asarray(self.root_positions, dtype=np.float64).reshape(-1, 3)
        self.rotations = np.asarray(self.rotations, dtype=np.float64)
        if not self.fps > 0:
            raise ValidationError(f"fps must be positive, got {self.fps}")
        if self.rotations.ndim != 3 or self.rotations.shape[1:] != (self.skeleton.num_joints, 4):
            raise StructuralError(
                f"rotations have shape {self.rotations.shape}, expected (T, {self.skeleton.num_joints}, 4)")
        if self.rotations.shape[0] != self.root_positions.shape[0]:
            raise StructuralError("root positions and rotations disagree on frame count")
        if self.num_frames < 2:
            raise ValidationError(f"a clip needs at least 2 frames, got {self.num_frames}")
        if not (np.all(np.isfinite(self.root_positions)) and np.all(np.isfinite(self.rotations))):
            raise ValidationError("clip contains non-finite values")
        bad = np.abs(np.linalg.norm(self.rotations, axis=-1) - 1.0) > UNIT_TOLERANCE
        if np.any(bad):
            frame, joint = (int(i) for i in np.argwhere(bad)[0])
            raise ValidationError(f"rotation of joint {joint} at frame {frame} is not a unit quaternion")
        if self.t_s is not None and self.t_e is not None:
            self.t_s, self.t_e = int(self.t_s), int(self.t_e)
            if not 1 <= self.t_s < self.t_e <= self.num_frames:
                raise ValidationError(
                    f"annotation ({self.t_s}, {self.t_e}) outside 1..{self.num_frames}")

    @property
    def num_frames(self) -> int:
        return self.rotations.shape[0]

    @property
    def frames(self) -> List[Pose]:
        return [self.pose(i) for i in range(self.num_frames)]

    @property
    def has_annotation(self) -> bool:
        return self.t_s is not None and self.t_e is not None

    def pose(self, index: int) -> Pose:
        return Pose(self.root_positions[index], self.rotations[index])

    def segment(self, t_s: int, t_e: int) -> "MotionClip":
        """Frames t_s..t_e inclusive (1-based)."""
        if not 1 <= t_s < t_e <= self.num_frames:
            raise ValidationError(f"segment ({t_s}, {t_e}) outside 1..{self.num_frames}")
        return MotionClip(self.skeleton, self.fps, self.root_positions[t_s - 1:t_e],
                          self.rotations[t_s - 1:t_e], text=self.text)

    def copy(self, **changes) -> "MotionClip":
        values = dict(skeleton=self.skeleton, fps=self.fps, root_positions=self.root_positions.copy(),
                      rotations=self.rotations.copy(), text=self.text, t_s=self.t_s, t_e=self.t_e,
                      original_length=self.original_length, metadata=dict(self.metadata))
        values.update(changes)
        return MotionClip(**values)


@dataclass
class MotionDataset:
    clips: List[MotionClip]
    splits: Dict[str, List[int]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.clips:
            raise ValidationError("a dataset needs at least one clip")
        if not self.splits:
            self.splits = {Split.TRAIN.value: list(range(len(self.clips)))}
        for split_name, indices in self.splits.items():
            if split_name not in {s.value for s in Split}:
                raise ValidationError(f"unknown split tag '{split_name}'")
            if any(not 0 <= i < len(self.clips) for i in indices):
                raise ValidationError(f"split '{split_name}' references a missing clip")
            skeletons = {id(self.clips[i].skeleton) for i in indices}
            if len(skeletons) > 1 and any(self.clips[i].skeleton != self.clips[indices[0]].skeleton
                                          for i in indices):
                raise StructuralError(f"split '{split_name}' mixes skeletons")

    def __len__(self) -> int:
        return len(self.clips)

    @property
    def skeleton(self) -> Skeleton:
        return self.clips[0].skeleton

    def split(self, name: str) -> List[MotionClip]:
        return [self.clips[i] for i in self.splits.get(name, [])]

    def prompts(self) -> List[str]:
        return [clip.text for clip in self.clips if clip.text]


# ---------------------------------------------------------------------------
# Kinematics
# ---------------------------------------------------------------------------

def forward_kinematics_batch(skeleton: Skeleton, root_positions: np.ndarray,
                             rotations: np.ndarray) -> np.ndarray:
    """Global joint positions for stacked poses: (..., 3), (..., J, 4) -> (..., J, 3)."""
    root_positions = np.asarray(root_positions, dtype=np.float64)
    rotations = np.asarray(rotations, dtype=np.float64)
    if rotations.shape[-2] != skeleton.num_joints:
        raise StructuralError(
            f"pose has {rotations.shape[-2]} joints, skeleton has {skeleton.num_joints}")
    if not (np.all(np.isfinite(root_positions)) and np.all(np.isfinite(rotations))):
        raise ValidationError("forward kinematics input contains non-finite values")

    global_rot = [rotations[..., 0, :]]
    positions = [root_positions]
    for j in range(1, skeleton.num_joints):
        parent = skeleton.parents[j]
        offset = np.broadcast_to(skeleton.offsets[j], root_positions.shape)
        positions.append(positions[parent] + quat_rotate(global_rot[parent], offset))
        global_rot.append(quat_mul(global_rot[parent], rotations[..., j, :]))
    return np.stack(positions, axis=-2)


def forward_kinematics(skeleton: Skeleton, pose: Pose) -> np.ndarray:
    """World positions (J, 3) of every joint; the root sits at pose.root_position."""
    if pose.num_joints != skeleton.num_joints:
        raise StructuralError(f"pose has {pose.num_joints} joints, skeleton has {skeleton.num_joints}")
    return forward_kinematics_batch(skeleton, pose.root_position, pose.joint_rotations)


def clip_positions(clip: MotionClip) -> np.ndarray:
    return forward_kinematics_batch(clip.skeleton, clip.root_positions, clip.rotations)


def pad_or_trim(clip: MotionClip, target_len: int) -> MotionClip:
    """Truncate at the end, or hold the last frame until target_len frames exist."""
    if target_len < 2:
        raise ValidationError(f"target length must be >= 2 (clips hold at least two frames), got {target_len}")
    length = clip.num_frames
    original = clip.original_length if clip.original_length is not None else length
    if length >= target_len:
        root = clip.root_positions[:target_len]
        rot = clip.rotations[:target_len]
    else:
        hold = target_len - length
        root = np.concatenate([clip.root_positions, np.repeat(clip.root_positions[-1:], hold, axis=0)])
        rot = np.concatenate([clip.rotations, np.repeat(clip.rotations[-1:], hold, axis=0)])

    t_s, t_e = clip.t_s, clip.t_e
    if t_s is not None and t_e is not None and t_e > root.shape[0]:
        t_s, t_e = None, None
    return MotionClip(clip.skeleton, clip.fps, root, rot, text=clip.text, t_s=t_s, t_e=t_e,
                      original_length=original, metadata=dict(clip.metadata))


# ---------------------------------------------------------------------------
# Pose feature vectors used by the networks
# ---------------------------------------------------------------------------

def clip_to_features(clip: MotionClip) -> np.ndarray:
    """(T, 3 + 4J): per-frame root displacement followed by joint quaternions."""
    delta = np.zeros_like(clip.root_positions)
    delta[1:] = np.diff(clip.root_positions, axis=0)
    return np.concatenate([delta, clip.rotations.reshape(clip.num_frames, -1)], axis=-1)


def features_to_clip(features: np.ndarray, skeleton: Skeleton, fps: float,
                     text: Optional[str] = None,
                     root_start: Optional[np.ndarray] = None) -> MotionClip:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != skeleton.pose_dim:
        raise StructuralError(f"features have shape {features.shape}, expected (T, {skeleton.pose_dim})")
    start = np.zeros(3) if root_start is None else np.asarray(root_start, dtype=np.float64)
    delta = features[:, :3].copy()
    delta[0] = 0.0
    root = start + np.cumsum(delta, axis=0)
    rotations = quat_normalize(features[:, 3:].reshape(-1, skeleton.num_joints, 4))
    return MotionClip(skeleton, fps, root, rotations, text=text)


def pose_condition_vector(pose: Pose) -> np.ndarray:
    """Conditioning vector of a pose: root height with horizontal position zeroed, then rotations."""
    root = np.array([0.0, pose.root_position[1], 0.0])
    return np.concatenate([root, pose.joint_rotations.reshape(-1)])


def default_humanoid() -> Skeleton:
    """16-joint humanoid, y up, z forward, lengths in meters."""
    joints = [
        ("pelvis", -1, (0.0, 0.0, 0.0)),
        ("spine", 0, (0.0, 0.25, 0.0)),
        ("neck", 1, (0.0, 0.25, 0.0)),
        ("head", 2, (0.0, 0.15, 0.0)),
        ("left_shoulder", 1, (0.2, 0.2, 0.0)),
        ("left_elbow", 4, (0.28, 0.0, 0.0)),
        ("left_wrist", 5, (0.25, 0.0, 0.0)),
        ("right_shoulder", 1, (-0.2, 0.2, 0.0)),
        ("right_elbow", 7, (-0.28, 0.0, 0.0)),
        ("right_wrist", 8, (-0.25, 0.0, 0.0)),
        ("left_hip", 0, (0.1, -0.05, 0.0)),
        ("left_knee", 10, (0.0, -0.42, 0.0)),
        ("left_ankle", 11, (0.0, -0.4, 0.0)),
        ("right_hip", 0, (-0.1, -0.05, 0.0)),
        ("right_knee", 13, (0.0, -0.42, 0.0)),
        ("right_ankle", 14, (0.0, -0.4, 0.0)),
    ]
    return Skeleton([j[0] for j in joints], [j[1] for j in joints],
                    np.array([j[2] for j in joints]), name="humanoid16")
