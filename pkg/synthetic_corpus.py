"""
PhaseGen - Synthetic corpus generator

Procedural stand-in for a text-annotated mocap corpus. Every clip is a
linear ramp-in, an exactly periodic primary segment and a linear ramp-out.
Joint angles inside the primary segment are low-order sinusoids with
family-specific frequency and amplitude; ramps interpolate angles and root
position affinely from/to the rest pose.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from errors import ConfigError
from motion_core import MotionClip, MotionDataset, Skeleton, default_humanoid, quat_from_euler_xyz
from motion_enums import MotionFamily, Split

logger = logging.getLogger("phasegen.synthetic_corpus")

PELVIS_HEIGHT = 0.9

# (joint, axis, bias, first harmonic, second harmonic, phase offset in cycles)
Channel = Tuple[str, int, float, float, float, float]


@dataclass(frozen=True)
class FamilySpec:
    period_range: Tuple[int, int]
    channels: Tuple[Channel, ...]
    velocity: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    bob: float = 0.0
    jump_height: float = 0.0
    prompts: Tuple[str, ...] = ()


FAMILY_TABLE: Dict[MotionFamily, FamilySpec] = {
    MotionFamily.WALK_FORWARD: FamilySpec(
        period_range=(20, 28),
        channels=(
            ("left_hip", 0, 0.0, 0.45, 0.0, 0.0),
            ("right_hip", 0, 0.0, 0.45, 0.0, 0.5),
            ("left_knee", 0, 0.35, 0.0, 0.3, 0.0),
            ("right_knee", 0, 0.35, 0.0, 0.3, 0.25),
            ("left_shoulder", 2, -1.2, 0.0, 0.0, 0.0),
            ("right_shoulder", 2, 1.2, 0.0, 0.0, 0.0),
            ("left_shoulder", 0, 0.0, 0.3, 0.0, 0.5),
            ("right_shoulder", 0, 0.0, 0.3, 0.0, 0.0),
            ("spine", 1, 0.0, 0.08, 0.0, 0.0),
        ),
        velocity=(0.0, 0.0, 0.06),
        bob=0.02,
        prompts=("a person walks forward", "someone is walking forward",
                 "a person walks straight ahead", "the person is walking forward slowly"),
    ),
    MotionFamily.RUN_FORWARD: FamilySpec(
        period_range=(14, 20),
        channels=(
            ("left_hip", 0, -0.1, 0.7, 0.0, 0.0),
            ("right_hip", 0, -0.1, 0.7, 0.0, 0.5),
            ("left_knee", 0, 0.7, 0.0, 0.5, 0.0),
            ("right_knee", 0, 0.7, 0.0, 0.5, 0.25),
            ("left_shoulder", 2, -1.3, 0.0, 0.0, 0.0),
            ("right_shoulder", 2, 1.3, 0.0, 0.0, 0.0),
            ("left_elbow", 1, 1.2, 0.2, 0.0, 0.5),
            ("right_elbow", 1, -1.2, 0.2, 0.0, 0.0),
            ("spine", 0, 0.2, 0.0, 0.05, 0.0),
        ),
        velocity=(0.0, 0.0, 0.16),
        bob=0.05,
        prompts=("a person runs forward", "someone is running forward quickly",
                 "a person jogs straight ahead"),
    ),
    MotionFamily.WAVE_RIGHT_ARM: FamilySpec(
        period_range=(16, 28),
        channels=(
            ("right_shoulder", 2, -1.1, 0.15, 0.0, 0.0),
            ("right_elbow", 2, -0.9, 0.6, 0.0, 0.0),
            ("right_wrist", 2, 0.0, 0.3, 0.1, 0.25),
            ("left_shoulder", 2, -1.2, 0.0, 0.0, 0.0),
            ("neck", 1, 0.0, 0.05, 0.0, 0.0),
        ),
        prompts=("a person waves the right arm", "someone waves with the right hand",
                 "the person is waving the right arm"),
    ),
    MotionFamily.WAVE_LEFT_ARM: FamilySpec(
        period_range=(16, 28),
        channels=(
            ("left_shoulder", 2, 1.1, 0.15, 0.0, 0.0),
            ("left_elbow", 2, 0.9, 0.6, 0.0, 0.0),
            ("left_wrist", 2, 0.0, 0.3, 0.1, 0.25),
            ("right_shoulder", 2, 1.2, 0.0, 0.0, 0.0),
            ("neck", 1, 0.0, 0.05, 0.0, 0.0),
        ),
        prompts=("a person waves the left arm", "someone waves with the left hand",
                 "the person is waving the left arm"),
    ),
    MotionFamily.TURN_IN_PLACE: FamilySpec(
        period_range=(24, 36),
        channels=(
            ("pelvis", 1, 0.0, 0.7, 0.0, 0.0),
            ("left_hip", 0, 0.0, 0.0, 0.25, 0.0),
            ("right_hip", 0, 0.0, 0.0, 0.25, 0.5),
            ("left_shoulder", 2, -1.2, 0.0, 0.0, 0.0),
            ("right_shoulder", 2, 1.2, 0.0, 0.0, 0.0),
            ("neck", 1, 0.0, 0.2, 0.0, 0.1),
        ),
        prompts=("a person turns in place", "someone is turning around in place",
                 "the person turns left and right"),
    ),
    MotionFamily.JUMP: FamilySpec(
        period_range=(18, 26),
        channels=(
            ("left_hip", 0, -0.4, 0.0, 0.0, 0.0),
            ("right_hip", 0, -0.4, 0.0, 0.0, 0.0),
            ("left_knee", 0, 0.6, 0.5, 0.0, 0.25),
            ("right_knee", 0, 0.6, 0.5, 0.0, 0.25),
            ("left_shoulder", 2, -0.6, 0.5, 0.0, 0.0),
            ("right_shoulder", 2, 0.6, -0.5, 0.0, 0.0),
            ("spine", 0, 0.15, 0.1, 0.0, 0.25),
        ),
        jump_height=0.18,
        prompts=("a person jumps up and down", "someone is jumping in place",
                 "the person jumps repeatedly"),
    ),
}


@dataclass
class CorpusConfig:
    families: List[str] = field(default_factory=lambda: [
        "walk forward", "wave right arm", "turn in place", "jump"])
    count_per_family: int = 50
    fps: float = 12.5
    num_frames: int = 196
    ramp_range: Tuple[int, int] = (8, 24)
    amplitude_jitter: float = 0.15
    period_overrides: Dict[str, int] = field(default_factory=dict)
    split_fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    workers: int = 1

    def resolved_families(self) -> List[MotionFamily]:
        resolved = []
        for name in self.families:
            try:
                resolved.append(MotionFamily.from_name(name))
            except KeyError:
                known = ", ".join(f.value for f in MotionFamily)
                raise ConfigError(f"unknown motion family '{name}' (known: {known})")
        return resolved

    def validate(self):
        if self.count_per_family < 1:
            raise ConfigError("count_per_family must be >= 1")
        lo, hi = self.ramp_range
        if lo < 2 or hi < lo:
            raise ConfigError(f"invalid ramp range {self.ramp_range}")
        if self.fps <= 0:
            raise ConfigError("fps must be positive")
        for family in self.resolved_families():
            period = self._period_bounds(family)[1]
            if self.num_frames < 2 * hi + 2 * period + 1:
                raise ConfigError(
                    f"num_frames {self.num_frames} too short for two cycles of '{family.value}'")

    def _period_bounds(self, family: MotionFamily) -> Tuple[int, int]:
        override = self.period_overrides.get(family.value)
        if override is not None:
            if override < 2:
                raise ConfigError(f"period override for '{family.value}' must be >= 2")
            return int(override), int(override)
        return FAMILY_TABLE[family].period_range


def _periodic_angles(spec: FamilySpec, skeleton: Skeleton, u: np.ndarray,
                     gains: np.ndarray, phase: float) -> np.ndarray:
    """Euler angles (len(u), J, 3) for cycle coordinate u (one cycle per unit)."""
    angles = np.zeros((len(u), skeleton.num_joints, 3))
    for c, (joint, axis, bias, a1, a2, offset) in enumerate(spec.channels):
        theta = 2.0 * np.pi * (u + phase + offset)
        value = bias + gains[c] * (a1 * np.sin(theta) + a2 * np.sin(2.0 * theta))
        angles[:, skeleton.joint_index(joint), axis] += value
    return angles


def _extreme_phase(spec: FamilySpec, skeleton: Skeleton, gains: np.ndarray, period: int) -> float:
    """Frame-aligned cycle phase whose pose lies farthest from the rest pose."""
    grid = np.arange(period) / period
    angles = _periodic_angles(spec, skeleton, grid, gains, 0.0)
    return float(grid[int(np.argmax(np.sum(angles ** 2, axis=(1, 2))))])


def _periodic_root(spec: FamilySpec, steps: np.ndarray, u: np.ndarray, phase: float,
                   velocity: np.ndarray) -> np.ndarray:
    root = np.zeros((len(u), 3))
    root[:, 1] = PELVIS_HEIGHT
    root += steps[:, None] * velocity[None, :]
    theta = 2.0 * np.pi * (u + phase)
    if spec.bob:
        root[:, 1] += spec.bob * np.sin(2.0 * theta)
    if spec.jump_height:
        root[:, 1] += spec.jump_height * 0.5 * (1.0 - np.cos(theta))
    return root


def synth_clip(family: MotionFamily, config: CorpusConfig, rng: np.random.Generator,
               skeleton: Skeleton) -> MotionClip:
    spec = FAMILY_TABLE[family]
    t_total = config.num_frames
    p_lo, p_hi = config._period_bounds(family)
    period = int(rng.integers(p_lo, p_hi + 1))
    r_lo, r_hi = config.ramp_range
    ramp_in = int(rng.integers(r_lo, r_hi + 1))
    cycles = (t_total - 1 - ramp_in - r_lo) // period
    if cycles < 1:
        raise ConfigError(f"clip length {t_total} leaves no full cycle for '{family.value}'")

    # 1-based frame numbers
    t_s = ramp_in + 1
    t_e = t_s + cycles * period
    gains = 1.0 + config.amplitude_jitter * rng.uniform(-1.0, 1.0, size=len(spec.channels))
    phase = _extreme_phase(spec, skeleton, gains, period)
    speed = 1.0 + config.amplitude_jitter * float(rng.uniform(-1.0, 1.0))
    velocity = np.asarray(spec.velocity) * speed

    frames = np.arange(1, t_total + 1, dtype=np.float64)
    periodic = (frames >= t_s) & (frames <= t_e)
    u = (frames[periodic] - t_s) / period
    steps = frames[periodic] - t_s

    angles = np.zeros((t_total, skeleton.num_joints, 3))
    root = np.zeros((t_total, 3))
    angles[periodic] = _periodic_angles(spec, skeleton, u, gains, phase)
    root[periodic] = _periodic_root(spec, steps, u, phase, velocity)

    start_angles = angles[t_s - 1]
    end_angles = angles[t_e - 1]
    start_root = root[t_s - 1]
    end_root = root[t_e - 1]
    rest_in = start_root - velocity * (t_s - 1) / 2.0
    rest_in[1] = PELVIS_HEIGHT
    rest_out = end_root + velocity * (t_total - t_e) / 2.0
    rest_out[1] = PELVIS_HEIGHT

    if t_s > 1:
        w = (frames[:t_s - 1] - 1.0) / (t_s - 1.0)
        angles[:t_s - 1] = w[:, None, None] * start_angles[None]
        root[:t_s - 1] = rest_in[None] + w[:, None] * (start_root - rest_in)[None]
    if t_e < t_total:
        w = (t_total - frames[t_e:]) / (t_total - float(t_e))
        angles[t_e:] = w[:, None, None] * end_angles[None]
        root[t_e:] = rest_out[None] + w[:, None] * (end_root - rest_out)[None]

    rotations = quat_from_euler_xyz(angles)
    prompt = spec.prompts[int(rng.integers(0, len(spec.prompts)))]
    metadata = {
        "family": family.value,
        "period": period,
        "cycles": cycles,
        "gt_t_s": t_s,
        "gt_t_e": t_e,
    }
    return MotionClip(skeleton, config.fps, root, rotations, text=prompt, metadata=metadata)


def synth_corpus(config: CorpusConfig, seed: int, skeleton: Optional[Skeleton] = None) -> MotionDataset:
    """Deterministic procedural dataset; clip i depends only on (seed, i)."""
    config.validate()
    families = config.resolved_families()
    skeleton = skeleton or default_humanoid()
    root_seq = np.random.SeedSequence(seed)
    jobs = [(family, child) for family, child in zip(
        [f for f in families for _ in range(config.count_per_family)],
        root_seq.spawn(len(families) * config.count_per_family))]

    def build(job):
        family, child_seq = job
        return synth_clip(family, config, np.random.default_rng(child_seq), skeleton)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            clips = list(pool.map(build, jobs))
    else:
        clips = [build(job) for job in jobs]

    order = np.random.default_rng(root_seq.spawn(1)[0]).permutation(len(clips))
    n_train = int(round(config.split_fractions[0] * len(clips)))
    n_val = int(round(config.split_fractions[1] * len(clips)))
    splits = {
        Split.TRAIN.value: sorted(int(i) for i in order[:n_train]),
        Split.VAL.value: sorted(int(i) for i in order[n_train:n_train + n_val]),
        Split.TEST.value: sorted(int(i) for i in order[n_train + n_val:]),
    }
    splits = {k: v for k, v in splits.items() if v}
    logger.info(f"Synthesized {len(clips)} clips across {len(families)} families (seed={seed})")
    return MotionDataset(clips, splits)
