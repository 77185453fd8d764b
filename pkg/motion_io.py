"""
PhaseGen - Motion JSON I/O

One clip per JSON file:
    {"fps": number,
     "skeleton": {"joints": [...], "parents": [...], "offsets": [[x, y, z], ...]},
     "text": string | null, "t_s": int | null, "t_e": int | null,
     "frames": [{"root": [x, y, z], "rot": [[w, x, y, z], ...]}, ...]}
plus the optional keys "original_length" and "metadata".

A dataset is a directory of clip files and a manifest.json listing each
file with its split. Per-clip sidecars such as clip_00000.pool.json sit next
to the clip file they belong to.
"""

import json
import logging
import os
from typing import Any, Dict, List, Optional

import numpy as np

from errors import ExportError, MotionParseError, PhaseGenError
from motion_core import MotionClip, MotionDataset, Skeleton

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1
POOL_SUFFIX = ".pool.json"

logger = logging.getLogger("phasegen.motion_io")


def clip_to_dict(clip: MotionClip) -> Dict[str, Any]:
    return {
        "fps": clip.fps,
        "skeleton": clip.skeleton.to_dict(),
        "text": clip.text,
        "t_s": clip.t_s,
        "t_e": clip.t_e,
        "original_length": clip.original_length,
        "metadata": clip.metadata,
        "frames": [
            {"root": clip.root_positions[i].tolist(), "rot": clip.rotations[i].tolist()}
            for i in range(clip.num_frames)
        ],
    }


def _require(data: Dict[str, Any], key: str, path: Optional[str], prefix: str = "") -> Any:
    if not isinstance(data, dict) or key not in data:
        raise MotionParseError("missing required field", path=path, field=f"{prefix}{key}")
    return data[key]


def clip_from_dict(data: Dict[str, Any], path: Optional[str] = None) -> MotionClip:
    fps = _require(data, "fps", path)
    if not isinstance(fps, (int, float)) or isinstance(fps, bool):
        raise MotionParseError("fps must be a number", path=path, field="fps")

    skel_data = _require(data, "skeleton", path)
    joints = _require(skel_data, "joints", path, "skeleton.")
    parents = _require(skel_data, "parents", path, "skeleton.")
    offsets = _require(skel_data, "offsets", path, "skeleton.")
    try:
        skeleton = Skeleton(joints, parents, np.asarray(offsets, dtype=np.float64))
    except (PhaseGenError, ValueError, TypeError) as e:
        raise MotionParseError(f"invalid skeleton: {e}", path=path, field="skeleton") from e

    frames = _require(data, "frames", path)
    if not isinstance(frames, list) or not frames:
        raise MotionParseError("frames must be a non-empty list", path=path, field="frames")
    roots, rots = [], []
    for i, frame in enumerate(frames):
        roots.append(_require(frame, "root", path, f"frames[{i}]."))
        rots.append(_require(frame, "rot", path, f"frames[{i}]."))
    try:
        root_positions = np.asarray(roots, dtype=np.float64)
        rotations = np.asarray(rots, dtype=np.float64)
    except (ValueError, TypeError) as e:
        raise MotionParseError(f"frames are not numeric arrays: {e}", path=path, field="frames") from e

    try:
        return MotionClip(
            skeleton=skeleton,
            fps=fps,
            root_positions=root_positions,
            rotations=rotations,
            text=data.get("text"),
            t_s=data.get("t_s"),
            t_e=data.get("t_e"),
            original_length=data.get("original_length"),
            metadata=dict(data.get("metadata") or {}),
        )
    except PhaseGenError as e:
        raise MotionParseError(f"invalid clip: {e}", path=path) from e


def save_clip(clip: MotionClip, path: str) -> str:
    try:
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        with open(path, "w") as f:
            json.dump(clip_to_dict(clip), f)
    except OSError as e:
        raise ExportError(f"cannot write clip to {path}: {e}") from e
    return path


def load_clip(path: str) -> MotionClip:
    try:
        with open(path, "r") as f:
            text = f.read()
    except OSError as e:
        raise MotionParseError(f"cannot read file: {e}", path=path) from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise MotionParseError(f"invalid JSON: {e.msg}", path=path, line=e.lineno) from e
    return clip_from_dict(data, path=path)


def save_dataset(dataset: MotionDataset, path: str) -> str:
    """Write one file per clip plus the manifest; returns the manifest path."""
    os.makedirs(path, exist_ok=True)
    split_of = {}
    for split_name, indices in dataset.splits.items():
        for i in indices:
            split_of[i] = split_name

    entries = []
    for i, clip in enumerate(dataset.clips):
        file_name = clip_file_name(i)
        save_clip(clip, os.path.join(path, file_name))
        entries.append({"file": file_name, "split": split_of.get(i)})

    manifest = {
        "version": MANIFEST_VERSION,
        "clips": entries,
        "splits": {name: list(indices) for name, indices in dataset.splits.items()},
    }
    manifest_path = os.path.join(path, MANIFEST_NAME)
    try:
        with open(manifest_path, "w") as f:
            json.dump(manifest, f, indent=2)
    except OSError as e:
        raise ExportError(f"cannot write manifest {manifest_path}: {e}") from e
    logger.info(f"Saved {len(dataset)} clips to {path}")
    return manifest_path


def _read_manifest(path: str) -> Dict[str, Any]:
    manifest_path = os.path.join(path, MANIFEST_NAME)
    try:
        with open(manifest_path, "r") as f:
            return json.load(f)
    except OSError as e:
        raise MotionParseError(f"cannot read manifest: {e}", path=manifest_path) from e
    except json.JSONDecodeError as e:
        raise MotionParseError(f"invalid JSON: {e.msg}", path=manifest_path, line=e.lineno) from e


def dataset_clip_paths(path: str) -> List[str]:
    """Clip file paths of a dataset directory in manifest order."""
    manifest_path = os.path.join(path, MANIFEST_NAME)
    entries: List[Dict[str, Any]] = _require(_read_manifest(path), "clips", manifest_path)
    return [os.path.join(path, _require(entry, "file", manifest_path, f"clips[{i}]."))
            for i, entry in enumerate(entries)]


def load_dataset(path: str) -> MotionDataset:
    manifest_path = os.path.join(path, MANIFEST_NAME)
    manifest = _read_manifest(path)
    clips = [load_clip(clip_path) for clip_path in dataset_clip_paths(path)]

    splits = manifest.get("splits") or {}
    try:
        dataset = MotionDataset(clips, {k: [int(i) for i in v] for k, v in splits.items()})
    except PhaseGenError as e:
        raise MotionParseError(f"invalid manifest: {e}", path=manifest_path, field="splits") from e
    logger.info(f"Loaded {len(dataset)} clips from {path}")
    return dataset


def clip_file_name(index: int) -> str:
    return f"clip_{index:05d}.json"


def sidecar_path(clip_path: str, suffix: str = POOL_SUFFIX) -> str:
    """clip_00003.json -> clip_00003.pool.json"""
    return os.path.splitext(clip_path)[0] + suffix


def save_sidecar(data: Any, clip_path: str, suffix: str = POOL_SUFFIX) -> str:
    path = sidecar_path(clip_path, suffix)
    try:
        with open(path, "w") as f:
            json.dump(data, f, indent=2)
    except OSError as e:
        raise ExportError(f"cannot write sidecar {path}: {e}") from e
    return path


def load_sidecar(clip_path: str, suffix: str = POOL_SUFFIX) -> Optional[Any]:
    """Sidecar contents, or None when the clip has none."""
    path = sidecar_path(clip_path, suffix)
    if not os.path.exists(path):
        return None
    try:
        with open(path, "r") as f:
            return json.load(f)
    except OSError as e:
        raise MotionParseError(f"cannot read sidecar: {e}", path=path) from e
    except json.JSONDecodeError as e:
        raise MotionParseError(f"invalid JSON: {e.msg}", path=path, line=e.lineno) from e
