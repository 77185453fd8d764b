"""
PhaseGen - Animation export

Writes a motion clip out for viewing elsewhere: joint positions as CSV,
orthographic stick-figure PNG frames, or a JSON render manifest that an
external renderer (or ffmpeg over the PNG frames) can consume.
"""

import json
import logging
import os
from typing import List

import pandas as pd

from errors import ExportError
from motion_core import MotionClip, clip_positions
from motion_enums import ExportFormat

CSV_NAME = "positions.csv"
MANIFEST_NAME = "render_manifest.json"
FRAME_PREFIX = "frame"
MANIFEST_VERSION = 1

logger = logging.getLogger("phasegen.export")


def positions_frame(clip: MotionClip) -> pd.DataFrame:
    """One row per frame: the frame index then x, y, z of every joint from forward kinematics."""
    positions = clip_positions(clip).reshape(clip.num_frames, -1)
    columns = [f"{name}_{axis}" for name in clip.skeleton.joint_names for axis in "xyz"]
    df = pd.DataFrame(positions, columns=columns)
    df.insert(0, "frame", range(clip.num_frames))
    return df


def export_csv(clip: MotionClip, out_dir: str) -> str:
    path = os.path.join(out_dir, CSV_NAME)
    positions_frame(clip).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path


def export_frames(clip: MotionClip, out_dir: str, every: int = 1) -> List[str]:
    from visualization.motion_visualizer import MotionVisualizer

    return MotionVisualizer(out_dir).plot_stick_frames(clip, FRAME_PREFIX, every)


def render_manifest(clip: MotionClip) -> dict:
    positions = clip_positions(clip)
    return {
        "kind": "phasegen-stick-render",
        "version": MANIFEST_VERSION,
        "text": clip.text,
        "fps": clip.fps,
        "num_frames": clip.num_frames,
        "joints": list(clip.skeleton.joint_names),
        "parents": [int(p) for p in clip.skeleton.parents],
        "up_axis": "y",
        "forward_axis": "z",
        "views": {"front": ["x", "y"], "side": ["z", "y"]},
        "positions": positions.tolist(),
        "frame_pattern": f"{FRAME_PREFIX}_%05d.png",
        "ffmpeg": (f"ffmpeg -y -framerate {clip.fps:g} -i {FRAME_PREFIX}_%05d.png "
                   f"-pix_fmt yuv420p motion.mp4"),
    }


def export_manifest(clip: MotionClip, out_dir: str) -> str:
    path = os.path.join(out_dir, MANIFEST_NAME)
    with open(path, "w") as f:
        json.dump(render_manifest(clip), f, indent=2)
    return path


def export_anim(clip: MotionClip, out_dir: str, fmt: ExportFormat, every: int = 1) -> List[str]:
    """Write `clip` to out_dir in the requested format; returns the written file paths."""
    try:
        os.makedirs(out_dir, exist_ok=True)
        if fmt == ExportFormat.CSV:
            files = [export_csv(clip, out_dir)]
        elif fmt == ExportFormat.FRAMES_PNG:
            files = export_frames(clip, out_dir, every)
        else:
            files = [export_manifest(clip, out_dir)]
    except OSError as e:
        raise ExportError(f"cannot export to {out_dir}: {e}") from e
    logger.info(f"Exported {clip.num_frames} frames as {fmt.value} ({len(files)} file(s)) to {out_dir}")
    return files
