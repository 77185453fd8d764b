import os
from typing import List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

from motion_core import MotionClip, clip_positions

# (horizontal, vertical) coordinate indices of the two orthographic views
FRONT_VIEW = (0, 1)
SIDE_VIEW = (2, 1)


class MotionVisualizer:
    def __init__(self, out_dir: str = "."):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)

    def _path(self, filename: str) -> str:
        return os.path.join(self.out_dir, filename)

    def plot_loss_matrix(self, matrix: np.ndarray, filename: str = "loss_matrix.png",
                         title: str = "Segment Score") -> str:
        """Heatmap of an (s, e) score matrix; inadmissible pairs are left blank"""
        masked = np.where(np.isfinite(matrix), matrix, np.nan)
        plt.figure(figsize=(8, 7))
        sns.heatmap(masked, cmap="viridis", mask=np.isnan(masked), xticklabels=False, yticklabels=False)
        plt.title(title)
        plt.xlabel("end frame")
        plt.ylabel("start frame")
        path = self._path(filename)
        plt.savefig(path)
        plt.close()
        return path

    def plot_training_curves(self, losses: Sequence[float], learning_rates: Optional[Sequence[float]] = None,
                             filename: str = "training_curves.png", title: str = "Training Loss") -> str:
        """Loss per epoch (log scale), with the learning rate on a twin axis"""
        epochs = np.arange(1, len(losses) + 1)
        fig, ax = plt.subplots(figsize=(10, 5))
        ax.plot(epochs, losses, marker='o', label="loss")
        ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        ax.grid(True)
        if learning_rates:
            lr_ax = ax.twinx()
            lr_ax.plot(epochs, learning_rates, color="tab:orange", linestyle="--", label="lr")
            lr_ax.set_yscale("log")
            lr_ax.set_ylabel("learning rate")
        ax.set_title(title)
        path = self._path(filename)
        fig.savefig(path)
        plt.close(fig)
        return path

    def _draw_skeleton(self, ax, positions: np.ndarray, parents: Sequence[int], view, limits):
        h, v = view
        for joint, parent in enumerate(parents):
            if parent >= 0:
                ax.plot([positions[parent, h], positions[joint, h]],
                        [positions[parent, v], positions[joint, v]], color="black", linewidth=2)
        ax.scatter(positions[:, h], positions[:, v], s=12, color="tab:red", zorder=3)
        ax.set_xlim(*limits[h])
        ax.set_ylim(*limits[v])
        ax.set_aspect("equal")
        ax.set_xticks([])
        ax.set_yticks([])

    def plot_stick_frames(self, clip: MotionClip, prefix: str = "frame", every: int = 1) -> List[str]:
        """
        Render every `every`-th frame as front and side orthographic stick
        figures on fixed axes, one PNG per frame.
        """
        positions = clip_positions(clip)
        lo = positions.reshape(-1, 3).min(axis=0) - 0.1
        hi = positions.reshape(-1, 3).max(axis=0) + 0.1
        limits = list(zip(lo, hi))
        paths = []
        for index in range(0, clip.num_frames, max(1, every)):
            fig, (front, side) = plt.subplots(1, 2, figsize=(8, 4))
            self._draw_skeleton(front, positions[index], clip.skeleton.parents, FRONT_VIEW, limits)
            self._draw_skeleton(side, positions[index], clip.skeleton.parents, SIDE_VIEW, limits)
            front.set_title("front")
            side.set_title("side")
            fig.suptitle(f"{clip.text or 'motion'}  frame {index + 1}/{clip.num_frames}")
            path = self._path(f"{prefix}_{index:05d}.png")
            fig.savefig(path)
            plt.close(fig)
            paths.append(path)
        return paths

    def plot_transition_curves(self, rows: Sequence[dict], filename: str = "transition_curves.png") -> str:
        df = pd.DataFrame(rows).melt(id_vars="frame", var_name="condition", value_name="distance")
        plt.figure(figsize=(10, 6))
        sns.lineplot(data=df, x="frame", y="distance", hue="condition")
        plt.axvline(0, color="grey", linestyle=":")
        plt.title("Round-trip Distance Around the Switch Frame")
        plt.grid(True)
        path = self._path(filename)
        plt.savefig(path)
        plt.close()
        return path

    def plot_guidance_sweep(self, rows: Sequence[dict], filename: str = "guidance_sweep.png") -> str:
        df = pd.DataFrame(rows)
        fig, (left, right) = plt.subplots(1, 2, figsize=(12, 5))
        left.plot(df.guidance, df.prompt_consistency, marker='o', label="prompt")
        left.plot(df.guidance, df.chance_consistency, marker='x', linestyle="--", label="shuffled")
        left.set_title("Prompt Consistency (lower is better)")
        left.set_xlabel("guidance scale")
        left.legend()
        right.plot(df.guidance, df.round_trip_error, marker='o', color="tab:green")
        right.set_title("Round-trip Error")
        right.set_xlabel("guidance scale")
        for ax in (left, right):
            ax.grid(True)
        path = self._path(filename)
        fig.savefig(path)
        plt.close(fig)
        return path

    def plot_timing(self, rows: Sequence[dict], filename: str = "timing_profile.png") -> str:
        df = pd.DataFrame(rows)
        plt.figure(figsize=(10, 6))
        plt.plot(df.length, df.sample_seconds, marker='o', label="sampling")
        plt.plot(df.length, df.decode_seconds, marker='s', label="decoding")
        plt.xlabel("frames")
        plt.ylabel("seconds (median)")
        plt.title("Inference Time by Motion Length")
        plt.legend()
        plt.grid(True)
        path = self._path(filename)
        plt.savefig(path)
        plt.close()
        return path
