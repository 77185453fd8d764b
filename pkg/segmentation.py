"""
PhaseGen - Segmentation

Finds the primary periodic segment (t_s, t_e) of each clip by exhaustive
search over all admissible frame pairs, builds the top-W augmentation pool
and exports pairwise feature-distance matrices for inspection.

Objective for a 1-based pair (t_s, t_e) of a clip with t_T frames:
    λ1·||d_ts − d_te|| − λ2·(t_e − t_s)/t_T − λ3·||d_te − d_tT||
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import ValidationError
from motion_core import MotionClip, MotionDataset, clip_positions
from motion_io import dataset_clip_paths, load_sidecar, save_sidecar

logger = logging.getLogger("phasegen.segmentation")

SUPPRESSION_RADIUS = 2


@dataclass
class SegmentationWeights:
    lambda1: float = 1.0
    lambda2: float = 0.5
    lambda3: float = 0.5
    min_len: int = 20

    def __post_init__(self):
        lambdas = (self.lambda1, self.lambda2, self.lambda3)
        if any(not np.isfinite(l) or l < 0 for l in lambdas):
            raise ValidationError(f"segmentation weights must be finite and nonnegative, got {lambdas}")
        if not any(l > 0 for l in lambdas):
            raise ValidationError("at least one segmentation weight must be positive")
        if self.min_len < 2:
            raise ValidationError(f"min_len must be >= 2, got {self.min_len}")


@dataclass(frozen=True)
class SegmentAnnotation:
    t_s: int
    t_e: int
    score: float

    @property
    def length(self) -> int:
        return self.t_e - self.t_s

    def to_dict(self) -> Dict[str, Any]:
        return {"t_s": self.t_s, "t_e": self.t_e, "score": self.score}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SegmentAnnotation":
        return cls(int(data["t_s"]), int(data["t_e"]), float(data["score"]))


@dataclass
class FeatureNormalizer:
    """Per-dimension z-normalization fitted across a split."""
    mean: np.ndarray
    std: np.ndarray
    eps: float = 1e-8

    @classmethod
    def fit(cls, feature_list: Sequence[np.ndarray], eps: float = 1e-8) -> "FeatureNormalizer":
        stacked = np.concatenate([np.asarray(f, dtype=np.float64) for f in feature_list], axis=0)
        std = stacked.std(axis=0)
        # constant dimensions pass through unscaled
        std = np.where(std < eps, 1.0, std)
        return cls(stacked.mean(axis=0), std, eps)

    def transform(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.shape[-1] != self.mean.shape[0]:
            raise ValidationError(
                f"features have {features.shape[-1]} dimensions, normalizer expects {self.mean.shape[0]}")
        return (features - self.mean) / self.std

    def to_dict(self) -> Dict[str, Any]:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "eps": self.eps}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FeatureNormalizer":
        return cls(np.asarray(data["mean"], dtype=np.float64), np.asarray(data["std"], dtype=np.float64),
                   float(data.get("eps", 1e-8)))


def _window_bounds(num_frames: int, window: int) -> Tuple[np.ndarray, np.ndarray]:
    half = window // 2
    idx = np.arange(num_frames)
    return np.clip(idx - half, 0, num_frames - 1), np.clip(idx + half, 0, num_frames - 1)


def embed_frames(clip: MotionClip, window: int = 5,
                 normalizer: Optional[FeatureNormalizer] = None) -> np.ndarray:
    """
    Per-frame features: joint quaternions followed by centered finite-difference
    joint velocities over a window of w frames (clamped at the clip ends).

    Returns:
        (t_T, 4J + 3J) array
    """
    if window < 1:
        raise ValidationError(f"window must be >= 1, got {window}")
    if clip.num_frames <= window:
        raise ValidationError(f"clip has {clip.num_frames} frames, needs more than the window ({window})")

    positions = clip_positions(clip)
    lo, hi = _window_bounds(clip.num_frames, window)
    span = np.maximum(hi - lo, 1).astype(np.float64)
    velocity = (positions[hi] - positions[lo]) / span[:, None, None]

    features = np.concatenate([
        clip.rotations.reshape(clip.num_frames, -1),
        velocity.reshape(clip.num_frames, -1),
    ], axis=-1)
    if normalizer is not None:
        features = normalizer.transform(features)
    return features


def embed_frames_with_encoder(clip: MotionClip, codec, window: int = 17) -> np.ndarray:
    """
    Re-embed each frame as the flattened phase parameters a trained encoder
    assigns to the clamped window of frames around it.

    `codec` is a phase_autoencoder.PhaseCodec (anything with encode_clips).
    """
    if clip.num_frames <= 2:
        raise ValidationError("clip too short for encoder embedding")
    window = max(2, min(window, clip.num_frames))
    lo, hi = _window_bounds(clip.num_frames, window)
    segments = [clip.segment(int(s) + 1, int(e) + 1) for s, e in zip(lo, hi)]
    params = codec.encode_clips(segments)
    return np.stack([p.to_vector() for p in params])


def loss_matrix(features: np.ndarray) -> np.ndarray:
    """t_T × t_T matrix of pairwise Euclidean feature distances."""
    features = np.asarray(features, dtype=np.float64)
    return np.linalg.norm(features[:, None, :] - features[None, :, :], axis=-1)


def score_matrix(features: np.ndarray, weights: SegmentationWeights,
                 distances: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Objective value for every (t_s, t_e) pair, indexed 0-based; inadmissible
    pairs hold +inf.
    """
    features = np.asarray(features, dtype=np.float64)
    num_frames = features.shape[0]
    if num_frames < weights.min_len + 2:
        raise ValidationError(
            f"sequence of {num_frames} frames is shorter than min_len + 2 = {weights.min_len + 2}")
    d = loss_matrix(features) if distances is None else distances

    s_idx, e_idx = np.meshgrid(np.arange(num_frames), np.arange(num_frames), indexing="ij")
    length = (e_idx - s_idx).astype(np.float64)
    scores = (weights.lambda1 * d
              - weights.lambda2 * length / num_frames
              - weights.lambda3 * d[:, -1][None, :])
    admissible = (e_idx - s_idx) >= weights.min_len
    return np.where(admissible, scores, np.inf)


def _ranked_pairs(scores: np.ndarray) -> np.ndarray:
    """Admissible 0-based pairs ordered by score, then longer first, then earlier start."""
    s_idx, e_idx = np.nonzero(np.isfinite(scores))
    values = scores[s_idx, e_idx]
    order = np.lexsort((s_idx, -(e_idx - s_idx), values))
    return np.stack([s_idx[order], e_idx[order]], axis=-1)


def detect_segment(features: np.ndarray, weights: Optional[SegmentationWeights] = None) -> SegmentAnnotation:
    weights = weights or SegmentationWeights()
    scores = score_matrix(features, weights)
    s, e = _ranked_pairs(scores)[0]
    return SegmentAnnotation(int(s) + 1, int(e) + 1, float(scores[s, e]))


def top_w_segments(features: np.ndarray, weights: Optional[SegmentationWeights] = None,
                   w: int = 5) -> List[SegmentAnnotation]:
    """
    The W best admissible pairs in ascending score order. A pair whose start
    and end both lie within two frames of an already kept pair is suppressed.
    """
    if w < 1:
        raise ValidationError(f"W must be >= 1, got {w}")
    weights = weights or SegmentationWeights()
    scores = score_matrix(features, weights)

    kept: List[Tuple[int, int]] = []
    for s, e in _ranked_pairs(scores):
        if any(abs(s - ks) <= SUPPRESSION_RADIUS and abs(e - ke) <= SUPPRESSION_RADIUS for ks, ke in kept):
            continue
        kept.append((int(s), int(e)))
        if len(kept) == w:
            break
    return [SegmentAnnotation(s + 1, e + 1, float(scores[s, e])) for s, e in kept]


def export_loss_matrix(matrix: np.ndarray, out_dir: str, name: str) -> Dict[str, str]:
    """Write the matrix as CSV and as a heatmap PNG; returns both paths."""
    from visualization.motion_visualizer import MotionVisualizer

    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{name}_loss_matrix.csv")
    frame_labels = np.arange(1, matrix.shape[0] + 1)
    pd.DataFrame(matrix, index=frame_labels, columns=frame_labels).to_csv(csv_path, float_format="%.9g")
    png_path = MotionVisualizer(out_dir).plot_loss_matrix(matrix, f"{name}_loss_matrix.png", title=name)
    return {"csv": csv_path, "png": png_path}


@dataclass
class PreprocessResult:
    dataset: MotionDataset
    pools: List[List[SegmentAnnotation]]
    normalizer: FeatureNormalizer
    matrices: Dict[int, np.ndarray] = field(default_factory=dict)


def preprocess_dataset(dataset: MotionDataset, weights: Optional[SegmentationWeights] = None,
                       window: int = 5, top_w: int = 5, workers: int = 1,
                       keep_matrices: Sequence[int] = ()) -> PreprocessResult:
    """
    Annotate every clip with its detected (t_s, t_e) and augmentation pool.
    The feature normalizer is fitted on the train split and applied to all clips.
    """
    weights = weights or SegmentationWeights()
    raw = [embed_frames(clip, window) for clip in dataset.clips]
    train_idx = dataset.splits.get("train") or list(range(len(dataset)))
    normalizer = FeatureNormalizer.fit([raw[i] for i in train_idx])

    def annotate(i: int) -> List[SegmentAnnotation]:
        return top_w_segments(normalizer.transform(raw[i]), weights, top_w)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pools = list(pool.map(annotate, range(len(dataset))))
    else:
        pools = [annotate(i) for i in range(len(dataset))]

    clips = []
    for clip, pool in zip(dataset.clips, pools):
        best = pool[0]
        metadata = dict(clip.metadata)
        metadata["segment_score"] = best.score
        clips.append(clip.copy(t_s=best.t_s, t_e=best.t_e, metadata=metadata))

    matrices = {i: loss_matrix(normalizer.transform(raw[i])) for i in keep_matrices if 0 <= i < len(raw)}
    logger.info(f"Annotated {len(clips)} clips (W={top_w}, window={window})")
    return PreprocessResult(MotionDataset(clips, dict(dataset.splits)), pools, normalizer, matrices)


def save_pools(pools: Sequence[Sequence[SegmentAnnotation]], dataset_dir: str) -> List[str]:
    """Write each clip's augmentation pool to the sidecar next to its clip file."""
    clip_paths = dataset_clip_paths(dataset_dir)
    if len(clip_paths) != len(pools):
        raise ValidationError(f"{len(pools)} pools for {len(clip_paths)} clips in {dataset_dir}")
    return [save_sidecar([a.to_dict() for a in pool], path) for pool, path in zip(pools, clip_paths)]


def load_pools(dataset_dir: str, dataset: MotionDataset) -> List[List[SegmentAnnotation]]:
    """Augmentation pools from the clip sidecars (the clip's own annotation when a sidecar is absent)."""
    clip_paths = dataset_clip_paths(dataset_dir)
    pools = []
    for i, (clip, path) in enumerate(zip(dataset.clips, clip_paths)):
        stored = load_sidecar(path)
        if stored:
            pools.append([SegmentAnnotation.from_dict(entry) for entry in stored])
        elif clip.has_annotation:
            pools.append([SegmentAnnotation(clip.t_s, clip.t_e, float(clip.metadata.get("segment_score", 0.0)))])
        else:
            raise ValidationError(f"clip {i} has no segment annotation; run preprocess first")
    return pools
