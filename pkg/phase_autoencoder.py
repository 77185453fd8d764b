"""
PhaseGen - Phase autoencoder

Encoder E maps the primary segment of a clip to M phase triples (a, p, o);
the assembled phase signal of the whole clip is decoded frame by frame by a
purely convolutional decoder D. Training minimizes pose MSE plus a weighted
forward-kinematics position MSE over the full clip (ramps included).
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn
from tqdm import tqdm

from checkpoint import load_module_tensors, load_tensors, module_tensors, read_meta, save_tensors
from errors import CheckpointError, DivergenceError, StructuralError, ValidationError
from motion_core import (MotionClip, Skeleton, clip_positions, clip_to_features, features_to_clip,
                         pad_or_trim)
from motion_enums import SegmentTag, SignalRepresentation
from phase_signals import (FrequencySet, PhaseParams, PhaseSignal, assemble_signal, make_frequency_set,
                           segment_layout)

logger = logging.getLogger("phasegen.phase_autoencoder")

CHECKPOINT_KIND = "phase-codec"
TWO_PI = 2.0 * np.pi


@dataclass
class AutoencoderConfig:
    num_phases: int = 128
    f_max: int = 30
    representation: str = "sincos"
    lambda_fk: float = 1.0
    epochs: int = 30
    batch_size: int = 128
    lr_start: float = 1e-4
    lr_end: float = 1e-6
    window: int = 64
    conv_channels: int = 64
    hidden: int = 256
    decoder_hidden: int = 128
    clip_len: int = 196

    @property
    def signal_representation(self) -> SignalRepresentation:
        return SignalRepresentation(self.representation)


# ---------------------------------------------------------------------------
# Torch building blocks
# ---------------------------------------------------------------------------

def quat_mul_torch(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    aw, ax, ay, az = a.unbind(-1)
    bw, bx, by, bz = b.unbind(-1)
    return torch.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], dim=-1)


def quat_rotate_torch(q: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    w = q[..., :1]
    u = q[..., 1:]
    uv = torch.cross(u, v, dim=-1)
    return v + 2.0 * w * uv + 2.0 * torch.cross(u, uv, dim=-1)


def forward_kinematics_torch(offsets: torch.Tensor, parents: Sequence[int], root: torch.Tensor,
                             quats: torch.Tensor) -> torch.Tensor:
    """Differentiable FK: root (..., 3), quats (..., J, 4) -> positions (..., J, 3)."""
    quats = quats / quats.norm(dim=-1, keepdim=True).clamp_min(1e-8)
    global_rot = [quats[..., 0, :]]
    positions = [root]
    for j in range(1, len(parents)):
        parent = parents[j]
        offset = offsets[j].expand_as(root)
        positions.append(positions[parent] + quat_rotate_torch(global_rot[parent], offset))
        global_rot.append(quat_mul_torch(global_rot[parent], quats[..., j, :]))
    return torch.stack(positions, dim=-2)


def features_to_positions_torch(features: torch.Tensor, skeleton_offsets: torch.Tensor,
                                parents: Sequence[int]) -> torch.Tensor:
    """(B, T, 3 + 4J) pose features -> (B, T, J, 3) positions with the root starting at the origin."""
    delta = torch.cat([torch.zeros_like(features[:, :1, :3]), features[:, 1:, :3]], dim=1)
    root = torch.cumsum(delta, dim=1)
    quats = features[..., 3:].reshape(features.shape[0], features.shape[1], -1, 4)
    return forward_kinematics_torch(skeleton_offsets, parents, root, quats)


def assemble_torch(a: torch.Tensor, p: torch.Tensor, o: torch.Tensor, freqs: torch.Tensor,
                   k: torch.Tensor, tags: torch.Tensor, sin_only: bool) -> torch.Tensor:
    """Batched signal assembly: (B, M) params, (B, T) k/tags -> (B, T, C)."""
    angle = TWO_PI * (torch.remainder(k, 1.0)[..., None] * freqs + p[:, None, :])
    periodic_sin = a[:, None, :] * torch.sin(angle) + o[:, None, :]
    periodic_cos = a[:, None, :] * torch.cos(angle) + o[:, None, :]
    base_sin = a * torch.sin(TWO_PI * p) + o
    base_cos = a * torch.cos(TWO_PI * p) + o
    linear_sin = k[..., None] * base_sin[:, None, :]
    linear_cos = k[..., None] * base_cos[:, None, :]
    periodic = (tags == int(SegmentTag.PERIODIC))[..., None]
    sin_ch = torch.where(periodic, periodic_sin, linear_sin)
    if sin_only:
        return sin_ch
    cos_ch = torch.where(periodic, periodic_cos, linear_cos)
    return torch.stack([sin_ch, cos_ch], dim=-1).reshape(a.shape[0], k.shape[1], -1)


class PhaseEncoder(nn.Module):
    """Conv1d front end over the resampled segment, then a 4-layer MLP with (a, p, o) heads."""

    def __init__(self, pose_dim: int, num_phases: int, window: int = 64,
                 conv_channels: int = 64, hidden: int = 256):
        super().__init__()
        self.pose_dim = pose_dim
        self.num_phases = num_phases
        self.window = window
        self.conv = nn.Conv1d(pose_dim, conv_channels, kernel_size=5, stride=1, padding=2)
        self.mlp = nn.Sequential(
            nn.Linear(conv_channels * window, hidden),
            nn.ELU(),
            nn.Linear(hidden, hidden),
            nn.ELU(),
            nn.Linear(hidden, hidden),
            nn.ELU(),
            nn.Linear(hidden, 3 * num_phases),
        )

    def forward(self, segments: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """segments: (B, pose_dim, window) -> amplitudes, shifts, offsets each (B, M)."""
        hidden = F.elu(self.conv(segments)).flatten(1)
        raw = self.mlp(hidden).reshape(-1, self.num_phases, 3)
        amplitudes = F.softplus(raw[..., 0])
        shifts = torch.remainder(torch.sigmoid(raw[..., 1]), 1.0)
        offsets = raw[..., 2]
        return amplitudes, shifts, offsets


class PhaseDecoder(nn.Module):
    """Four Conv1d layers over time; receptive radius of 8 frames."""

    RECEPTIVE_RADIUS = 8

    def __init__(self, num_channels: int, pose_dim: int, hidden: int = 128):
        super().__init__()
        self.num_channels = num_channels
        self.net = nn.Sequential(
            nn.Conv1d(num_channels, hidden, kernel_size=5, padding=2),
            nn.ELU(),
            nn.Conv1d(hidden, hidden, kernel_size=5, padding=2),
            nn.ELU(),
            nn.Conv1d(hidden, hidden, kernel_size=5, padding=2),
            nn.ELU(),
            nn.Conv1d(hidden, pose_dim, kernel_size=5, padding=2),
        )

    def forward(self, signal: torch.Tensor) -> torch.Tensor:
        """(B, T, C) -> (B, T, pose_dim)."""
        return self.net(signal.transpose(1, 2)).transpose(1, 2)


class PhaseAutoencoder(nn.Module):
    def __init__(self, pose_dim: int, freqs: FrequencySet, representation: SignalRepresentation,
                 config: AutoencoderConfig):
        super().__init__()
        self.sin_only = representation == SignalRepresentation.SIN
        num_channels = freqs.num_phases * representation.channels_per_phase
        self.encoder = PhaseEncoder(pose_dim, freqs.num_phases, config.window,
                                    config.conv_channels, config.hidden)
        self.decoder = PhaseDecoder(num_channels, pose_dim, config.decoder_hidden)
        self.register_buffer("freqs", torch.tensor(freqs.freqs, dtype=torch.float32), persistent=False)

    def forward(self, segments: torch.Tensor, k: torch.Tensor, tags: torch.Tensor):
        a, p, o = self.encoder(segments)
        signal = assemble_torch(a, p, o, self.freqs.to(a.dtype), k.to(a.dtype), tags, self.sin_only)
        return self.decoder(signal), (a, p, o)


def reconstruction_loss(predicted: torch.Tensor, target: torch.Tensor, offsets: torch.Tensor,
                        parents: Sequence[int], lambda_fk: float) -> torch.Tensor:
    """Pose-feature MSE + λ_FK · MSE of forward-kinematics joint positions."""
    loss = torch.mean((predicted - target) ** 2)
    if lambda_fk:
        pred_pos = features_to_positions_torch(predicted, offsets, parents)
        true_pos = features_to_positions_torch(target, offsets, parents)
        loss = loss + lambda_fk * torch.mean((pred_pos - true_pos) ** 2)
    return loss


# ---------------------------------------------------------------------------
# numpy <-> torch plumbing
# ---------------------------------------------------------------------------

def resample_segment(features: np.ndarray, length: int) -> np.ndarray:
    """Linear resampling of (L, D) features onto `length` evenly spaced frames."""
    features = np.asarray(features, dtype=np.float64)
    position = np.linspace(0.0, features.shape[0] - 1, length)
    lo = np.floor(position).astype(int)
    hi = np.minimum(lo + 1, features.shape[0] - 1)
    frac = (position - lo)[:, None]
    return features[lo] * (1.0 - frac) + features[hi] * frac


def segment_batch(segments: Sequence[MotionClip], window: int, dtype=torch.float32) -> torch.Tensor:
    arrays = [resample_segment(clip_to_features(seg), window).T for seg in segments]
    return torch.as_tensor(np.stack(arrays), dtype=dtype)


def clip_layout(clip: MotionClip) -> Tuple[int, int]:
    if clip.has_annotation:
        return clip.t_s, clip.t_e
    return 1, clip.num_frames


@dataclass
class TrainingBatch:
    segments: torch.Tensor
    k: torch.Tensor
    tags: torch.Tensor
    target: torch.Tensor


def build_training_batch(clips: Sequence[MotionClip], window: int, dtype=torch.float32) -> TrainingBatch:
    """Segments, per-frame (k, tag) layouts and full-clip target features for equal-length clips."""
    lengths = {clip.num_frames for clip in clips}
    if len(lengths) != 1:
        raise StructuralError(f"training clips must share a length, got {sorted(lengths)}")
    segments, ks, tags, targets = [], [], [], []
    for clip in clips:
        t_s, t_e = clip_layout(clip)
        segments.append(clip.segment(t_s, t_e))
        tag, k = segment_layout(t_s, t_e, clip.num_frames)
        ks.append(k)
        tags.append(tag)
        targets.append(clip_to_features(clip))
    return TrainingBatch(
        segments=segment_batch(segments, window, dtype),
        k=torch.as_tensor(np.stack(ks), dtype=dtype),
        tags=torch.as_tensor(np.stack(tags), dtype=torch.long),
        target=torch.as_tensor(np.stack(targets), dtype=dtype),
    )


# ---------------------------------------------------------------------------
# Codec
# ---------------------------------------------------------------------------

@dataclass
class TrainingLog:
    losses: List[float] = field(default_factory=list)
    learning_rates: List[float] = field(default_factory=list)

    @property
    def initial_loss(self) -> float:
        return self.losses[0] if self.losses else float("nan")

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else float("nan")

    def to_dict(self) -> Dict[str, List[float]]:
        return {"losses": list(self.losses), "learning_rates": list(self.learning_rates)}


class PhaseCodec:
    """Frozen-or-trainable encoder/decoder pair bound to a skeleton and frequency set."""

    def __init__(self, skeleton: Skeleton, config: AutoencoderConfig,
                 model: Optional[PhaseAutoencoder] = None):
        self.skeleton = skeleton
        self.config = config
        self.freqs = make_frequency_set(config.num_phases, config.f_max)
        self.representation = config.signal_representation
        self.model = model or PhaseAutoencoder(skeleton.pose_dim, self.freqs, self.representation, config)
        self._offsets = torch.as_tensor(skeleton.offsets, dtype=torch.float32)

    @property
    def pose_dim(self) -> int:
        return self.skeleton.pose_dim

    @property
    def num_channels(self) -> int:
        return self.freqs.num_phases * self.representation.channels_per_phase

    def _check_segment(self, segment: MotionClip):
        if segment.skeleton.pose_dim != self.pose_dim:
            raise StructuralError(
                f"segment pose dimension {segment.skeleton.pose_dim} does not match codec ({self.pose_dim})")
        if segment.num_frames < 2:
            raise ValidationError("segment needs at least 2 frames")

    def encode_clips(self, segments: Sequence[MotionClip]) -> List[PhaseParams]:
        for segment in segments:
            self._check_segment(segment)
        self.model.eval()
        with torch.no_grad():
            a, p, o = self.model.encoder(segment_batch(segments, self.config.window))
        return [PhaseParams(a[i].double().numpy(), p[i].double().numpy(), o[i].double().numpy())
                for i in range(len(segments))]

    def encode(self, segment: MotionClip) -> PhaseParams:
        return self.encode_clips([segment])[0]

    def signal_for(self, params: PhaseParams, t_s: int, t_e: int, t_total: int) -> PhaseSignal:
        return assemble_signal(params, self.freqs, t_s, t_e, t_total, self.representation)

    def decode_features(self, signal: PhaseSignal) -> np.ndarray:
        if signal.num_channels != self.num_channels:
            raise StructuralError(
                f"signal has {signal.num_channels} channels, decoder expects {self.num_channels}")
        self.model.eval()
        with torch.no_grad():
            out = self.model.decoder(torch.as_tensor(signal.samples[None], dtype=torch.float32))
        return out[0].double().numpy()

    def decode(self, signal: PhaseSignal, fps: float = 12.5, text: Optional[str] = None,
               root_start: Optional[np.ndarray] = None) -> MotionClip:
        return features_to_clip(self.decode_features(signal), self.skeleton, fps, text, root_start)

    def reconstruct(self, clip: MotionClip) -> MotionClip:
        """decode(assemble(encode(segment))) over the clip's own layout, root anchored at frame 1."""
        t_s, t_e = clip_layout(clip)
        params = self.encode(clip.segment(t_s, t_e))
        signal = self.signal_for(params, t_s, t_e, clip.num_frames)
        return self.decode(signal, clip.fps, clip.text, clip.root_positions[0])

    def save(self, path: str, extra_meta: Optional[Dict] = None) -> str:
        meta = {
            "kind": CHECKPOINT_KIND,
            "config": asdict(self.config),
            "freqs": list(self.freqs.freqs),
            "pose_dim": self.pose_dim,
            "skeleton": self.skeleton.to_dict(),
            "skeleton_name": self.skeleton.name,
        }
        meta.update(extra_meta or {})
        return save_tensors(path, module_tensors(self.model), meta)

    @classmethod
    def load(cls, path: str) -> "PhaseCodec":
        meta = read_meta(path)
        if meta.get("kind") != CHECKPOINT_KIND:
            raise CheckpointError(f"{path} is not a phase-codec checkpoint (kind={meta.get('kind')})")
        tensors, meta = load_tensors(path)
        skel = meta["skeleton"]
        skeleton = Skeleton(skel["joints"], skel["parents"], np.asarray(skel["offsets"]),
                            name=meta.get("skeleton_name", "skeleton"))
        codec = cls(skeleton, AutoencoderConfig(**meta["config"]))
        load_module_tensors(codec.model, tensors)
        codec.model.eval()
        return codec


def mean_joint_error(reference: MotionClip, candidate: MotionClip) -> float:
    """Mean per-joint Euclidean distance between the FK positions of two equal-length clips."""
    return float(np.mean(np.linalg.norm(clip_positions(reference) - clip_positions(candidate), axis=-1)))


def evaluate_reconstruction(codec: PhaseCodec, clips: Sequence[MotionClip]) -> Dict[str, float]:
    """Held-out reconstruction MSE on pose features and mean per-joint position error."""
    mses, errors = [], []
    for clip in clips:
        recon = codec.reconstruct(clip)
        mses.append(float(np.mean((clip_to_features(recon) - clip_to_features(clip)) ** 2)))
        errors.append(mean_joint_error(clip, recon))
    return {"recon_mse": float(np.mean(mses)), "mpjpe": float(np.mean(errors)), "clips": len(clips)}


def train_autoencoder(clips: Sequence[MotionClip], config: AutoencoderConfig, seed: int,
                      on_epoch: Optional[Callable[[int, float, float], None]] = None,
                      progress: bool = False) -> Tuple[PhaseCodec, TrainingLog]:
    """
    Train encoder and decoder jointly with Adam; the learning rate decays
    exponentially from lr_start to lr_end over the run.
    """
    if not clips:
        raise ValidationError("no training clips")
    if config.epochs < 1 or config.batch_size < 1:
        raise ValidationError("epochs and batch_size must be >= 1")
    clips = [pad_or_trim(clip, config.clip_len) for clip in clips]

    torch.manual_seed(seed)
    codec = PhaseCodec(clips[0].skeleton, config)
    model = codec.model
    batch = build_training_batch(clips, config.window)
    offsets = codec._offsets
    parents = codec.skeleton.parents

    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr_start)
    gamma = (config.lr_end / config.lr_start) ** (1.0 / max(1, config.epochs - 1))
    scheduler = torch.optim.lr_scheduler.ExponentialLR(optimizer, gamma=gamma)
    rng = np.random.default_rng(seed)
    batch_size = min(config.batch_size, len(clips))
    log = TrainingLog()
    last_finite = None

    model.train()
    for epoch in tqdm(range(config.epochs), desc="train-ae", disable=not progress):
        order = rng.permutation(len(clips))
        epoch_losses = []
        for b, start in enumerate(range(0, len(order), batch_size)):
            idx = torch.as_tensor(order[start:start + batch_size])
            optimizer.zero_grad()
            predicted, _ = model(batch.segments[idx], batch.k[idx], batch.tags[idx])
            loss = reconstruction_loss(predicted, batch.target[idx], offsets, parents, config.lambda_fk)
            if not torch.isfinite(loss):
                raise DivergenceError("autoencoder loss is not finite", epoch=epoch, batch=b,
                                      last_finite_loss=last_finite)
            loss.backward()
            optimizer.step()
            last_finite = float(loss.item())
            epoch_losses.append(last_finite)
        lr = optimizer.param_groups[0]["lr"]
        log.losses.append(float(np.mean(epoch_losses)))
        log.learning_rates.append(lr)
        logger.debug(f"train-ae epoch {epoch}: loss={log.losses[-1]:.6f} lr={lr:.2e}")
        if on_epoch is not None:
            on_epoch(epoch, log.losses[-1], lr)
        scheduler.step()

    model.eval()
    logger.info(f"Autoencoder trained: loss {log.initial_loss:.5f} -> {log.final_loss:.5f}")
    return codec, log
