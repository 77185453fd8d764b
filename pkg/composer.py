"""
PhaseGen - Composer

Builds long and composite motions from phase parameters: exact phase
repetition, pose-conditioned transitions, signal-space crossfades and
N-times denser resampling of the latent signal.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from diffusion import DiffusionStack, SamplerConfig
from errors import StructuralError, ValidationError
from motion_core import MotionClip, Pose, features_to_clip
from motion_enums import GenerationMode, RenoiseMode, SegmentTag, SignalRepresentation
from phase_autoencoder import PhaseCodec, clip_layout
from phase_signals import (FrequencySet, PhaseParams, PhaseSignal, eval_linear, eval_periodic, layout_at,
                           select_representation)

logger = logging.getLogger("phasegen.composer")


def _periodic_samples(params: PhaseParams, freqs: FrequencySet, frames: np.ndarray, period_frames: int,
                      representation: SignalRepresentation) -> np.ndarray:
    # reduce before dividing so frames one period apart share the same k bit-for-bit
    k = np.mod(frames, period_frames) / period_frames
    return select_representation(eval_periodic(params, freqs, k), representation)


def repeat_phase(params: PhaseParams, freqs: FrequencySet, period_frames: int, target_frames: int,
                 representation: SignalRepresentation = SignalRepresentation.SINCOS,
                 offset: int = 0) -> PhaseSignal:
    """Periodic signal at k = t / period_frames for t = offset .. offset + target_frames − 1."""
    if period_frames < 2:
        raise ValidationError(f"period must be >= 2 frames, got {period_frames}")
    if target_frames < 1:
        raise ValidationError(f"target must be >= 1 frame, got {target_frames}")
    frames = np.arange(offset, offset + target_frames)
    samples = _periodic_samples(params, freqs, frames, period_frames, representation)
    return PhaseSignal.periodic(samples, frames / period_frames, representation)


def blend_weights(window: int) -> np.ndarray:
    """Cosine ramp (1 − cos(π·t/window)) / 2 for t = 0 .. window."""
    t = np.arange(window + 1, dtype=np.float64)
    return 0.5 * (1.0 - np.cos(np.pi * t / window))


def _monotone(tags: np.ndarray) -> np.ndarray:
    return np.maximum.accumulate(tags)


def blend(sig_a: PhaseSignal, sig_b: PhaseSignal, window: int, start: Optional[int] = None) -> PhaseSignal:
    """
    Crossfade on a shared timeline: sig_a before `start`, the cosine-weighted
    mixture over frames start .. start + window, sig_b afterwards. The output
    has sig_b's length.
    """
    if sig_a.num_channels != sig_b.num_channels:
        raise StructuralError(f"cannot blend {sig_a.num_channels}-channel and {sig_b.num_channels}-channel signals")
    shared = min(sig_a.num_frames, sig_b.num_frames)
    if window < 1 or window + 1 > shared:
        raise ValidationError(f"blend window {window} must lie in [1, {shared - 1}]: the ramp spans window + 1 "
                              f"frames and the shorter signal has {shared}")
    if start is None:
        start = (shared - window - 1) // 2
    if not 0 <= start <= shared - window - 1:
        raise ValidationError(f"blend start {start} leaves no room for a {window}-frame window")

    stop = start + window + 1
    w = blend_weights(window)[:, None]
    samples = sig_b.samples.copy()
    samples[:start] = sig_a.samples[:start]
    samples[start:stop] = (1.0 - w) * sig_a.samples[start:stop] + w * sig_b.samples[start:stop]
    tags = sig_b.tags.copy()
    tags[:start] = sig_a.tags[:start]
    k = sig_b.k.copy()
    k[:start] = sig_a.k[:start]
    return PhaseSignal(samples, _monotone(tags), k, sig_b.representation)


def interpolate(params: PhaseParams, freqs: FrequencySet, period_frames: int, factor: int,
                target_frames: Optional[int] = None,
                representation: SignalRepresentation = SignalRepresentation.SINCOS) -> PhaseSignal:
    """
    Sample the periodic signal at `factor`-times density:
    k = u / (factor · period_frames) for u = 0 .. factor · target − 1.
    """
    if factor < 1 or int(factor) != factor:
        raise ValidationError(f"interpolation factor must be an integer >= 1, got {factor}")
    target_frames = period_frames if target_frames is None else target_frames
    return repeat_phase(params, freqs, factor * period_frames, factor * target_frames, representation)


def interpolate_assembled(params: PhaseParams, freqs: FrequencySet, t_s: int, t_e: int, t_total: int,
                          factor: int,
                          representation: SignalRepresentation = SignalRepresentation.SINCOS) -> PhaseSignal:
    """
    Whole-clip [ramp_in, periodic, ramp_out] signal at `factor`-times density:
    frame u sits at clip time t = 1 + u / factor, u = 0 .. factor·(t_T − 1).
    """
    if factor < 1 or int(factor) != factor:
        raise ValidationError(f"interpolation factor must be an integer >= 1, got {factor}")
    u = np.arange(factor * (t_total - 1) + 1)
    tags, k = layout_at(1.0 + u / factor, t_s, t_e, t_total)
    samples = np.empty((u.shape[0], 2 * params.num_phases))
    periodic = tags == int(SegmentTag.PERIODIC)
    samples[periodic] = eval_periodic(params, freqs, k[periodic])
    if np.any(~periodic):
        samples[~periodic] = eval_linear(params, k[~periodic])
    return PhaseSignal(select_representation(samples, representation), tags, k, representation)


def decode_interpolated(codec: PhaseCodec, signal: PhaseSignal, factor: int, fps: float,
                        text: Optional[str] = None, root_start: Optional[np.ndarray] = None) -> MotionClip:
    """
    Split the dense signal into `factor` offset sub-signals, decode each on
    its own and re-interleave the frames in sampling order. Root
    displacements are rescaled to the denser frame step.
    """
    features = np.empty((signal.num_frames, codec.pose_dim))
    for j in range(factor):
        sub = PhaseSignal(signal.samples[j::factor], signal.tags[j::factor], signal.k[j::factor],
                          signal.representation)
        features[j::factor] = codec.decode_features(sub)
    features[:, :3] /= factor
    return features_to_clip(features, codec.skeleton, fps * factor, text, root_start)


# ---------------------------------------------------------------------------
# Long-form generation
# ---------------------------------------------------------------------------

@dataclass
class ComposerConfig:
    period_frames: Optional[int] = None
    seam_window: int = 8
    blend_window: int = 20
    guidance: float = 3.0
    sampling_steps: Optional[int] = None
    renoise: str = RenoiseMode.POSTERIOR.value
    seed: int = 0

    def sampler(self, index: int = 0) -> SamplerConfig:
        seed = int(np.random.SeedSequence([self.seed, index]).generate_state(1)[0])
        return SamplerConfig(self.guidance, self.sampling_steps, seed, self.renoise)


@dataclass
class PlannedSegment:
    params: PhaseParams
    prompt: Optional[str]
    period_frames: int
    repeat_count: int
    start_frame: int
    condition: Optional[Pose] = None


@dataclass
class CompositionPlan:
    target_frames: int
    mode: GenerationMode
    segments: List[PlannedSegment] = field(default_factory=list)

    @property
    def planned_frames(self) -> int:
        return sum(s.period_frames * s.repeat_count for s in self.segments)

    def validate(self):
        if self.planned_frames < self.target_frames:
            raise ValidationError(f"plan covers {self.planned_frames} frames, target is {self.target_frames}")
        if any(s.repeat_count < 1 for s in self.segments):
            raise ValidationError("every segment needs repeat_count >= 1")


@dataclass
class Composition:
    clip: MotionClip
    signal: PhaseSignal
    plan: CompositionPlan
    diffusion_calls: int


def _root_start(stack: DiffusionStack) -> np.ndarray:
    return np.array([0.0, stack.root_height, 0.0])


def transition(prev_end_pose: Optional[Pose], next_prompt: Optional[str], stack: DiffusionStack,
               sampler: SamplerConfig) -> PhaseParams:
    """Sample the next segment's phases conditioned on the previous segment's final pose."""
    return stack.sample(next_prompt, prev_end_pose, sampler)


def decode_params(stack: DiffusionStack, params: PhaseParams, frames: int, period_frames: Optional[int] = None,
                  text: Optional[str] = None) -> MotionClip:
    """Decode `frames` frames of a repeated phase with the root anchored at the training pelvis height."""
    codec = stack.codec
    period = int(period_frames or stack.period_frames)
    signal = repeat_phase(params, codec.freqs, period, frames, codec.representation)
    return codec.decode(signal, stack.fps, text, _root_start(stack))


def _seam_blend(samples: np.ndarray, prev: PlannedSegment, nxt: PlannedSegment, freqs: FrequencySet,
                representation: SignalRepresentation, window: int):
    """Ramp from `prev` continued past the seam into `nxt` over the first frames of `nxt`; earlier frames stay."""
    end = nxt.start_frame + nxt.period_frames
    frames = np.arange(nxt.start_frame, min(nxt.start_frame + window + 1, end))
    if window < 1 or frames.size < 2:
        return
    continued = _periodic_samples(prev.params, freqs, frames - prev.start_frame, prev.period_frames, representation)
    w = blend_weights(window)[:frames.size, None]
    samples[frames] = (1.0 - w) * continued + w * samples[frames]


def _chain_segments(prompts: Sequence[Optional[str]], target_frames: int, stack: DiffusionStack,
                    config: ComposerConfig, plan: CompositionPlan, period: int,
                    start_pose: Optional[Pose]) -> Tuple[PhaseSignal, np.ndarray]:
    """
    Generative mode: one diffusion call per period, each conditioned on the
    final pose of the motion composed so far.

    Every segment's frames are decoded from the running signal prefix and
    committed before the next call, so the pose handed to the sampler is the
    composed clip's frame at that boundary.
    """
    codec = stack.codec
    count = math.ceil(target_frames / period)
    samples = np.empty((count * period, codec.num_channels))
    features = np.empty((count * period, codec.pose_dim))
    pose = start_pose
    for i in range(count):
        prompt = prompts[i % len(prompts)]
        params = transition(pose, prompt, stack, config.sampler(i))
        seg = PlannedSegment(params, prompt, period, 1, i * period, pose)
        end = seg.start_frame + period
        samples[seg.start_frame:end] = _periodic_samples(params, codec.freqs, np.arange(period), period,
                                                         codec.representation)
        if plan.segments:
            _seam_blend(samples, plan.segments[-1], seg, codec.freqs, codec.representation, config.seam_window)
        plan.segments.append(seg)
        prefix = PhaseSignal.periodic(samples[:end], np.arange(end) / period, codec.representation)
        features[seg.start_frame:end] = codec.decode_features(prefix)[seg.start_frame:]
        committed = features_to_clip(features[:end], codec.skeleton, stack.fps, None, _root_start(stack))
        pose = committed.pose(end - 1)
    plan.validate()
    signal = PhaseSignal.periodic(samples[:target_frames], np.arange(target_frames) / period, codec.representation)
    return signal, features[:target_frames]


def compose_long(prompts: Sequence[Optional[str]], target_frames: int, mode: GenerationMode,
                 stack: DiffusionStack, config: ComposerConfig,
                 start_pose: Optional[Pose] = None) -> Composition:
    if target_frames < 2:
        raise ValidationError(f"target must be >= 2 frames (a clip holds at least two), got {target_frames}")
    if not prompts:
        raise ValidationError("at least one prompt is required")
    codec = stack.codec
    period = int(config.period_frames or stack.period_frames)
    calls_before = stack.diffusion_calls
    plan = CompositionPlan(target_frames, mode)

    if mode == GenerationMode.REPETITION:
        params = stack.sample(prompts[0], start_pose, config.sampler(0))
        plan.segments.append(PlannedSegment(params, prompts[0], period, math.ceil(target_frames / period), 0,
                                            start_pose))
        plan.validate()
        signal = repeat_phase(params, codec.freqs, period, target_frames, codec.representation)
        features = None
    else:
        signal, features = _chain_segments(prompts, target_frames, stack, config, plan, period, start_pose)

    text = " then ".join(p for p in prompts if p) or None
    if features is None:
        clip = codec.decode(signal, stack.fps, text, _root_start(stack))
    else:
        clip = features_to_clip(features, codec.skeleton, stack.fps, text, _root_start(stack))
    calls = stack.diffusion_calls - calls_before
    clip.metadata.update({"mode": mode.value, "diffusion_calls": calls, "period_frames": period,
                          "segments": len(plan.segments)})
    logger.info(f"Composed {target_frames} frames in {mode.value} mode with {calls} diffusion call(s)")
    return Composition(clip, signal, plan, calls)


def generate_long(prompts: Sequence[Optional[str]], target_frames: int, mode: GenerationMode,
                  stack: DiffusionStack, config: ComposerConfig,
                  start_pose: Optional[Pose] = None) -> MotionClip:
    return compose_long(prompts, target_frames, mode, stack, config, start_pose).clip


def blend_clips(codec: PhaseCodec, clip_a: MotionClip, clip_b: MotionClip, window: int = 20) -> MotionClip:
    """
    Encode both clips, repeat each over a shared timeline of len(a) + len(b)
    frames, crossfade centered on the end of clip a and decode.
    """
    if clip_a.skeleton != clip_b.skeleton:
        raise StructuralError("clips use different skeletons")
    total = clip_a.num_frames + clip_b.num_frames
    signals = []
    for clip in (clip_a, clip_b):
        t_s, t_e = clip_layout(clip)
        params = codec.encode(clip.segment(t_s, t_e))
        signals.append(repeat_phase(params, codec.freqs, t_e - t_s, total, codec.representation))
    start = max(0, min(clip_a.num_frames - window // 2, total - window - 1))
    mixed = blend(signals[0], signals[1], window, start)
    text = " then ".join(t for t in (clip_a.text, clip_b.text) if t) or None
    return codec.decode(mixed, clip_a.fps, text, clip_a.root_positions[0])


def interpolate_clip(codec: PhaseCodec, clip: MotionClip, factor: int) -> MotionClip:
    """Re-encode a clip and decode its full signal at `factor`-times the frame rate."""
    t_s, t_e = clip_layout(clip)
    params = codec.encode(clip.segment(t_s, t_e))
    dense = interpolate_assembled(params, codec.freqs, t_s, t_e, clip.num_frames, factor, codec.representation)
    return decode_interpolated(codec, dense, factor, clip.fps, clip.text, clip.root_positions[0])
