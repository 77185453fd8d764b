#!/usr/bin/env python3
"""
PhaseGen - Evaluation Harness

Desk-scale studies over the synthetic corpus:
- reconstruction study over encoder configurations (f_max, representation, M)
- transition study comparing conditioning poses at a segment switch
- guidance sweep over the classifier-free guidance scale
- timing profile of the sampling and decoding stages across motion lengths

All metrics are proxies computed with the models in this repository and are
labelled PROXY in every report.
"""

import dataclasses
import json
import logging
import platform
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import psutil
import torch

from composer import decode_params, repeat_phase
from diffusion import DiffusionStack, SamplerConfig
from errors import ExportError, PhaseGenError, ValidationError
from motion_core import MotionClip, Pose, clip_positions
from motion_enums import PoseCondition, StudyKind
from phase_autoencoder import (AutoencoderConfig, PhaseCodec, evaluate_reconstruction, mean_joint_error,
                               train_autoencoder)
from phase_signals import PhaseSignal
from text_encoder import encode_text

SCHEMA_VERSION = 1
PROXY = "PROXY"
DEFAULT_RECON_GRID: List[Tuple[int, str, int]] = [
    (f_max, representation, num_phases)
    for f_max in (8, 30) for representation in ("sin", "sincos") for num_phases in (128, 256)
]
DEFAULT_GUIDANCE = (1.5, 2.5, 3.5, 4.5, 5.5)
DEFAULT_LENGTHS = (196, 392, 588, 784, 980)
GUIDANCE_BAND = (2.5, 3.5)

logger = logging.getLogger("phasegen.eval")


def environment_fingerprint() -> Dict[str, Any]:
    """Machine and library versions a timing or metric was produced on."""
    memory = psutil.virtual_memory()
    return {
        "python": platform.python_version(),
        "platform": platform.platform(),
        "machine": platform.machine(),
        "processor": platform.processor(),
        "cpu_count": psutil.cpu_count(logical=True),
        "physical_cores": psutil.cpu_count(logical=False),
        "memory_total_mb": round(memory.total / (1024 * 1024), 1),
        "numpy": np.__version__,
        "torch": torch.__version__,
        "torch_threads": torch.get_num_threads(),
    }


@dataclass
class MetricReport:
    experiment: str
    config: Dict[str, Any]
    seed: int
    metrics: Dict[str, Any] = field(default_factory=dict)
    rows: List[Dict[str, Any]] = field(default_factory=list)
    labels: Dict[str, str] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)
    corpus_seed: Optional[int] = None
    environment: Dict[str, Any] = field(default_factory=environment_fingerprint)
    schema_version: int = SCHEMA_VERSION

    def label(self, *names: str):
        for name in names:
            self.labels[name] = PROXY

    @property
    def failed(self) -> bool:
        return "error" in self.metrics

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MetricReport":
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ValidationError(f"unsupported report schema version {version}")
        return cls(**data)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)


def save_reports(reports: Sequence[MetricReport], path: str) -> str:
    document = {"schema_version": SCHEMA_VERSION, "reports": [r.to_dict() for r in reports]}
    try:
        with open(path, "w") as f:
            json.dump(document, f, indent=2, sort_keys=True)
    except OSError as e:
        raise ExportError(f"cannot write report {path}: {e}") from e
    logger.info(f"Wrote {len(reports)} report(s) to {path}")
    return path


def load_reports(path: str) -> List[MetricReport]:
    with open(path, "r") as f:
        document = json.load(f)
    return [MetricReport.from_dict(r) for r in document.get("reports", [])]


def flag_corpus_seeds(reports: Sequence[MetricReport]) -> bool:
    """Add a note to every report when the set mixes corpus seeds. Returns True if flagged."""
    seeds = {r.corpus_seed for r in reports if r.corpus_seed is not None}
    if len(seeds) <= 1:
        return False
    note = f"reports span corpus seeds {sorted(seeds)}; metrics are not directly comparable"
    for report in reports:
        if note not in report.notes:
            report.notes.append(note)
    logger.warning(note)
    return True


# ---------------------------------------------------------------------------
# Shared proxies
# ---------------------------------------------------------------------------

def cycle_round_trip(codec: PhaseCodec, clip: MotionClip, period_frames: int) -> float:
    """
    Autoencoder round-trip error of a generated motion, averaged over its
    complete cycles (the whole clip when it is shorter than one cycle).
    """
    chunks = [clip.segment(start + 1, start + period_frames)
              for start in range(0, clip.num_frames - period_frames + 1, period_frames)]
    if not chunks:
        chunks = [clip]
    return float(np.mean([mean_joint_error(chunk, codec.reconstruct(chunk)) for chunk in chunks]))


def motion_signature(clip: MotionClip) -> np.ndarray:
    """Phase-invariant descriptor: mean and spread of root-relative joints, mean root velocity."""
    positions = clip_positions(clip)
    relative = positions - positions[:, :1]
    velocity = np.diff(clip.root_positions, axis=0).mean(axis=0) * clip.fps
    return np.concatenate([relative.mean(axis=0).ravel(), relative.std(axis=0).ravel(), velocity])


def _linear_r2(x: np.ndarray, y: np.ndarray) -> float:
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = np.sum((y - y.mean()) ** 2)
    return float(1.0 - np.sum(residual ** 2) / total) if total > 0 else 1.0


def _stream_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# Reconstruction study
# ---------------------------------------------------------------------------

def recon_study(train_clips: Sequence[MotionClip], held_out: Sequence[MotionClip],
                base_config: AutoencoderConfig, grid: Optional[Sequence[Tuple[int, str, int]]] = None,
                seed: int = 0, corpus_seed: Optional[int] = None) -> List[MetricReport]:
    """
    Train one autoencoder per (f_max, representation, num_phases) cell with the
    same seed and epochs; report held-out reconstruction MSE and mean per-joint
    position error. A failing cell records its error and the others continue.
    """
    reports = []
    for f_max, representation, num_phases in (grid or DEFAULT_RECON_GRID):
        config = dataclasses.replace(base_config, f_max=f_max, representation=representation,
                                     num_phases=num_phases)
        report = MetricReport(StudyKind.RECON_STUDY.value, dataclasses.asdict(config), seed,
                              corpus_seed=corpus_seed)
        start = time.perf_counter()
        try:
            codec, log = train_autoencoder(train_clips, config, seed)
            report.metrics.update(evaluate_reconstruction(codec, held_out))
            report.metrics["final_train_loss"] = log.final_loss
        except PhaseGenError as e:
            report.metrics["error"] = {"category": e.category, "message": str(e)}
            logger.error(f"recon cell f_max={f_max} {representation} M={num_phases} failed: {e}")
        report.metrics["train_seconds"] = time.perf_counter() - start
        report.label("recon_mse", "mpjpe")
        reports.append(report)
        logger.info(f"recon cell f_max={f_max} {representation} M={num_phases}: {report.metrics}")
    flag_corpus_seeds(reports)
    return reports


def recon_ordering(reports: Sequence[MetricReport], tolerance: float = 0.05) -> Dict[str, Optional[bool]]:
    """Pass/fail for the expected ordering of reconstruction errors across cells (None when a cell is missing)."""
    errors = {}
    for report in reports:
        if not report.failed:
            c = report.config
            errors[(c["f_max"], c["representation"], c["num_phases"])] = report.metrics["recon_mse"]

    def less(a, b, slack=0.0):
        if a not in errors or b not in errors:
            return None
        return errors[a] < errors[b] * (1.0 + slack) if slack else errors[a] < errors[b]

    return {
        "sincos_beats_sin": less((30, "sincos", 128), (30, "sin", 128)),
        "f30_beats_f8": less((30, "sin", 128), (8, "sin", 128)),
        "full_beats_baseline": less((30, "sincos", 128), (8, "sin", 128)),
        "more_phases_marginal": less((30, "sincos", 256), (30, "sincos", 128), tolerance),
    }


# ---------------------------------------------------------------------------
# Transition study
# ---------------------------------------------------------------------------

def _condition_pose(condition: PoseCondition, end_pose: Pose, pose_bank: Sequence[Pose],
                    rng: np.random.Generator) -> Optional[Pose]:
    if condition == PoseCondition.END_POSE:
        return end_pose
    if condition == PoseCondition.RANDOM_POSE:
        if not pose_bank:
            raise ValidationError("random-pose conditioning needs a non-empty pose bank")
        return pose_bank[int(rng.integers(len(pose_bank)))]
    return None


def transition_curve(codec: PhaseCodec, clip: MotionClip, switch: int, half_window: int) -> np.ndarray:
    """
    Per-frame mean per-joint L2 (root-relative) between the frames around the
    switch and their autoencoder round trip; index half_window is the switch.
    """
    lo, hi = switch - half_window, switch + half_window
    if lo < 0 or hi > clip.num_frames:
        raise ValidationError(f"window [{lo}, {hi}) exceeds the {clip.num_frames}-frame motion")
    window = clip.segment(lo + 1, hi)
    recon = codec.reconstruct(window)
    a, b = clip_positions(window), clip_positions(recon)
    a = a - a[:, :1]
    b = b - b[:, :1]
    return np.linalg.norm(a - b, axis=-1).mean(axis=-1)


def transition_study(stack: DiffusionStack, prompt_pairs: Sequence[Tuple[str, str]],
                     pose_bank: Sequence[Pose] = (),
                     conditions: Sequence[PoseCondition] = tuple(PoseCondition),
                     seed: int = 0, guidance: float = 3.0, sampling_steps: Optional[int] = None,
                     half_window: Optional[int] = None, min_pairs: int = 32,
                     corpus_seed: Optional[int] = None) -> MetricReport:
    """
    For each prompt pair and conditioning choice, sample segment one, sample
    segment two conditioned on that choice, decode the hard concatenation and
    measure the round-trip error curve centered at the switch frame.
    """
    if len(prompt_pairs) < min_pairs:
        raise ValidationError(f"transition study needs >= {min_pairs} prompt pairs, got {len(prompt_pairs)}")
    codec = stack.codec
    period = stack.period_frames
    half = half_window or max(2, period // 2)
    if half > period:
        raise ValidationError(f"half window {half} exceeds the {period}-frame segments")
    config = {"pairs": len(prompt_pairs), "conditions": [c.value for c in conditions], "guidance": guidance,
              "sampling_steps": sampling_steps, "period_frames": period, "half_window": half}
    report = MetricReport(StudyKind.TRANSITION_STUDY.value, config, seed, corpus_seed=corpus_seed)
    report.notes.append("distance is the mean per-joint L2 of root-relative positions")

    curves: Dict[str, List[np.ndarray]] = {c.value: [] for c in conditions}
    for i, (first, second) in enumerate(prompt_pairs):
        first_sampler = SamplerConfig(guidance, sampling_steps, _stream_seed(seed, i, 0))
        second_sampler = SamplerConfig(guidance, sampling_steps, _stream_seed(seed, i, 1))
        params_a = stack.sample(first, None, first_sampler)
        clip_a = decode_params(stack, params_a, period, period)
        end_pose = clip_a.pose(clip_a.num_frames - 1)
        for condition in conditions:
            rng = np.random.default_rng(_stream_seed(seed, i, 2))
            pose = _condition_pose(condition, end_pose, pose_bank, rng)
            params_b = stack.sample(second, pose, second_sampler)
            signal = _concatenate(stack, params_a, params_b, period)
            motion = codec.decode(signal, stack.fps, root_start=clip_a.root_positions[0])
            curves[condition.value].append(transition_curve(codec, motion, period, half))

    offsets = list(range(-half, half))
    near = np.abs(np.asarray(offsets)) <= max(1, half // 8)
    far = np.abs(np.asarray(offsets)) > max(1, half * 3 // 4)
    means = {}
    for name, rows in curves.items():
        mean_curve = np.mean(rows, axis=0)
        means[name] = mean_curve
        report.metrics[f"near_switch_{name}"] = float(mean_curve[near].mean())
        report.metrics[f"far_{name}"] = float(mean_curve[far].mean()) if np.any(far) else None
    for j, offset in enumerate(offsets):
        report.rows.append({"frame": offset, **{name: float(curve[j]) for name, curve in means.items()}})

    end, rand, zero = (PoseCondition.END_POSE.value, PoseCondition.RANDOM_POSE.value,
                       PoseCondition.ZERO_MASK.value)
    if all(f"near_switch_{c}" in report.metrics for c in (end, rand, zero)):
        report.metrics["end_pose_best"] = bool(
            report.metrics[f"near_switch_{end}"] < report.metrics[f"near_switch_{rand}"]
            and report.metrics[f"near_switch_{end}"] < report.metrics[f"near_switch_{zero}"])
    report.label(*[f"near_switch_{c}" for c in curves], *[f"far_{c}" for c in curves])
    logger.info(f"transition study over {len(prompt_pairs)} pairs: "
                + ", ".join(f"{c}={report.metrics[f'near_switch_{c}']:.4f}" for c in curves))
    return report


def _concatenate(stack: DiffusionStack, params_a, params_b, period: int) -> PhaseSignal:
    codec = stack.codec
    a = repeat_phase(params_a, codec.freqs, period, period, codec.representation)
    b = repeat_phase(params_b, codec.freqs, period, period, codec.representation)
    k = np.concatenate([a.k, 1.0 + b.k])
    return PhaseSignal.periodic(np.concatenate([a.samples, b.samples]), k, codec.representation)


# ---------------------------------------------------------------------------
# Guidance sweep
# ---------------------------------------------------------------------------

def guidance_sweep(stack: DiffusionStack, prompts: Sequence[str], reference_clips: Sequence[MotionClip],
                   scales: Sequence[float] = DEFAULT_GUIDANCE, include_control: bool = True,
                   seed: int = 0, sampling_steps: Optional[int] = None,
                   corpus_seed: Optional[int] = None) -> MetricReport:
    """
    One row per guidance scale with a prompt-consistency proxy (embedding
    distance between the prompt and the prompt of the reference clip whose
    motion is nearest to the generated one), the same proxy over shuffled
    prompts as the chance level, and the autoencoder round-trip error.
    """
    references = [c for c in reference_clips if c.text]
    if not prompts or not references:
        raise ValidationError("guidance sweep needs prompts and annotated reference clips")
    encoder = stack.model.text_encoder
    ref_signatures = np.stack([motion_signature(c) for c in references])
    ref_embeddings = np.stack([encode_text(c.text, encoder) for c in references])
    prompt_embeddings = np.stack([encode_text(p, encoder) for p in prompts])
    shuffled = prompt_embeddings[np.random.default_rng(_stream_seed(seed, 99)).permutation(len(prompts))]

    values = ([0.0] if include_control else []) + [float(s) for s in scales if float(s) != 0.0]
    report = MetricReport(StudyKind.GUIDANCE_SWEEP.value,
                          {"scales": values, "prompts": len(prompts), "references": len(references),
                           "sampling_steps": sampling_steps, "period_frames": stack.period_frames},
                          seed, corpus_seed=corpus_seed)
    for s in values:
        consistency, chance, round_trip = [], [], []
        for i, prompt in enumerate(prompts):
            params = stack.sample(prompt, None, SamplerConfig(s, sampling_steps, _stream_seed(seed, i)))
            clip = decode_params(stack, params, stack.period_frames)
            nearest = int(np.argmin(np.linalg.norm(ref_signatures - motion_signature(clip), axis=1)))
            consistency.append(float(np.linalg.norm(prompt_embeddings[i] - ref_embeddings[nearest])))
            chance.append(float(np.linalg.norm(shuffled[i] - ref_embeddings[nearest])))
            round_trip.append(cycle_round_trip(stack.codec, clip, stack.period_frames))
        report.rows.append({"guidance": s, "prompt_consistency": float(np.mean(consistency)),
                            "chance_consistency": float(np.mean(chance)),
                            "round_trip_error": float(np.mean(round_trip))})
        logger.info(f"guidance {s}: {report.rows[-1]}")

    guided = [row for row in report.rows if row["guidance"] > 0] or report.rows
    best = min(guided, key=lambda row: row["round_trip_error"])["guidance"]
    report.metrics.update({"best_guidance": best,
                           "best_in_band": bool(GUIDANCE_BAND[0] <= best <= GUIDANCE_BAND[1])})
    report.label("prompt_consistency", "chance_consistency", "round_trip_error")
    return report


# ---------------------------------------------------------------------------
# Timing profile
# ---------------------------------------------------------------------------

def timing_profile(stack: DiffusionStack, prompt: Optional[str] = None,
                   lengths: Sequence[int] = DEFAULT_LENGTHS, runs: int = 5, warmup: int = 1,
                   seed: int = 0, sampling_steps: Optional[int] = None,
                   corpus_seed: Optional[int] = None) -> MetricReport:
    """
    Median wall time of the sampling stage and of the decode stage per
    repetition-mode length, plus the round-trip quality proxy per length.
    """
    if runs < 5:
        raise ValidationError(f"timing needs >= 5 runs per length, got {runs}")
    report = MetricReport(StudyKind.TIMING.value,
                          {"lengths": list(lengths), "runs": runs, "warmup": warmup, "prompt": prompt,
                           "sampling_steps": sampling_steps, "period_frames": stack.period_frames},
                          seed, corpus_seed=corpus_seed)
    sampler = SamplerConfig(3.0, sampling_steps, seed)
    for length in lengths:
        sample_times, decode_times = [], []
        clip = None
        for run in range(warmup + runs):
            start = time.perf_counter()
            params = stack.sample(prompt, None, sampler)
            sampled = time.perf_counter()
            clip = decode_params(stack, params, length)
            done = time.perf_counter()
            if run >= warmup:
                sample_times.append(sampled - start)
                decode_times.append(done - sampled)
        report.rows.append({"length": int(length), "sample_seconds": float(np.median(sample_times)),
                            "decode_seconds": float(np.median(decode_times)),
                            "quality": cycle_round_trip(stack.codec, clip, stack.period_frames)})
        logger.debug(f"timing length={length}: {report.rows[-1]}")

    frame = report.to_frame()
    report.metrics.update({
        "sample_ratio": float(frame.sample_seconds.max() / frame.sample_seconds.min()),
        "decode_r2": _linear_r2(frame.length.to_numpy(float), frame.decode_seconds.to_numpy(float))
        if len(frame) > 2 else None,
        "quality_change": float(abs(frame.quality.iloc[-1] - frame.quality.iloc[0]) / frame.quality.iloc[0])
        if frame.quality.iloc[0] > 0 else 0.0,
        "run_count": runs,
    })
    report.label("quality", "quality_change")
    logger.info(f"timing profile: {report.metrics}")
    return report
