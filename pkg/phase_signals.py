"""
PhaseGen - Phase signals

Closed-form synthesis of the periodic latent signal. A motion segment is
described by M phases, each an (amplitude a, shift p, offset o) triple
attached to an integer frequency f. The periodic section samples

    sin channel = a·sin(2π(f·k + p)) + o
    cos channel = a·cos(2π(f·k + p)) + o

and the ramps sample the k-scaled linear signal built from the same triple.
Channels are interleaved as [sin_1, cos_1, ..., sin_M, cos_M].
"""

from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from errors import ConfigError, StructuralError, ValidationError
from motion_enums import SegmentTag, SignalRepresentation

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class FrequencySet:
    freqs: Tuple[int, ...]

    def __post_init__(self):
        if len(self.freqs) < 2 or any(int(f) != f or f < 1 for f in self.freqs):
            raise ConfigError(f"frequencies must be at least two integers >= 1, got {self.freqs}")
        if min(self.freqs) != 1:
            raise ConfigError("the lowest frequency must be 1")

    @property
    def num_phases(self) -> int:
        return len(self.freqs)

    @property
    def f_max(self) -> int:
        return max(self.freqs)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.freqs, dtype=np.float64)


def make_frequency_set(num_phases: int, f_max: int) -> FrequencySet:
    """M integer frequencies spread evenly over [1, f_max]; repeats allowed when M > f_max."""
    if num_phases < 2 or f_max < 2:
        raise ConfigError(f"need M >= 2 and f_max >= 2, got M={num_phases}, f_max={f_max}")
    spread = np.rint(np.linspace(1.0, float(f_max), num_phases)).astype(int)
    return FrequencySet(tuple(int(f) for f in spread))


def _wrap_unit(p: np.ndarray) -> np.ndarray:
    p = np.mod(p, 1.0)
    # np.mod maps tiny negatives to exactly 1.0
    return np.where(p >= 1.0, 0.0, p)


@dataclass
class PhaseParams:
    amplitudes: np.ndarray
    shifts: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.float64).reshape(-1)
        self.shifts = _wrap_unit(np.asarray(self.shifts, dtype=np.float64).reshape(-1))
        self.offsets = np.asarray(self.offsets, dtype=np.float64).reshape(-1)
        if not (self.amplitudes.shape == self.shifts.shape == self.offsets.shape):
            raise StructuralError(
                f"phase parameter lengths differ: {self.amplitudes.shape[0]}, "
                f"{self.shifts.shape[0]}, {self.offsets.shape[0]}")
        values = np.concatenate([self.amplitudes, self.shifts, self.offsets])
        if not np.all(np.isfinite(values)):
            raise ValidationError("phase parameters must be finite")
        if np.any(self.amplitudes < 0):
            raise ValidationError("amplitudes must be nonnegative")

    @property
    def num_phases(self) -> int:
        return self.amplitudes.shape[0]

    def to_matrix(self) -> np.ndarray:
        """(M, 3) rows of (a_i, p_i, o_i)."""
        return np.stack([self.amplitudes, self.shifts, self.offsets], axis=-1)

    def to_vector(self) -> np.ndarray:
        """Flattened 3M vector, phase-major: [a_1, p_1, o_1, a_2, ...]."""
        return self.to_matrix().reshape(-1)

    @classmethod
    def canonical(cls, amplitudes, shifts, offsets) -> "PhaseParams":
        """Clamp amplitudes to >= 0 and wrap shifts into [0, 1)."""
        return cls(np.maximum(np.asarray(amplitudes, dtype=np.float64), 0.0), shifts, offsets)

    @classmethod
    def from_vector(cls, vector: np.ndarray) -> "PhaseParams":
        vector = np.asarray(vector, dtype=np.float64).reshape(-1)
        if vector.shape[0] % 3:
            raise StructuralError(f"phase vector length {vector.shape[0]} is not a multiple of 3")
        matrix = vector.reshape(-1, 3)
        return cls.canonical(matrix[:, 0], matrix[:, 1], matrix[:, 2])

    def to_dict(self) -> Dict[str, Any]:
        return {"a": self.amplitudes.tolist(), "p": self.shifts.tolist(), "o": self.offsets.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PhaseParams":
        return cls(data["a"], data["p"], data["o"])


@dataclass
class PhaseSignal:
    """
    Time-domain latent signal with per-frame segment tags and the k value
    each frame was sampled at.
    """
    samples: np.ndarray
    tags: np.ndarray
    k: np.ndarray
    representation: SignalRepresentation = SignalRepresentation.SINCOS

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.tags = np.asarray(self.tags, dtype=np.int64).reshape(-1)
        self.k = np.asarray(self.k, dtype=np.float64).reshape(-1)
        if self.samples.ndim != 2 or self.samples.shape[0] < 1:
            raise StructuralError(f"signal samples must be (T, C) with T >= 1, got {self.samples.shape}")
        if self.tags.shape[0] != self.samples.shape[0] or self.k.shape[0] != self.samples.shape[0]:
            raise StructuralError("segment map length differs from the sample count")
        if not np.all(np.isfinite(self.samples)):
            raise ValidationError("signal samples must be finite")
        if np.any(np.diff(self.tags) < 0):
            raise ValidationError("segment tags must run ramp_in, periodic, ramp_out in order")

    @property
    def num_frames(self) -> int:
        return self.samples.shape[0]

    @property
    def num_channels(self) -> int:
        return self.samples.shape[1]

    def run_lengths(self) -> Tuple[int, int, int]:
        return tuple(int(np.sum(self.tags == tag)) for tag in SegmentTag)

    def slice(self, start: int, stop: int) -> "PhaseSignal":
        """Frames [start, stop) (0-based)."""
        return PhaseSignal(self.samples[start:stop], self.tags[start:stop], self.k[start:stop],
                           self.representation)

    @classmethod
    def periodic(cls, samples: np.ndarray, k: np.ndarray,
                 representation: SignalRepresentation = SignalRepresentation.SINCOS) -> "PhaseSignal":
        samples = np.asarray(samples, dtype=np.float64)
        tags = np.full(samples.shape[0], int(SegmentTag.PERIODIC))
        return cls(samples, tags, k, representation)


def _check_phases(params: PhaseParams, freqs: FrequencySet):
    if params.num_phases != freqs.num_phases:
        raise StructuralError(f"params have {params.num_phases} phases, frequency set has {freqs.num_phases}")


def eval_periodic(params: PhaseParams, freqs: FrequencySet, k) -> np.ndarray:
    """Periodic signal at time control k (scalar -> (2M,), array (T,) -> (T, 2M))."""
    _check_phases(params, freqs)
    k_arr = np.mod(np.asarray(k, dtype=np.float64), 1.0)
    angle = TWO_PI * (k_arr[..., None] * freqs.as_array() + params.shifts)
    out = np.empty(angle.shape[:-1] + (2 * params.num_phases,))
    out[..., 0::2] = params.amplitudes * np.sin(angle) + params.offsets
    out[..., 1::2] = params.amplitudes * np.cos(angle) + params.offsets
    return out


def eval_linear(params: PhaseParams, k) -> np.ndarray:
    """k-scaled linear signal (scalar -> (2M,), array (T,) -> (T, 2M))."""
    k_arr = np.asarray(k, dtype=np.float64)[..., None]
    base = np.empty(2 * params.num_phases)
    base[0::2] = params.amplitudes * np.sin(TWO_PI * params.shifts) + params.offsets
    base[1::2] = params.amplitudes * np.cos(TWO_PI * params.shifts) + params.offsets
    return k_arr * base


def segment_layout(t_s: int, t_e: int, t_total: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-frame (tags, k) for 1-based boundaries; boundary frames belong to the periodic run."""
    return layout_at(np.arange(1, t_total + 1, dtype=np.float64), t_s, t_e, t_total)


def layout_at(t: np.ndarray, t_s: int, t_e: int, t_total: int) -> Tuple[np.ndarray, np.ndarray]:
    """(tags, k) at arbitrary, possibly fractional, 1-based clip times t."""
    if not 1 <= t_s < t_e <= t_total:
        raise ValidationError(f"need 1 <= t_s < t_e <= t_T, got ({t_s}, {t_e}, {t_total})")
    t = np.asarray(t, dtype=np.float64)
    tags = np.full(t.shape[0], int(SegmentTag.PERIODIC))
    k = (t - t_s) / (t_e - t_s)
    ramp_in = t < t_s
    ramp_out = t > t_e
    tags[ramp_in] = int(SegmentTag.RAMP_IN)
    tags[ramp_out] = int(SegmentTag.RAMP_OUT)
    if t_s > 1:
        k[ramp_in] = (t[ramp_in] - 1.0) / (t_s - 1.0)
    if t_e < t_total:
        k[ramp_out] = (t_total - t[ramp_out]) / float(t_total - t_e)
    return tags, k


def select_representation(samples: np.ndarray, representation: SignalRepresentation) -> np.ndarray:
    if representation == SignalRepresentation.SIN:
        return samples[..., 0::2]
    return samples


def assemble_signal(params: PhaseParams, freqs: FrequencySet, t_s: int, t_e: int, t_total: int,
                    representation: SignalRepresentation = SignalRepresentation.SINCOS) -> PhaseSignal:
    """
    Concatenate [ramp_in, periodic, ramp_out] over frames 1..t_T. The periodic
    run spans k 0 -> 1 over [t_s, t_e]; ramps sample the linear signal with k
    rising 0 -> 1 before t_s and falling 1 -> 0 after t_e.
    """
    tags, k = segment_layout(t_s, t_e, t_total)
    samples = np.empty((t_total, 2 * params.num_phases))
    periodic = tags == int(SegmentTag.PERIODIC)
    samples[periodic] = eval_periodic(params, freqs, k[periodic])
    if np.any(~periodic):
        samples[~periodic] = eval_linear(params, k[~periodic])
    return PhaseSignal(select_representation(samples, representation), tags, k, representation)


def fit_params_oracle(signal: np.ndarray, freqs: FrequencySet,
                      k: Optional[np.ndarray] = None) -> PhaseParams:
    """
    Least-squares fit of (a, p, o) per phase to a periodic signal sampled at k
    (default: T uniform points over one period, k = t/T). Accepts sin+cos
    (2M channels) or sin-only (M channels) signals. Amplitudes come out
    nonnegative, so (a, p) is returned in canonical form.
    """
    signal = np.asarray(signal, dtype=np.float64)
    num_frames = signal.shape[0]
    if num_frames < 3:
        raise ValidationError(f"fit needs at least 3 frames, got {num_frames}")
    m = freqs.num_phases
    if signal.shape[1] not in (m, 2 * m):
        raise StructuralError(f"signal has {signal.shape[1]} channels, expected {m} or {2 * m}")
    sin_only = signal.shape[1] == m
    k = np.arange(num_frames) / num_frames if k is None else np.asarray(k, dtype=np.float64)

    amplitudes, shifts, offsets = np.zeros(m), np.zeros(m), np.zeros(m)
    ones = np.ones(num_frames)
    for i, f in enumerate(freqs.freqs):
        theta = TWO_PI * f * k
        s, c = np.sin(theta), np.cos(theta)
        # sin channel = A·sinθ + B·cosθ + o, cos channel = A·cosθ − B·sinθ + o
        # with A = a·cos(2πp), B = a·sin(2πp)
        if sin_only:
            design = np.stack([s, c, ones], axis=-1)
            target = signal[:, i]
        else:
            design = np.concatenate([np.stack([s, c, ones], axis=-1),
                                     np.stack([c, -s, ones], axis=-1)], axis=0)
            target = np.concatenate([signal[:, 2 * i], signal[:, 2 * i + 1]])
        (a_cos, a_sin, offset), *_ = np.linalg.lstsq(design, target, rcond=None)
        amplitude = float(np.hypot(a_cos, a_sin))
        amplitudes[i] = amplitude
        shifts[i] = np.arctan2(a_sin, a_cos) / TWO_PI if amplitude > 1e-12 else 0.0
        offsets[i] = offset
    return PhaseParams(amplitudes, shifts, offsets)


def fit_residual(signal: np.ndarray, params: PhaseParams, freqs: FrequencySet,
                 k: Optional[np.ndarray] = None) -> float:
    """Sum of squared differences between a signal and the periodic signal of params."""
    signal = np.asarray(signal, dtype=np.float64)
    k = np.arange(signal.shape[0]) / signal.shape[0] if k is None else np.asarray(k, dtype=np.float64)
    predicted = eval_periodic(params, freqs, k)
    if signal.shape[1] == params.num_phases:
        predicted = predicted[:, 0::2]
    return float(np.sum((signal - predicted) ** 2))
