"""
PhaseGen - Conditional diffusion over phase parameters

DDPM over the flattened 3M parameter vector X = [a_1, p_1, o_1, a_2, ...].
The denoiser predicts the clean sample X̂⁰ directly from the noised vector,
the step index, a text embedding and a conditioning pose. Text and pose are
masked independently during training so that classifier-free guidance can
query the conditional and unconditional branches at sampling time.
"""

import logging
import math
import os
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn
from tqdm import tqdm

from checkpoint import load_module_tensors, load_tensors, module_tensors, read_meta, save_tensors
from errors import CheckpointError, DivergenceError, StructuralError, ValidationError
from motion_core import MotionClip, Pose, clip_to_features, pad_or_trim, pose_condition_vector
from motion_enums import RenoiseMode
from phase_autoencoder import PhaseCodec, TrainingLog, assemble_torch, clip_layout
from phase_signals import PhaseParams, segment_layout
from segmentation import SegmentAnnotation
from text_encoder import EMBED_DIM, TextEncoder, Vocabulary

logger = logging.getLogger("phasegen.diffusion")

CHECKPOINT_KIND = "denoiser"
CODEC_SUBDIR = "codec"


# ---------------------------------------------------------------------------
# Noise schedule and forward process
# ---------------------------------------------------------------------------

@dataclass
class NoiseSchedule:
    betas: np.ndarray

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=np.float64)
        self.alphas = 1.0 - self.betas
        self.alpha_bars = np.cumprod(self.alphas)

    @property
    def num_steps(self) -> int:
        return self.betas.shape[0]

    def alpha_bar(self, n) -> np.ndarray:
        """ᾱ_n for 1-based step(s) n; ᾱ_0 = 1."""
        n = np.asarray(n)
        return np.where(n > 0, self.alpha_bars[np.clip(n, 1, self.num_steps) - 1], 1.0)

    def check_step(self, n):
        n = np.asarray(n)
        if np.any(n < 1) or np.any(n > self.num_steps):
            raise ValidationError(f"diffusion step must lie in [1, {self.num_steps}], got {n.tolist()}")


def make_schedule(num_steps: int, beta_start: float = 1e-4, beta_end: float = 2e-2) -> NoiseSchedule:
    """Linear β schedule, α_n = 1 − β_n."""
    if num_steps < 1:
        raise ValidationError(f"number of diffusion steps must be >= 1, got {num_steps}")
    if not 0 < beta_start <= beta_end < 1:
        raise ValidationError(f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    return NoiseSchedule(np.linspace(beta_start, beta_end, num_steps))


def q_sample(x0, n, eps, schedule: NoiseSchedule):
    """
    Closed-form forward noising √ᾱ_n·x0 + √(1−ᾱ_n)·ε. Works on numpy arrays
    and on torch tensors; n is a step or a per-row vector of steps.
    """
    if tuple(eps.shape) != tuple(x0.shape):
        raise StructuralError(f"noise shape {tuple(eps.shape)} differs from x0 shape {tuple(x0.shape)}")
    n_arr = n.detach().cpu().numpy() if isinstance(n, torch.Tensor) else np.asarray(n)
    schedule.check_step(n_arr)
    alpha_bar = schedule.alpha_bar(n_arr)
    signal_coef = np.sqrt(alpha_bar)
    noise_coef = np.sqrt(1.0 - alpha_bar)
    if isinstance(x0, torch.Tensor):
        signal_coef = torch.as_tensor(signal_coef, dtype=x0.dtype)
        noise_coef = torch.as_tensor(noise_coef, dtype=x0.dtype)
    if np.ndim(n_arr) == 1:
        signal_coef = signal_coef[:, None]
        noise_coef = noise_coef[:, None]
    return signal_coef * x0 + noise_coef * eps


# ---------------------------------------------------------------------------
# Parameter standardization
# ---------------------------------------------------------------------------

@dataclass
class ParamScaler:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, vectors: np.ndarray, eps: float = 1e-8) -> "ParamScaler":
        vectors = np.asarray(vectors, dtype=np.float64)
        std = vectors.std(axis=0)
        return cls(vectors.mean(axis=0), np.where(std < eps, 1.0, std))

    @classmethod
    def identity(cls, dim: int) -> "ParamScaler":
        return cls(np.zeros(dim), np.ones(dim))

    def transform(self, vectors: np.ndarray) -> np.ndarray:
        return (np.asarray(vectors, dtype=np.float64) - self.mean) / self.std

    def inverse(self, vectors: np.ndarray) -> np.ndarray:
        return np.asarray(vectors, dtype=np.float64) * self.std + self.mean

    def inverse_torch(self, vectors: torch.Tensor) -> torch.Tensor:
        return (vectors * torch.as_tensor(self.std, dtype=vectors.dtype)
                + torch.as_tensor(self.mean, dtype=vectors.dtype))

    def to_dict(self) -> Dict[str, List[float]]:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, List[float]]) -> "ParamScaler":
        return cls(np.asarray(data["mean"], dtype=np.float64), np.asarray(data["std"], dtype=np.float64))


# ---------------------------------------------------------------------------
# Denoiser
# ---------------------------------------------------------------------------

def timestep_embedding(steps: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    """Sinusoidal embedding of integer steps, (B,) -> (B, dim)."""
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=torch.float64) / half)
    args = steps.to(torch.float64)[:, None] * freqs[None, :]
    embedding = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    if dim % 2:
        embedding = torch.cat([embedding, torch.zeros_like(embedding[:, :1])], dim=-1)
    return embedding


@dataclass
class DenoiserConfig:
    width: int = 512
    layers: int = 8
    heads: int = 8
    num_steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    mask_text: float = 0.1
    mask_pose: float = 0.1
    lambda_dec: float = 0.5
    epochs: int = 50
    batch_size: int = 64
    lr_start: float = 1e-4
    lr_end: float = 1e-6


class DenoiserModel(nn.Module):
    """
    Transformer encoder over [text, pose, step, phase_1 .. phase_M] tokens.
    Each phase token carries one (a, p, o) triple; the output head maps the
    phase tokens back to X̂⁰.
    """

    NUM_CONDITION_TOKENS = 3

    def __init__(self, vocab: Vocabulary, num_tokens: int, pose_dim: int, token_dim: int = 3,
                 width: int = 512, layers: int = 8, heads: int = 8, text_dim: int = EMBED_DIM):
        super().__init__()
        self.num_tokens = num_tokens
        self.token_dim = token_dim
        self.pose_dim = pose_dim
        self.width = width
        self.text_dim = text_dim
        self.text_encoder = TextEncoder(vocab, text_dim)
        self.text_proj = nn.Linear(text_dim, width)
        self.pose_proj = nn.Linear(pose_dim, width)
        self.null_pose = nn.Parameter(torch.randn(width) * 0.02)
        self.step_mlp = nn.Sequential(nn.Linear(width, width), nn.SiLU(), nn.Linear(width, width))
        self.phase_in = nn.Linear(token_dim, width)
        self.phase_index = nn.Parameter(torch.randn(num_tokens, width) * 0.02)
        layer = nn.TransformerEncoderLayer(d_model=width, nhead=heads, dim_feedforward=2 * width,
                                           dropout=0.0, activation="gelu", batch_first=True)
        self.transformer = nn.TransformerEncoder(layer, num_layers=layers, enable_nested_tensor=False)
        self.out = nn.Linear(width, token_dim)

    @property
    def vector_dim(self) -> int:
        return self.num_tokens * self.token_dim

    def forward(self, x_n: torch.Tensor, n: torch.Tensor, prompts: Sequence[Optional[str]],
                pose: Optional[torch.Tensor] = None, text_mask: Optional[torch.Tensor] = None,
                pose_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        """
        Args:
            x_n: (B, num_tokens * token_dim) noised vectors
            n: (B,) 1-based steps
            prompts: B prompt strings (None/"" -> null text)
            pose: (B, pose_dim) conditioning pose vectors, or None for no pose
            text_mask / pose_mask: (B,) bool, True replaces the condition by its null token
        Returns:
            (B, num_tokens * token_dim) predicted clean vectors
        """
        batch = x_n.shape[0]
        if x_n.shape[1] != self.vector_dim:
            raise StructuralError(f"input vectors have {x_n.shape[1]} entries, model expects {self.vector_dim}")
        dtype = x_n.dtype

        text = self.text_encoder(prompts, text_mask).to(dtype)
        text_tok = self.text_proj(text)

        null_pose = self.null_pose.to(dtype).expand(batch, -1)
        if pose is None:
            pose_tok = null_pose
        else:
            if pose.shape[-1] != self.pose_dim:
                raise StructuralError(f"pose vector has {pose.shape[-1]} entries, model expects {self.pose_dim}")
            pose_tok = self.pose_proj(pose.to(dtype))
            if pose_mask is not None:
                pose_tok = torch.where(pose_mask[:, None], null_pose, pose_tok)

        step_tok = self.step_mlp(timestep_embedding(n, self.width).to(dtype))
        phase_tok = self.phase_in(x_n.reshape(batch, self.num_tokens, self.token_dim)) + self.phase_index

        tokens = torch.cat([text_tok[:, None], pose_tok[:, None], step_tok[:, None], phase_tok], dim=1)
        hidden = self.transformer(tokens)
        return self.out(hidden[:, self.NUM_CONDITION_TOKENS:]).reshape(batch, self.vector_dim)


def _flags(value: bool, batch: int) -> torch.Tensor:
    return torch.full((batch,), value, dtype=torch.bool)


def cfg_predict(model: Callable, x_n: torch.Tensor, n: torch.Tensor, prompts: Sequence[Optional[str]],
                pose: Optional[torch.Tensor], scale: float) -> torch.Tensor:
    """
    Guided prediction T(j, ∅) + s·(T(j, c) − T(∅, ∅)).

    The base term keeps the pose and drops the text; the difference compares
    the fully conditioned and fully unconditioned branches.
    """
    batch = x_n.shape[0]
    keep, drop = _flags(False, batch), _flags(True, batch)
    pose_keep = drop if pose is None else keep
    base = model(x_n, n, prompts, pose, text_mask=drop, pose_mask=pose_keep)
    cond = model(x_n, n, prompts, pose, text_mask=keep, pose_mask=pose_keep)
    uncond = model(x_n, n, prompts, pose, text_mask=drop, pose_mask=drop)
    return base + scale * (cond - uncond)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

@dataclass
class SamplerConfig:
    guidance: float = 3.0
    sampling_steps: Optional[int] = None
    seed: int = 0
    renoise: str = RenoiseMode.POSTERIOR.value

    def __post_init__(self):
        if self.guidance < 0:
            raise ValidationError(f"guidance scale must be >= 0, got {self.guidance}")
        if self.sampling_steps is not None and self.sampling_steps < 1:
            raise ValidationError(f"sampling steps must be >= 1, got {self.sampling_steps}")
        RenoiseMode(self.renoise)


def sampling_schedule(num_steps: int, sampling_steps: Optional[int] = None) -> List[int]:
    """Descending 1-based steps from N to 1; evenly strided when fewer steps are requested."""
    if sampling_steps is None or sampling_steps >= num_steps:
        return list(range(num_steps, 0, -1))
    if sampling_steps == 1:
        return [num_steps]
    steps = np.rint(np.linspace(num_steps, 1, sampling_steps)).astype(int)
    return sorted({int(s) for s in steps}, reverse=True)


def renoise(x_n: torch.Tensor, x0_hat: torch.Tensor, n: int, m: int, schedule: NoiseSchedule,
            mode: RenoiseMode, noise: torch.Tensor) -> torch.Tensor:
    """Move from step n to an earlier step m >= 1 given the predicted clean sample."""
    ab_n = float(schedule.alpha_bar(n))
    ab_m = float(schedule.alpha_bar(m))
    if mode == RenoiseMode.MARGINAL:
        return math.sqrt(ab_m) * x0_hat + math.sqrt(1.0 - ab_m) * noise
    # Gaussian posterior q(x_m | x_n, x0): the ancestral step, generalized to strides
    eps_hat = (x_n - math.sqrt(ab_n) * x0_hat) / math.sqrt(1.0 - ab_n)
    variance = (1.0 - ab_m) / (1.0 - ab_n) * (1.0 - ab_n / ab_m)
    variance = min(max(variance, 0.0), 1.0 - ab_m)
    mean = math.sqrt(ab_m) * x0_hat + math.sqrt(1.0 - ab_m - variance) * eps_hat
    return mean + math.sqrt(variance) * noise


def sample_batch(model: nn.Module, schedule: NoiseSchedule, prompts: Sequence[Optional[str]],
                 poses: Optional[np.ndarray], config: SamplerConfig,
                 scaler: Optional[ParamScaler] = None) -> np.ndarray:
    """
    Run one reverse chain per prompt, all from one seed. Returns raw
    (unscaled, not canonicalized) vectors of shape (B, vector_dim).
    """
    batch = len(prompts)
    generator = torch.Generator().manual_seed(int(config.seed))
    dtype = next(model.parameters()).dtype
    mode = RenoiseMode(config.renoise)
    pose = None if poses is None else torch.as_tensor(np.asarray(poses), dtype=dtype)

    model.eval()
    steps = sampling_schedule(schedule.num_steps, config.sampling_steps)
    with torch.no_grad():
        x = torch.randn(batch, model.vector_dim, generator=generator, dtype=dtype)
        for i, n in enumerate(steps):
            n_vec = torch.full((batch,), n, dtype=torch.long)
            x0_hat = cfg_predict(model, x, n_vec, prompts, pose, config.guidance)
            m = steps[i + 1] if i + 1 < len(steps) else 0
            if m == 0:
                x = x0_hat
                break
            noise = torch.randn(batch, model.vector_dim, generator=generator, dtype=dtype)
            x = renoise(x, x0_hat, n, m, schedule, mode, noise)
    result = x.double().numpy()
    return scaler.inverse(result) if scaler is not None else result


def sample(model: nn.Module, schedule: NoiseSchedule, prompt: Optional[str], pose: Optional[Pose],
           config: SamplerConfig, scaler: Optional[ParamScaler] = None) -> PhaseParams:
    """One reverse chain; the result is canonicalized (a >= 0, p wrapped into [0, 1))."""
    poses = None if pose is None else pose_condition_vector(pose)[None]
    vector = sample_batch(model, schedule, [prompt], poses, config, scaler)[0]
    return PhaseParams.from_vector(vector)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class DenoiserTrainingSet:
    """
    Clean (standardized) vectors with their prompts and, per item, a pool of
    candidate conditioning pose vectors (one is drawn per step).
    """
    x0: np.ndarray
    prompts: List[Optional[str]]
    pose_pools: Optional[List[np.ndarray]] = None

    def __len__(self) -> int:
        return self.x0.shape[0]


class DecodeConsistencyLoss:
    """||D(assemble(X̂⁰)) − J||² through the frozen decoder over each clip's own layout."""

    def __init__(self, codec: PhaseCodec, scaler: ParamScaler, clips: Sequence[MotionClip]):
        self.codec = codec
        self.scaler = scaler
        ks, tags, targets = [], [], []
        for clip in clips:
            t_s, t_e = clip_layout(clip)
            tag, k = segment_layout(t_s, t_e, clip.num_frames)
            ks.append(k)
            tags.append(tag)
            targets.append(clip_to_features(clip))
        self.k = torch.as_tensor(np.stack(ks), dtype=torch.float32)
        self.tags = torch.as_tensor(np.stack(tags), dtype=torch.long)
        self.target = torch.as_tensor(np.stack(targets), dtype=torch.float32)
        self.freqs = torch.as_tensor(codec.freqs.freqs, dtype=torch.float32)
        for param in codec.model.parameters():
            param.requires_grad_(False)

    def __call__(self, x0_hat: torch.Tensor, idx: torch.Tensor) -> torch.Tensor:
        raw = self.scaler.inverse_torch(x0_hat).reshape(x0_hat.shape[0], -1, 3)
        a = F.relu(raw[..., 0])
        p = torch.remainder(raw[..., 1], 1.0)
        o = raw[..., 2]
        signal = assemble_torch(a, p, o, self.freqs.to(x0_hat.dtype), self.k[idx].to(x0_hat.dtype),
                                self.tags[idx], self.codec.model.sin_only)
        predicted = self.codec.model.decoder(signal)
        return torch.mean((predicted - self.target[idx].to(x0_hat.dtype)) ** 2)


def denoiser_loss(model: DenoiserModel, schedule: NoiseSchedule, x0: torch.Tensor, n: torch.Tensor,
                  eps: torch.Tensor, prompts: Sequence[Optional[str]], pose: Optional[torch.Tensor],
                  text_mask: torch.Tensor, pose_mask: torch.Tensor, lambda_dec: float = 0.0,
                  decode_loss: Optional[Callable] = None,
                  idx: Optional[torch.Tensor] = None) -> torch.Tensor:
    """||X⁰ − T(j, c, n, Xⁿ)||² (+ λ_dec · decode consistency)."""
    x_n = q_sample(x0, n, eps, schedule)
    x0_hat = model(x_n, n, prompts, pose, text_mask=text_mask, pose_mask=pose_mask)
    loss = torch.mean((x0 - x0_hat) ** 2)
    if lambda_dec and decode_loss is not None:
        loss = loss + lambda_dec * decode_loss(x0_hat, idx)
    return loss


def fit_denoiser(model: DenoiserModel, schedule: NoiseSchedule, data: DenoiserTrainingSet,
                 config: DenoiserConfig, seed: int, decode_loss: Optional[DecodeConsistencyLoss] = None,
                 on_epoch: Optional[Callable[[int, float, float], None]] = None,
                 progress: bool = False) -> TrainingLog:
    """
    Adam on the x0-prediction objective with independent text/pose masking;
    the learning rate decays exponentially from lr_start to lr_end over the run.
    """
    if len(data) == 0:
        raise ValidationError("no training vectors")
    rng = np.random.default_rng(seed)
    generator = torch.Generator().manual_seed(int(seed))
    params = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(params, lr=config.lr_start)
    gamma = (config.lr_end / config.lr_start) ** (1.0 / max(1, config.epochs - 1))
    scheduler = torch.optim.lr_scheduler.ExponentialLR(optimizer, gamma=gamma)
    dtype = next(model.parameters()).dtype
    x0_all = torch.as_tensor(data.x0, dtype=dtype)
    batch_size = min(config.batch_size, len(data))
    log = TrainingLog()
    last_finite = None

    model.train()
    for epoch in tqdm(range(config.epochs), desc="train-diff", disable=not progress):
        order = rng.permutation(len(data))
        epoch_losses = []
        for b, start in enumerate(range(0, len(order), batch_size)):
            rows = order[start:start + batch_size]
            size = len(rows)
            idx = torch.as_tensor(rows)
            prompts = [data.prompts[i] for i in rows]
            if data.pose_pools is not None:
                picks = [data.pose_pools[i][rng.integers(len(data.pose_pools[i]))] for i in rows]
                pose = torch.as_tensor(np.stack(picks), dtype=dtype)
            else:
                pose = None
            n = torch.as_tensor(rng.integers(1, schedule.num_steps + 1, size=size), dtype=torch.long)
            text_mask = torch.as_tensor(rng.random(size) < config.mask_text)
            pose_mask = torch.as_tensor(rng.random(size) < config.mask_pose)
            eps = torch.randn(size, model.vector_dim, generator=generator, dtype=dtype)

            optimizer.zero_grad()
            loss = denoiser_loss(model, schedule, x0_all[idx], n, eps, prompts, pose, text_mask, pose_mask,
                                 config.lambda_dec, decode_loss, idx)
            if not torch.isfinite(loss):
                raise DivergenceError("denoiser loss is not finite", epoch=epoch, batch=b,
                                      last_finite_loss=last_finite)
            loss.backward()
            optimizer.step()
            last_finite = float(loss.item())
            epoch_losses.append(last_finite)
        lr = optimizer.param_groups[0]["lr"]
        log.losses.append(float(np.mean(epoch_losses)))
        log.learning_rates.append(lr)
        logger.debug(f"train-diff epoch {epoch}: loss={log.losses[-1]:.6f} lr={lr:.2e}")
        if on_epoch is not None:
            on_epoch(epoch, log.losses[-1], lr)
        scheduler.step()
    model.eval()
    return log


# ---------------------------------------------------------------------------
# Model stack
# ---------------------------------------------------------------------------

class DiffusionStack:
    """Frozen codec + trained denoiser + schedule + scaler, with a count of sampler calls."""

    def __init__(self, codec: PhaseCodec, model: DenoiserModel, schedule: NoiseSchedule,
                 scaler: ParamScaler, config: DenoiserConfig, period_frames: int, fps: float = 12.5,
                 root_height: float = 0.0):
        self.codec = codec
        self.model = model
        self.schedule = schedule
        self.scaler = scaler
        self.config = config
        self.period_frames = int(period_frames)
        self.fps = float(fps)
        self.root_height = float(root_height)
        self.run_log: List[Dict[str, Any]] = []

    @property
    def diffusion_calls(self) -> int:
        return len(self.run_log)

    def sample(self, prompt: Optional[str], pose: Optional[Pose], sampler: SamplerConfig) -> PhaseParams:
        self.run_log.append({"prompt": prompt, "pose": pose is not None, "seed": sampler.seed,
                             "guidance": sampler.guidance})
        return sample(self.model, self.schedule, prompt, pose, sampler, self.scaler)

    def save(self, path: str, extra_meta: Optional[Dict] = None) -> str:
        meta = {
            "kind": CHECKPOINT_KIND,
            "config": asdict(self.config),
            "vocab": self.model.text_encoder.vocab.to_list(),
            "num_tokens": self.model.num_tokens,
            "token_dim": self.model.token_dim,
            "pose_dim": self.model.pose_dim,
            "text_dim": self.model.text_dim,
            "scaler": self.scaler.to_dict(),
            "period_frames": self.period_frames,
            "fps": self.fps,
            "root_height": self.root_height,
        }
        meta.update(extra_meta or {})
        save_tensors(path, module_tensors(self.model), meta)
        self.codec.save(os.path.join(path, CODEC_SUBDIR))
        return path

    @classmethod
    def load(cls, path: str) -> "DiffusionStack":
        meta = read_meta(path)
        if meta.get("kind") != CHECKPOINT_KIND:
            raise CheckpointError(f"{path} is not a denoiser checkpoint (kind={meta.get('kind')})")
        tensors, meta = load_tensors(path)
        config = DenoiserConfig(**meta["config"])
        model = DenoiserModel(Vocabulary(meta["vocab"]), meta["num_tokens"], meta["pose_dim"],
                              meta["token_dim"], config.width, config.layers, config.heads,
                              meta.get("text_dim", EMBED_DIM))
        load_module_tensors(model, tensors)
        model.eval()
        codec = PhaseCodec.load(os.path.join(path, CODEC_SUBDIR))
        schedule = make_schedule(config.num_steps, config.beta_start, config.beta_end)
        return cls(codec, model, schedule, ParamScaler.from_dict(meta["scaler"]), config,
                   meta["period_frames"], meta.get("fps", 12.5), meta.get("root_height", 0.0))


def median_period(clips: Sequence[MotionClip]) -> int:
    lengths = [clip.t_e - clip.t_s for clip in clips if clip.has_annotation]
    return int(np.median(lengths)) if lengths else clips[0].num_frames - 1


def train_denoiser(clips: Sequence[MotionClip], pools: Sequence[Sequence[SegmentAnnotation]],
                   codec: PhaseCodec, config: DenoiserConfig, seed: int,
                   on_epoch: Optional[Callable[[int, float, float], None]] = None,
                   progress: bool = False) -> Tuple[DiffusionStack, TrainingLog]:
    """
    X⁰ per clip comes from the frozen encoder on the clip's primary segment;
    each training step conditions on the pose at the t_s of a randomly drawn
    pool entry.
    """
    if len(clips) != len(pools):
        raise ValidationError(f"{len(clips)} clips but {len(pools)} augmentation pools")
    clips = [pad_or_trim(clip, codec.config.clip_len) for clip in clips]
    codec.model.eval()
    x0_raw = np.stack([codec.encode(clip.segment(*clip_layout(clip))).to_vector() for clip in clips])
    scaler = ParamScaler.fit(x0_raw)

    pose_pools = []
    for clip, pool in zip(clips, pools):
        starts = [a.t_s for a in pool if a.t_s <= clip.num_frames] or [clip_layout(clip)[0]]
        pose_pools.append(np.stack([pose_condition_vector(clip.pose(t - 1)) for t in starts]))
    data = DenoiserTrainingSet(scaler.transform(x0_raw), [clip.text for clip in clips], pose_pools)

    torch.manual_seed(seed)
    vocab = Vocabulary.build(clip.text for clip in clips if clip.text)
    model = DenoiserModel(vocab, codec.freqs.num_phases, codec.pose_dim, 3,
                          config.width, config.layers, config.heads)
    schedule = make_schedule(config.num_steps, config.beta_start, config.beta_end)
    decode_loss = DecodeConsistencyLoss(codec, scaler, clips) if config.lambda_dec else None
    log = fit_denoiser(model, schedule, data, config, seed, decode_loss, on_epoch, progress)
    root_height = float(np.median([clip.root_positions[clip_layout(clip)[0] - 1, 1] for clip in clips]))
    stack = DiffusionStack(codec, model, schedule, scaler, config, median_period(clips), clips[0].fps,
                           root_height)
    logger.info(f"Denoiser trained on {len(clips)} clips: loss {log.initial_loss:.5f} -> {log.final_loss:.5f}")
    return stack, log
