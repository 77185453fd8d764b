"""
PhaseGen - Run configuration

Resolution order: dataclass defaults -> JSON config file -> command-line
flags. The file mirrors the flag names, nested by section:

    {"seed": 7,
     "codec": {"num_phases": 64, "epochs": 10},
     "composer": {"seam_window": 8}}

All randomness flows from the root seed through named sub-streams.
"""

import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import torch

from checkpoint import checkpoint_digest, code_version
from composer import ComposerConfig
from diffusion import DenoiserConfig
from errors import ConfigError, ExportError
from phase_autoencoder import AutoencoderConfig
from segmentation import SegmentationWeights
from synthetic_corpus import CorpusConfig

ENV_CACHE = "PHASEGEN_CACHE"
ENV_THREADS = "PHASEGEN_THREADS"
RUN_CONFIG_NAME = "run_config.json"
SEED_STREAMS = ("corpus", "ae-init", "diff-init", "sampler", "eval")

logger = logging.getLogger("phasegen.config")

CorpusSettings = CorpusConfig
CodecSettings = AutoencoderConfig
DiffusionSettings = DenoiserConfig


@dataclass
class SegmentationSettings:
    lambda1: float = 1.0
    lambda2: float = 0.5
    lambda3: float = 0.5
    min_len: int = 20
    window: int = 5
    top_w: int = 5
    workers: int = 1

    def weights(self) -> SegmentationWeights:
        return SegmentationWeights(self.lambda1, self.lambda2, self.lambda3, self.min_len)


@dataclass
class ComposerSettings:
    period_frames: Optional[int] = None
    seam_window: int = 8
    blend_window: int = 20
    guidance: float = 3.0
    sampling_steps: Optional[int] = None
    renoise: str = "posterior"

    def to_config(self, seed: int) -> ComposerConfig:
        return ComposerConfig(self.period_frames, self.seam_window, self.blend_window, self.guidance,
                              self.sampling_steps, self.renoise, seed)


@dataclass
class EvalSettings:
    prompt_pairs: int = 32
    guidance_scales: List[float] = field(default_factory=lambda: [1.5, 2.5, 3.5, 4.5, 5.5])
    lengths: List[int] = field(default_factory=lambda: [196, 392, 588, 784, 980])
    timing_runs: int = 5
    warmup: int = 1
    half_window: Optional[int] = None
    sampling_steps: Optional[int] = None


SECTIONS = {
    "corpus": CorpusSettings,
    "segmentation": SegmentationSettings,
    "codec": CodecSettings,
    "diffusion": DiffusionSettings,
    "composer": ComposerSettings,
    "eval": EvalSettings,
}


def derive_seed(root_seed: int, stream: str) -> int:
    """Independent 32-bit seed for a named stream of the root seed."""
    if stream not in SEED_STREAMS:
        raise ConfigError(f"unknown seed stream '{stream}' (known: {', '.join(SEED_STREAMS)})")
    sequence = np.random.SeedSequence(int(root_seed), spawn_key=(SEED_STREAMS.index(stream),))
    return int(sequence.generate_state(1)[0])


@dataclass
class RunConfig:
    corpus: CorpusSettings = field(default_factory=CorpusSettings)
    segmentation: SegmentationSettings = field(default_factory=SegmentationSettings)
    codec: CodecSettings = field(default_factory=CodecSettings)
    diffusion: DiffusionSettings = field(default_factory=DiffusionSettings)
    composer: ComposerSettings = field(default_factory=ComposerSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)
    seed: int = 0
    seed_streams: Dict[str, int] = field(default_factory=dict)
    paths: Dict[str, str] = field(default_factory=dict)

    def seed_for(self, stream: str) -> int:
        if stream in self.seed_streams:
            return int(self.seed_streams[stream])
        return derive_seed(self.seed, stream)

    def derived_seeds(self) -> Dict[str, int]:
        return {stream: self.seed_for(stream) for stream in SEED_STREAMS}

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        config = cls()
        merge_into(config, data)
        return config


def _normalize_key(key: str) -> str:
    return key.replace("-", "_")


def _coerce(default: Any, value: Any) -> Any:
    if isinstance(default, tuple) and isinstance(value, list):
        return tuple(value)
    return value


def _merge_section(section: Any, values: Dict[str, Any], name: str):
    if not isinstance(values, dict):
        raise ConfigError(f"config section '{name}' must be an object")
    known = {f.name for f in dataclasses.fields(section)}
    for key, value in values.items():
        attr = _normalize_key(key)
        if attr not in known:
            raise ConfigError(f"unknown config key '{name}.{key}'")
        setattr(section, attr, _coerce(getattr(section, attr), value))


def merge_into(config: RunConfig, data: Dict[str, Any]):
    """Apply a nested dict onto config in place; unknown keys raise ConfigError."""
    for key, value in data.items():
        attr = _normalize_key(key)
        if attr in SECTIONS:
            _merge_section(getattr(config, attr), value, attr)
        elif attr == "seed":
            config.seed = int(value)
        elif attr == "seed_streams":
            for stream, seed in dict(value).items():
                if stream not in SEED_STREAMS:
                    raise ConfigError(f"unknown seed stream '{stream}'")
                config.seed_streams[stream] = int(seed)
        elif attr == "paths":
            config.paths.update({str(k): str(v) for k, v in dict(value).items()})
        else:
            raise ConfigError(f"unknown config key '{key}'")


def load_config_file(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in config file {path} (line {e.lineno}): {e.msg}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def resolve_config(config_path: Optional[str] = None,
                   overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """defaults -> file -> flags; `overrides` holds only the flags actually given."""
    config = RunConfig()
    if config_path:
        merge_into(config, load_config_file(config_path))
    if overrides:
        merge_into(config, overrides)
    return config


def cache_dir() -> Optional[str]:
    return os.environ.get(ENV_CACHE) or None


def resolve_output(path: str) -> str:
    """Relative eval outputs land under PHASEGEN_CACHE when it is set."""
    root = cache_dir()
    if root and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


def apply_thread_cap() -> Optional[int]:
    value = os.environ.get(ENV_THREADS)
    if not value:
        return None
    try:
        threads = int(value)
    except ValueError:
        raise ConfigError(f"{ENV_THREADS} must be an integer, got '{value}'")
    if threads < 1:
        raise ConfigError(f"{ENV_THREADS} must be >= 1, got {threads}")
    torch.set_num_threads(threads)
    return threads


def write_run_config(config: RunConfig, out_dir: str, command: str,
                     checkpoints: Sequence[str] = ()) -> str:
    """Resolved config, seeds, input checkpoint digests and code version next to the outputs."""
    document = {
        "command": command,
        "config": config.to_dict(),
        "seed": config.seed,
        "derived_seeds": config.derived_seeds(),
        "checkpoints": {path: checkpoint_digest(path) for path in checkpoints},
        "code_version": code_version(),
    }
    path = os.path.join(out_dir, RUN_CONFIG_NAME)
    try:
        os.makedirs(out_dir, exist_ok=True)
        with open(path, "w") as f:
            json.dump(document, f, indent=2, sort_keys=True)
    except OSError as e:
        raise ExportError(f"cannot write {path}: {e}") from e
    logger.debug(f"Wrote {path}")
    return path
