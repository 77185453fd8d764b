"""
PhaseGen - Checkpoint container

A checkpoint is a directory holding one NumPy .npy file per weight tensor
(little-endian float32, the .npy header records dtype and shape) and a
meta.json describing the model: kind, configuration, tensor shapes and the
code version that wrote it.
"""

import hashlib
import json
import logging
import os
import subprocess
from typing import Any, Dict, Optional, Tuple

import numpy as np
import torch
from torch import nn

from errors import CheckpointError, ExportError

META_NAME = "meta.json"
TENSOR_DTYPE = "<f4"
FORMAT_VERSION = 1
PACKAGE_VERSION = "0.1.0"

logger = logging.getLogger("phasegen.checkpoint")


def code_version() -> str:
    """`git describe` of the source tree, or the package version outside a checkout."""
    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=os.path.dirname(os.path.abspath(__file__)),
            capture_output=True, text=True, timeout=5)
        if result.returncode == 0 and result.stdout.strip():
            return result.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return PACKAGE_VERSION


def _tensor_file(name: str) -> str:
    return name.replace("/", "__") + ".npy"


def save_tensors(path: str, tensors: Dict[str, np.ndarray], meta: Dict[str, Any]) -> str:
    try:
        os.makedirs(path, exist_ok=True)
        shapes = {}
        for name in sorted(tensors):
            array = np.ascontiguousarray(np.asarray(tensors[name]), dtype=TENSOR_DTYPE)
            np.save(os.path.join(path, _tensor_file(name)), array, allow_pickle=False)
            shapes[name] = list(array.shape)
        full_meta = dict(meta)
        full_meta.update({
            "format_version": FORMAT_VERSION,
            "dtype": TENSOR_DTYPE,
            "tensors": shapes,
            "code_version": meta.get("code_version") or code_version(),
        })
        with open(os.path.join(path, META_NAME), "w") as f:
            json.dump(full_meta, f, indent=2, sort_keys=True)
    except OSError as e:
        raise ExportError(f"cannot write checkpoint {path}: {e}") from e
    logger.info(f"Saved checkpoint {path} ({len(tensors)} tensors)")
    return path


def read_meta(path: str) -> Dict[str, Any]:
    meta_path = os.path.join(path, META_NAME)
    if not os.path.isfile(meta_path):
        raise CheckpointError(f"no {META_NAME} in checkpoint {path}")
    try:
        with open(meta_path, "r") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"unreadable {meta_path}: {e}") from e


def load_tensors(path: str) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    meta = read_meta(path)
    tensors = {}
    for name, shape in meta.get("tensors", {}).items():
        file_path = os.path.join(path, _tensor_file(name))
        try:
            array = np.load(file_path, allow_pickle=False)
        except (OSError, ValueError) as e:
            raise CheckpointError(f"cannot read tensor '{name}' from {file_path}: {e}") from e
        if list(array.shape) != list(shape):
            raise CheckpointError(f"tensor '{name}' has shape {list(array.shape)}, meta.json says {shape}")
        tensors[name] = array
    return tensors, meta


def module_tensors(module: nn.Module, prefix: str = "") -> Dict[str, np.ndarray]:
    return {f"{prefix}{name}": value.detach().cpu().numpy()
            for name, value in module.state_dict().items()}


def load_module_tensors(module: nn.Module, tensors: Dict[str, np.ndarray], prefix: str = ""):
    state = {}
    for name, current in module.state_dict().items():
        key = f"{prefix}{name}"
        if key not in tensors:
            raise CheckpointError(f"checkpoint is missing tensor '{key}'")
        if tuple(tensors[key].shape) != tuple(current.shape):
            raise CheckpointError(
                f"tensor '{key}' has shape {tuple(tensors[key].shape)}, model expects {tuple(current.shape)}")
        state[name] = torch.as_tensor(tensors[key], dtype=current.dtype)
    module.load_state_dict(state)


def checkpoint_digest(path: str) -> Optional[str]:
    """SHA-256 over meta.json and every tensor file, in sorted order."""
    if not os.path.isdir(path):
        return None
    digest = hashlib.sha256()
    for root, _, files in sorted(os.walk(path)):
        for name in sorted(files):
            if not (name.endswith(".npy") or name == META_NAME):
                continue
            digest.update(os.path.relpath(os.path.join(root, name), path).encode())
            with open(os.path.join(root, name), "rb") as f:
                digest.update(f.read())
    return digest.hexdigest()
