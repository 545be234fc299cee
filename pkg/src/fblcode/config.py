"""Experiment configuration files.

A config is a JSON object with the sections below. Every key is optional
and falls back to the default shown; unknown keys are rejected.

    {
      "seed": 0,
      "model":  {"n": 128, "rate": "1", "rcod": "1/2", "kmod": 2,
                 "M1": 200, "M2": 100, "kernel": 5},
      "train":  {"lr": 0.001, "batch_size": 500, "epochs": 100,
                 "train_frames": 1000000, "snr_db": 10.0, "snr_offset_db": 0.0},
      "eval":   {"frames": 1000000, "snr_db": null},
      "sweep":  {"schemes": ["cnn_ae", "polar_qam", "rm_qam"],
                 "snr_db": [0, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20],
                 "epsilon": 0.01, "frames": 1000000},
      "output": {"dir": "runs/default"}
    }

Rates may be written as fractions in strings ("2/3"). ``eval.snr_db: null``
means "evaluate at the training SNR".
"""

import copy
import hashlib
import json
from pathlib import Path

DEFAULTS = {
    "seed": 0,
    "model": {"n": 128, "rate": "1", "rcod": "1/2", "kmod": 2, "M1": 200, "M2": 100, "kernel": 5},
    "train": {"lr": 0.001, "batch_size": 500, "epochs": 100, "train_frames": 1_000_000,
              "snr_db": 10.0, "snr_offset_db": 0.0},
    "eval": {"frames": 1_000_000, "snr_db": None},
    "sweep": {"schemes": ["cnn_ae", "polar_qam", "rm_qam"],
              "snr_db": [0, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20],
              "epsilon": 0.01, "frames": 1_000_000},
    "output": {"dir": "runs/default"},
}


class ConfigFileError(ValueError):
    pass


def _merge(defaults, given, path=""):
    if not isinstance(given, dict):
        raise ConfigFileError(f"{path or 'config'} must be an object")
    unknown = set(given) - set(defaults)
    if unknown:
        where = f" in [{path}]" if path else ""
        raise ConfigFileError(f"unknown key(s){where}: {', '.join(sorted(unknown))}")
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if isinstance(defaults[key], dict):
            out[key] = _merge(defaults[key], value, f"{path}.{key}" if path else key)
        else:
            out[key] = value
    return out


def resolve(raw: dict) -> dict:
    """Defaults filled in, unknown keys rejected."""
    return _merge(DEFAULTS, raw)


def load(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigFileError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigFileError(f"{path}: invalid JSON ({exc})") from exc
    return resolve(raw)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
