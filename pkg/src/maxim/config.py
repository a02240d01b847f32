"""Training configuration and its ``key = value`` text format.

Blank lines and ``#`` comments are ignored. ``profile = tiny`` selects the
desk-scale defaults, and any later key overrides them. Unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, replace

from .data import DEGRADATIONS, AugmentConfig
from .multistage import ModelConfig, preset


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    arch: str = "maxim-1s"
    patch: int = 256
    batch: int = 8
    steps: int = 1000
    lr_init: float = 2e-4
    lr_final: float = 1e-7
    seed: int = 0
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    # data: a directory of input/ + target/ pairs, a directory of clean images, or procedural images
    pairs_dir: str | None = None
    clean_dir: str | None = None
    synthetic_images: int = 24
    synthetic_size: int = 96
    degradation: str = "gaussian_noise"
    sigma: float = 25.0
    blur_size: int = 5
    motion_length: int = 9
    out_dir: str = "run"
    ckpt_every: int = 0
    log_every: int = 1
    prefetch: int = 2

    def __post_init__(self):
        if self.lr_final > self.lr_init:
            raise ConfigError("lr_final must not exceed lr_init")
        if self.steps < 1 or self.batch < 1:
            raise ConfigError("steps and batch must be positive")
        div = self.model.divisor
        if self.patch < 1 or self.patch % div:
            raise ConfigError(f"patch {self.patch} must be a positive multiple of {div} for this model")
        if self.degradation not in DEGRADATIONS:
            raise ConfigError(f"unknown degradation {self.degradation!r}; expected one of {DEGRADATIONS}")
        if not 0.0 <= self.augment.mixup_p <= 1.0 or self.augment.mixup_alpha <= 0:
            raise ConfigError("mixup_p must be in [0, 1] and mixup_alpha positive")

    @property
    def degradation_params(self) -> dict:
        return {"sigma": self.sigma, "size": self.blur_size, "length": self.motion_length}


PROFILES = {
    "tiny": {"arch": "tiny", "patch": 64, "batch": 8},
    "default": {},
}

_MODEL_KEYS = {"arch", "mixer", "stages", "freq_weight", "loss"}
_AUGMENT_KEYS = {f.name for f in dataclasses.fields(AugmentConfig)}


def _coerce(key: str, text: str, kind):
    try:
        if kind is bool:
            low = text.lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError
            return low in ("1", "true", "yes", "on")
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind.__name__}") from None
    return text


_TYPES = {
    "patch": int,
    "batch": int,
    "steps": int,
    "lr_init": float,
    "lr_final": float,
    "seed": int,
    "synthetic_images": int,
    "synthetic_size": int,
    "sigma": float,
    "blur_size": int,
    "motion_length": int,
    "ckpt_every": int,
    "log_every": int,
    "prefetch": int,
    "hflip": bool,
    "vflip": bool,
    "rot90": bool,
    "mixup_p": float,
    "mixup_alpha": float,
    "stages": int,
    "freq_weight": float,
}
_STRINGS = {"arch", "mixer", "loss", "pairs_dir", "clean_dir", "degradation", "out_dir"}


def parse_pairs(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def build(values: dict[str, str]) -> TrainConfig:
    """TrainConfig from parsed ``key -> text`` pairs."""
    values = dict(values)
    profile = values.pop("profile", "default")
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; expected one of {sorted(PROFILES)}")
    merged = {k: str(v) for k, v in PROFILES[profile].items()} | values
    unknown = sorted(set(merged) - set(_TYPES) - _STRINGS)
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")
    typed = {k: _coerce(k, v, _TYPES.get(k, str)) for k, v in merged.items()}

    arch = typed.pop("arch", "maxim-1s")
    try:
        model = preset(arch, typed.pop("mixer", "gmlp"))
        model_kw = {k: typed.pop(k) for k in list(typed) if k in _MODEL_KEYS}
        model = replace(model, **model_kw)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    augment = AugmentConfig(**{k: typed.pop(k) for k in list(typed) if k in _AUGMENT_KEYS})
    return TrainConfig(model=model, arch=arch, augment=augment, **typed)


def parse(text: str) -> TrainConfig:
    return build(parse_pairs(text))


def load(path: str | os.PathLike) -> TrainConfig:
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    return parse(text)
