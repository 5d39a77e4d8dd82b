"""Experiment configuration: dataclass defaults, a plain-text key=value file
format, and CLI override plumbing (flags always win over file keys)."""

from __future__ import annotations

from dataclasses import dataclass, fields

from .channel import SosConfig

__all__ = ["ExperimentConfig", "load_config_file", "DEFAULT_SCHEMES"]

DEFAULT_SCHEMES = ("PC_FP_KD", "KC_FP_KD", "KC_FP", "PC_FP", "DJSCC", "RANDOM_ORDER")


@dataclass
class ExperimentConfig:
    """Everything a sweep needs. The desk profile (16x16 images) is the
    default; profile = paper switches to 32x32. Both keep R = 1/4."""

    profile: str = "desk"
    dataset: str = "synthetic"            # synthetic | cifar10
    dataset_count: int = 2000
    cifar_train_path: str = ""
    cifar_test_path: str = ""
    test_frac: float = 0.1                # 90/10 split on synthetic data
    data_seed: int = 0

    snr_train_db: float = 19.0
    snr_test_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0)
    codec_epochs: int = 30
    codec_batch: int = 32
    codec_lr: float = 1e-3
    equalizer: str = "mmse"

    channel_paths: int = 16
    channel_doppler_hz: float = 100.0
    channel_sample_period_s: float = 1e-4
    channel_seed: int = 0

    predictor_t1: int = 32
    predictor_hidden: int = 50
    predictor_sequences: int = 60
    predictor_seq_len: int = 600
    predictor_epochs: int = 10
    predictor_stride: int = 2
    predictor_lr: float = 3e-3

    alpha: float = 0.5
    beta: float = 0.5
    budget_rel_scale: float = 0.1
    budget_steps: int = 20

    distill_count: int = 400
    student_epochs: int = 200
    student_lr: float = 3e-3

    schemes: tuple = DEFAULT_SCHEMES
    seed: int = 0
    emit_traces: bool = False

    def __post_init__(self):
        if self.profile not in ("desk", "paper"):
            raise ValueError(f"unknown profile {self.profile!r}")
        if not self.snr_test_db:
            raise ValueError("snr_test_db must be non-empty")
        for s in self.schemes:
            if s not in DEFAULT_SCHEMES:
                raise ValueError(f"unknown scheme {s!r}; valid: {DEFAULT_SCHEMES}")

    @property
    def img_hw(self):
        return (16, 16) if self.profile == "desk" else (32, 32)

    def sos_config(self) -> SosConfig:
        return SosConfig(n_paths=self.channel_paths,
                         doppler_hz=self.channel_doppler_hz,
                         sample_period_s=self.channel_sample_period_s,
                         seed=self.channel_seed)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_sources(cls, config_path=None, overrides: dict | None = None):
        """File keys first, then explicit overrides (CLI flags)."""
        raw = load_config_file(config_path) if config_path else {}
        if overrides:
            raw.update({k: v for k, v in overrides.items() if v is not None})
        kwargs = {}
        by_name = {f.name: f for f in fields(cls)}
        for key, value in raw.items():
            if key not in by_name:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(value, getattr(cls, key))
        return cls(**kwargs)


def _coerce(value, default):
    if not isinstance(value, str):
        return value
    if isinstance(default, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        items = [v.strip() for v in value.split(",") if v.strip()]
        if default and isinstance(default[0], float):
            return tuple(float(v) for v in items)
        return tuple(items)
    return value.strip()


def load_config_file(path) -> dict:
    """Parse `key = value` lines; '#' starts a comment, blanks are skipped."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out
