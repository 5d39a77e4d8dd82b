"""Image sources: a procedural RGB generator for desk-scale work and a
reader for the CIFAR-10 binary batch format."""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = ["gen_synthetic_dataset", "load_cifar10", "CIFAR_RECORD_BYTES"]

CIFAR_RECORD_BYTES = 3073  # 1 label byte + 3 * 32 * 32 pixels


def _one_image(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Gradient base + sinusoidal texture + a few alpha-blended rectangles."""
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    theta = rng.uniform(0, 2 * np.pi)
    proj = (np.cos(theta) * xx + np.sin(theta) * yy)
    span = proj.max() - proj.min()
    t = (proj - proj.min()) / (span if span > 0 else 1.0)

    c0 = rng.uniform(0.1, 0.9, size=3)
    # force a wide ramp in at least one channel so images are never flat
    delta = rng.uniform(0.35, 0.7, size=3) * rng.choice([-1.0, 1.0], size=3)
    c1 = np.clip(c0 + delta, 0.02, 0.98)
    img = c0[:, None, None] + t[None] * (c1 - c0)[:, None, None]

    amp = rng.uniform(0.03, 0.12)
    freq = rng.uniform(0.5, 3.0)
    phase = rng.uniform(0, 2 * np.pi)
    phi = rng.uniform(0, 2 * np.pi)
    proj2 = np.cos(phi) * xx / w + np.sin(phi) * yy / h
    tint = rng.uniform(0.3, 1.0, size=3)
    img += amp * np.sin(2 * np.pi * freq * proj2 + phase)[None] * tint[:, None, None]

    for _ in range(rng.integers(0, 3)):
        rh = rng.integers(h // 5, h // 2 + 1)
        rw = rng.integers(w // 5, w // 2 + 1)
        r0 = rng.integers(0, h - rh + 1)
        cc0 = rng.integers(0, w - rw + 1)
        color = rng.uniform(0.05, 0.95, size=3)
        a = rng.uniform(0.4, 0.9)
        patch = img[:, r0:r0 + rh, cc0:cc0 + rw]
        img[:, r0:r0 + rh, cc0:cc0 + rw] = (1 - a) * patch + a * color[:, None, None]

    return np.clip(img, 0.0, 1.0)


def gen_synthetic_dataset(count: int, img_hw=(16, 16), seed: int = 0) -> np.ndarray:
    """Deterministic (count, 3, H, W) image array with values in [0, 1]."""
    if count < 1:
        raise ValueError("count must be >= 1")
    h, w = img_hw
    out = np.empty((count, 3, h, w))
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0x1962, i)))
        out[i] = _one_image(rng, h, w)
    return out


def load_cifar10(path) -> np.ndarray:
    """Read a CIFAR-10 binary batch: N records of 3073 bytes (label byte,
    then R/G/B planes row-major). Labels are dropped; pixels scale to [0,1]."""
    raw = Path(path).read_bytes()
    if len(raw) == 0 or len(raw) % CIFAR_RECORD_BYTES:
        n_full = len(raw) // CIFAR_RECORD_BYTES
        raise ValueError(
            f"{path}: {len(raw)} bytes is not a whole number of "
            f"{CIFAR_RECORD_BYTES}-byte records (expected {n_full * CIFAR_RECORD_BYTES}"
            f" or {(n_full + 1) * CIFAR_RECORD_BYTES}; stray data begins at byte "
            f"{n_full * CIFAR_RECORD_BYTES})")
    n = len(raw) // CIFAR_RECORD_BYTES
    records = np.frombuffer(raw, dtype=np.uint8).reshape(n, CIFAR_RECORD_BYTES)
    pixels = records[:, 1:].reshape(n, 3, 32, 32)
    return pixels.astype(np.float64) / 255.0
