"""Experiment orchestration: scheme matrix, paired channel traces, the
end-to-end per-image pipeline, and the SNR sweep with aggregation.

Every scheme evaluated on a given (image, SNR) cell sees the identical
fading realization and noise draw, so PSNR differences are attributable to
the transmission order alone. Schemes prefixed PC_ work from forecast CSI
produced by the rolling predictor; KC_ schemes read the true future slots;
the _KD variants score features with the distilled students instead of the
teacher algorithms.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .arrange import arrange, inverse_arrange
from .channel import (ChannelRealization, SosConfig, draw_noise,
                      apply_channel, equalize, noise_sigma_from_snr)
from .codec import Codec, from_symbols, psnr, to_symbols
from .config import ExperimentConfig
from .datasets import gen_synthetic_dataset, load_cifar10
from .distill import Student, student_infer
from .predictor import HistoryWindow, Predictor, rolling_forecast
from .priority import NoiseBudget, teacher_priority

__all__ = [
    "SCHEMES",
    "ChannelTrace",
    "EvalRecord",
    "make_channel_trace",
    "run_pipeline",
    "prepare_dataset",
    "run_eval_sweep",
    "eta_overhead_bits",
]

SCHEMES = ("PC_FP_KD", "KC_FP_KD", "KC_FP", "PC_FP", "DJSCC", "RANDOM_ORDER")


@dataclass
class ChannelTrace:
    """One image's channel context: t1 history samples, the c true slot
    coefficients that will carry the features, and a unit-variance noise
    draw shared by every scheme."""
    image_id: int
    history: np.ndarray
    slots: np.ndarray
    unit_noise: np.ndarray
    perm_seed: int


@dataclass
class EvalRecord:
    image_id: int
    scheme: str
    snr_db: float
    psnr_db: float
    slot_amplitudes: list
    eta: list
    predictor_nmse: float | None = None
    timings: dict = field(default_factory=dict)


def make_channel_trace(config: SosConfig, image_id: int, seed: int,
                       t1: int, n_slots: int, n_symbols: int) -> ChannelTrace:
    """History occupies absolute samples 0..t1-1; transmission slots follow."""
    real = ChannelRealization(config, (seed, 0x7ACE, image_id))
    history = real.sample(0, t1)
    slots = real.sample(t1, n_slots)
    noise_rng = np.random.default_rng(np.random.SeedSequence((seed, 0x401E, image_id)))
    unit_noise = draw_noise(noise_rng, n_symbols, 1.0)
    return ChannelTrace(image_id, history, slots, unit_noise,
                        perm_seed=int(seed * 1_000_003 + image_id))


def _scheme_priority(scheme, codec, image, features, students, budget,
                     alpha, beta, seed, cache):
    if scheme.endswith("_KD"):
        key = "student_xi"
        if key not in cache:
            wnet, rnet = students
            cache[key] = student_infer(wnet, rnet, features, alpha, beta)
        return cache[key]
    key = "teacher_xi"
    if key not in cache:
        out = teacher_priority(codec, image, budget, alpha, beta, seed=seed)
        cache[key] = out["priority"]
    return cache[key]


def _scheme_csi(scheme, trace: ChannelTrace, predictor, n_slots, cache):
    if scheme.startswith("KC_"):
        return trace.slots, None
    if "forecast" not in cache:
        window = HistoryWindow(trace.history, end_index=len(trace.history) - 1)
        fc = rolling_forecast(window, n_slots, predictor)
        nmse = float(np.mean(np.abs(fc - trace.slots) ** 2)
                     / np.mean(np.abs(trace.slots) ** 2))
        cache["forecast"] = (fc, nmse)
    return cache["forecast"]


def run_pipeline(image, scheme: str, codec: Codec, predictor, students,
                 trace: ChannelTrace, snr_db: float, alpha: float = 0.5,
                 beta: float = 0.5, budget: NoiseBudget | None = None,
                 equalizer: str = "mmse", seed: int = 0,
                 cache: dict | None = None) -> EvalRecord:
    """Transmit one image under one scheme over the trace's channel."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    needs_priority = scheme not in ("DJSCC", "RANDOM_ORDER")
    if scheme.startswith("PC_") and predictor is None:
        raise ValueError(f"scheme {scheme} needs a trained channel predictor")
    if scheme.endswith("_KD") and (students is None or None in students):
        raise ValueError(f"scheme {scheme} needs trained student scorers")
    if budget is None:
        budget = NoiseBudget()
    if cache is None:
        cache = {}
    timings = {}

    if "features" not in cache:
        cache["features"] = codec.encode(np.asarray(image, dtype=np.float64))
    features = cache["features"]
    c = features.shape[0]

    predictor_nmse = None
    if needs_priority:
        t0 = time.perf_counter()
        xi = _scheme_priority(scheme, codec, image, features, students,
                              budget, alpha, beta, seed, cache)
        timings["priority_s"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        csi, predictor_nmse = _scheme_csi(scheme, trace, predictor, c, cache)
        timings["csi_s"] = time.perf_counter() - t0
        arranged, eta = arrange(features, xi, csi)
    elif scheme == "RANDOM_ORDER":
        rng = np.random.default_rng(np.random.SeedSequence((trace.perm_seed, 0xBE7)))
        eta = rng.permutation(c)
        arranged = features[eta]
    else:  # DJSCC: natural order
        eta = np.arange(c)
        arranged = features

    sigma = noise_sigma_from_snr(snr_db)
    sv = to_symbols(arranged)
    received = apply_channel(sv, trace.slots, sigma,
                             noise=sigma * trace.unit_noise)
    equalized = equalize(received, trace.slots, sigma, method=equalizer)
    arranged_hat = from_symbols(equalized.symbols, features.shape, sv.scale)
    features_hat = inverse_arrange(arranged_hat, eta)
    recon = codec.decode(features_hat)
    value = psnr(image, recon)

    return EvalRecord(
        image_id=trace.image_id,
        scheme=scheme,
        snr_db=float(snr_db),
        psnr_db=value,
        slot_amplitudes=np.abs(trace.slots).round(6).tolist(),
        eta=[int(j) for j in eta],
        predictor_nmse=predictor_nmse,
        timings=timings,
    )


def eta_overhead_bits(n_features: int) -> float:
    """Side-channel cost of shipping the feature order."""
    return n_features * math.log2(n_features)


def prepare_dataset(config: ExperimentConfig):
    """Return (train_images, test_images) under the configured source."""
    if config.dataset == "synthetic":
        images = gen_synthetic_dataset(config.dataset_count, config.img_hw,
                                       seed=config.data_seed)
        n_test = max(1, int(round(config.test_frac * len(images))))
        order = np.random.default_rng(
            np.random.SeedSequence((config.data_seed, 0x5371))).permutation(len(images))
        test_idx, train_idx = order[:n_test], order[n_test:]
        return images[train_idx], images[test_idx]
    if config.dataset == "cifar10":
        if not config.cifar_train_path or not config.cifar_test_path:
            raise ValueError("cifar10 dataset needs cifar_train_path and cifar_test_path")
        return (load_cifar10(config.cifar_train_path),
                load_cifar10(config.cifar_test_path))
    raise ValueError(f"unknown dataset {config.dataset!r}")


def _bootstrap_ci(values: np.ndarray, resamples: np.ndarray):
    means = values[resamples].mean(axis=1)
    return float(np.percentile(means, 2.5)), float(np.percentile(means, 97.5))


_COMPARISONS = (
    ("KC_FP", "DJSCC"),
    ("KC_FP", "RANDOM_ORDER"),
    ("KC_FP", "PC_FP"),
    ("PC_FP", "DJSCC"),
    ("KC_FP_KD", "KC_FP"),
    ("PC_FP_KD", "PC_FP"),
    ("PC_FP_KD", "DJSCC"),
)


def run_eval_sweep(config: ExperimentConfig, codec: Codec,
                   predictor: Predictor | None = None,
                   students: tuple[Student, Student] | None = None,
                   test_images: np.ndarray | None = None,
                   seed: int | None = None):
    """Evaluate every configured scheme over the test set and SNR list.

    Returns (summary dict, per-image records). Deterministic for a fixed
    seed: traces, noise and the random-order control all derive from it.
    """
    if test_images is None:
        _, test_images = prepare_dataset(config)
    seed = config.seed if seed is None else seed
    geom = codec.geometry
    t1 = config.predictor_t1
    budget = NoiseBudget(steps=config.budget_steps,
                         rel_scale=config.budget_rel_scale)
    sos = config.sos_config()
    schemes = list(config.schemes)
    snrs = list(config.snr_test_db)

    records = []
    psnr_map = {(s, snr): np.empty(len(test_images)) for s in schemes for snr in snrs}
    nmse_values = []
    for idx, image in enumerate(test_images):
        trace = make_channel_trace(sos, idx, seed, t1, geom.feat_c, geom.n_symbols)
        cache = {}
        for snr in snrs:
            for scheme in schemes:
                rec = run_pipeline(image, scheme, codec, predictor, students,
                                   trace, snr, alpha=config.alpha, beta=config.beta,
                                   budget=budget, equalizer=config.equalizer,
                                   seed=seed, cache=cache)
                records.append(rec)
                psnr_map[(scheme, snr)][idx] = rec.psnr_db
                if rec.predictor_nmse is not None:
                    nmse_values.append(rec.predictor_nmse)

    n = len(test_images)
    resamples = np.random.default_rng(
        np.random.SeedSequence((seed, 0xB007))).integers(0, n, size=(1000, n))
    cells = []
    for scheme in schemes:
        for snr in snrs:
            vals = psnr_map[(scheme, snr)]
            finite = vals[np.isfinite(vals)]
            lo, hi = _bootstrap_ci(vals, resamples) if np.all(np.isfinite(vals)) \
                else (float("nan"), float("nan"))
            cells.append({
                "scheme": scheme,
                "snr_db": float(snr),
                "mean_psnr_db": float(finite.mean()) if len(finite) else float("nan"),
                "ci95_lo": lo,
                "ci95_hi": hi,
                "n": int(len(finite)),
            })

    comparisons = []
    for a, b in _COMPARISONS:
        if a not in schemes or b not in schemes:
            continue
        for snr in snrs:
            va, vb = psnr_map[(a, snr)], psnr_map[(b, snr)]
            ok = np.isfinite(va) & np.isfinite(vb)
            diff = va[ok] - vb[ok]
            if len(diff) > 1 and np.ptp(diff) > 0:
                p = float(stats.ttest_rel(va[ok], vb[ok], alternative="greater").pvalue)
            else:
                p = float("nan")
            comparisons.append({
                "better": a,
                "baseline": b,
                "snr_db": float(snr),
                "mean_diff_db": float(diff.mean()),
                "p_one_sided": p,
                "n": int(ok.sum()),
            })

    summary = {
        "config": config.to_dict(),
        "seed": int(seed),
        "n_test_images": n,
        "eta_overhead_bits_per_image": eta_overhead_bits(geom.feat_c),
        "cells": cells,
        "comparisons": comparisons,
        "predictor_nmse_mean": float(np.mean(nmse_values)) if nmse_values else None,
    }
    return summary, records
