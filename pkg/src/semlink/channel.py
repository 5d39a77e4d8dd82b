"""Correlated Rayleigh fading via an improved sum-of-sinusoids model, AWGN,
per-feature block fading and receiver equalization.

The n-th channel sample is

    h_n = (1/sqrt(M)) * sum_m [ A_m cos(theta_m(n)) + j B_m sin(theta_m(n)) ]
    theta_m(n) = (2*pi*f_d*n*T_s + psi_m) * cos(alpha_m) + phi_m

with A_m, B_m standard normal and alpha_m, phi_m, psi_m i.i.d. uniform on
[-pi, pi). The extra per-path phase psi_m makes the process wide-sense
stationary; E[|h|^2] = 1 by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

__all__ = [
    "SosConfig",
    "CsiSequence",
    "ChannelRealization",
    "sos_generate",
    "noise_sigma_from_snr",
    "SymbolVector",
    "apply_channel",
    "equalizer_gain",
    "equalize",
    "channel_stats",
]


@dataclass
class SosConfig:
    """Sum-of-sinusoids fading parameters. Defaults give a slow channel
    (normalized Doppler f_d*T_s = 0.01) whose recent history is informative."""
    n_paths: int = 16
    doppler_hz: float = 100.0
    sample_period_s: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.doppler_hz < 0:
            raise ValueError("doppler_hz must be >= 0")
        if self.sample_period_s <= 0:
            raise ValueError("sample_period_s must be > 0")

    @property
    def normalized_doppler(self) -> float:
        return self.doppler_hz * self.sample_period_s


@dataclass
class CsiSequence:
    """Contiguous complex channel samples starting at absolute index n."""
    samples: np.ndarray
    start_index: int
    sample_period_s: float

    def __len__(self):
        return len(self.samples)


class ChannelRealization:
    """One fading realization: path parameters drawn once, then h(n) is a
    pure function of the sample index, so overlapping windows always agree."""

    def __init__(self, config: SosConfig, realization_seed):
        self.config = config
        self.seed = realization_seed
        try:
            entropy = (config.seed, *realization_seed)
        except TypeError:
            entropy = (config.seed, realization_seed)
        rng = np.random.default_rng(np.random.SeedSequence(entropy))
        m = config.n_paths
        self.amp_i = rng.standard_normal(m)
        self.amp_q = rng.standard_normal(m)
        self.alpha = rng.uniform(-np.pi, np.pi, m)
        self.phi = rng.uniform(-np.pi, np.pi, m)
        self.psi = rng.uniform(-np.pi, np.pi, m)

    def sample(self, n_start: int, count: int) -> np.ndarray:
        cfg = self.config
        n = n_start + np.arange(count)
        theta = ((2.0 * np.pi * cfg.doppler_hz * cfg.sample_period_s) * n[:, None]
                 + self.psi[None, :]) * np.cos(self.alpha)[None, :] + self.phi[None, :]
        comp_i = self.amp_i[None, :] * np.cos(theta)
        comp_q = self.amp_q[None, :] * np.sin(theta)
        return (comp_i.sum(axis=1) + 1j * comp_q.sum(axis=1)) / np.sqrt(cfg.n_paths)


def sos_generate(config: SosConfig, realization_seed: int,
                 n_start: int, count: int) -> CsiSequence:
    """Generate `count` samples of one realization from absolute index n_start."""
    if count < 1:
        raise ValueError("count must be >= 1")
    real = ChannelRealization(config, realization_seed)
    return CsiSequence(real.sample(n_start, count), n_start, config.sample_period_s)


def noise_sigma_from_snr(snr_db: float, power: float = 1.0) -> float:
    """Complex-noise std for a given average SNR: sigma^2 = P / 10^(SNR/10)."""
    if power <= 0:
        raise ValueError("power must be > 0")
    return float(np.sqrt(power / (10.0 ** (snr_db / 10.0))))


def draw_noise(rng: np.random.Generator, count: int, sigma: float = 1.0) -> np.ndarray:
    """i.i.d. CN(0, sigma^2): variance sigma^2/2 per real component."""
    scale = sigma / np.sqrt(2.0)
    return rng.standard_normal(count) * scale + 1j * rng.standard_normal(count) * scale


@dataclass
class SymbolVector:
    """Channel-input/-output block: k complex symbols in c contiguous
    per-feature slots, plus the power-normalization scale carried as
    trusted side information."""
    symbols: np.ndarray
    n_slots: int
    scale: float
    degenerate: bool = False

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=np.complex128)
        if len(self.symbols) % self.n_slots:
            raise ValueError(
                f"{len(self.symbols)} symbols do not split into {self.n_slots} equal slots")

    @property
    def symbols_per_slot(self) -> int:
        return len(self.symbols) // self.n_slots

    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.symbols) ** 2))


def _expand_slots(slot_values: np.ndarray, per_slot: int) -> np.ndarray:
    return np.repeat(slot_values, per_slot)


def apply_channel(x: SymbolVector, slot_csi, sigma: float,
                  rng: np.random.Generator | None = None,
                  noise: np.ndarray | None = None) -> SymbolVector:
    """y = h*x + n with one coefficient per feature slot (block fading).

    Pass `noise` to replay a stored draw (paired comparisons); otherwise it is
    drawn CN(0, sigma^2) from `rng`.
    """
    slot_csi = np.asarray(slot_csi, dtype=np.complex128)
    if slot_csi.shape != (x.n_slots,):
        raise ValueError(f"need {x.n_slots} slot coefficients, got shape {slot_csi.shape}")
    if noise is None:
        if sigma > 0:
            if rng is None:
                raise ValueError("apply_channel needs an rng or an explicit noise draw")
            noise = draw_noise(rng, len(x.symbols), sigma)
        else:
            noise = np.zeros(len(x.symbols), dtype=np.complex128)
    h = _expand_slots(slot_csi, x.symbols_per_slot)
    return SymbolVector(h * x.symbols + noise, x.n_slots, x.scale, x.degenerate)


def equalizer_gain(slot_csi, sigma: float, method: str = "mmse",
                   zf_floor: float = 1e-6) -> np.ndarray:
    """Per-slot receive scaling q so that x_hat = q*y (perfect receiver CSI).

    mmse: q = conj(h) / (|h|^2 + sigma^2); zf: q = 1/h with |h| floored.
    """
    h = np.asarray(slot_csi, dtype=np.complex128)
    if method == "mmse":
        return np.conj(h) / (np.abs(h) ** 2 + sigma ** 2)
    if method == "zf":
        mag = np.maximum(np.abs(h), zf_floor)
        return np.conj(h) / (mag * mag)
    raise ValueError(f"unknown equalizer {method!r} (use 'mmse' or 'zf')")


def equalize(y: SymbolVector, slot_csi, sigma: float,
             method: str = "mmse") -> SymbolVector:
    slot_csi = np.asarray(slot_csi, dtype=np.complex128)
    if slot_csi.shape != (y.n_slots,):
        raise ValueError(f"need {y.n_slots} slot coefficients, got shape {slot_csi.shape}")
    q = equalizer_gain(slot_csi, sigma, method)
    qs = _expand_slots(q, y.symbols_per_slot)
    return SymbolVector(qs * y.symbols, y.n_slots, y.scale, y.degenerate)


# ---------------------------------------------------------------------------
# validation statistics (channel-stats CLI)
# ---------------------------------------------------------------------------

def _batch_path_params(rng: np.random.Generator, n_real: int, m: int):
    return (rng.standard_normal((n_real, m)),
            rng.standard_normal((n_real, m)),
            rng.uniform(-np.pi, np.pi, (n_real, m)),
            rng.uniform(-np.pi, np.pi, (n_real, m)),
            rng.uniform(-np.pi, np.pi, (n_real, m)))


def _batch_sos(config: SosConfig, rng: np.random.Generator,
               n_real: int, length: int) -> np.ndarray:
    """(n_real, length) samples from independent realizations, vectorized."""
    ai, aq, alpha, phi, psi = _batch_path_params(rng, n_real, config.n_paths)
    n = np.arange(length)
    w = 2.0 * np.pi * config.doppler_hz * config.sample_period_s
    # theta: (n_real, M, length)
    theta = (w * n[None, None, :] + psi[:, :, None]) * np.cos(alpha)[:, :, None] \
        + phi[:, :, None]
    h = (ai[:, :, None] * np.cos(theta)).sum(axis=1) \
        + 1j * (aq[:, :, None] * np.sin(theta)).sum(axis=1)
    return h / np.sqrt(config.n_paths)


def channel_stats(config: SosConfig, seed: int = 0, n_samples: int = 100_000,
                  autocorr_realizations: int = 400, phase_bins: int = 32) -> dict:
    """Monte-Carlo moments, WSS autocorrelation and phase-uniformity check.

    Moments and phases use one sample per independent realization: time
    averages within a realization do not converge to the ensemble statistics
    for finite path counts, whereas the n=0 ensemble gives i.i.d. draws from
    the true marginal (which is also what the chi^2 null assumes).
    """
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, seed, 0xC0DE)))

    ai, aq, alpha, phi, psi = _batch_path_params(rng, n_samples, config.n_paths)
    theta0 = psi * np.cos(alpha) + phi
    h0 = ((ai * np.cos(theta0)).sum(axis=1)
          + 1j * (aq * np.sin(theta0)).sum(axis=1)) / np.sqrt(config.n_paths)
    mean_power = float(np.mean(np.abs(h0) ** 2))
    envelope_mean = float(np.mean(np.abs(h0)))
    phases = np.angle(h0)
    counts, edges = np.histogram(phases, bins=phase_bins, range=(-np.pi, np.pi))
    chi2, chi2_p = stats.chisquare(counts)

    # ensemble autocorrelation of the real part over the first quarter of a
    # coherence interval; theory is 0.5*J0(2*pi*fd*tau*Ts)
    fd_ts = config.normalized_doppler
    max_lag = max(1, int(round(1.0 / fd_ts / 4))) if fd_ts > 0 else 25
    length = max_lag * 8
    hr = _batch_sos(config, rng, autocorr_realizations, length).real
    lags = np.arange(max_lag + 1)
    autocorr = np.empty(max_lag + 1)
    for tau in lags:
        if tau == 0:
            autocorr[tau] = np.mean(hr * hr)
        else:
            autocorr[tau] = np.mean(hr[:, :-tau] * hr[:, tau:])
    theory = 0.5 * special.j0(2.0 * np.pi * fd_ts * lags)

    return {
        "config": {
            "n_paths": config.n_paths,
            "doppler_hz": config.doppler_hz,
            "sample_period_s": config.sample_period_s,
            "normalized_doppler": fd_ts,
            "seed": config.seed,
        },
        "n_samples": int(n_samples),
        "mean_power": mean_power,
        "envelope_mean": envelope_mean,
        "envelope_mean_theory": float(np.sqrt(np.pi) / 2.0),
        "phase_hist": {
            "counts": counts.tolist(),
            "bin_edges": edges.tolist(),
            "chi2": float(chi2),
            "p_value": float(chi2_p),
        },
        "autocorr_curve": {
            "lags": lags.tolist(),
            "empirical": autocorr.tolist(),
            "theory": theory.tolist(),
            "max_abs_dev": float(np.max(np.abs(autocorr - theory))),
            "realizations": int(autocorr_realizations),
        },
    }
