"""Learned image codec and its channel-facing glue.

The encoder maps a [0,1] RGB image to a c x h x w feature tensor (two
stride-2 stages, so h = H/4); the decoder mirrors it back through
transposed convolutions with a sigmoid head. Features are paired
(real, imag) into contiguous per-feature symbol slots under an exact
average power constraint, and training runs end to end through the fading
channel with the random draws held constant during backprop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import (SosConfig, SymbolVector, _batch_sos, draw_noise,
                      equalizer_gain, noise_sigma_from_snr)
from .nn import ParamSet, Tensor, AdamState, adam_step, backward
from .nn import layers as L
from .nn import tensor as T

__all__ = [
    "CodecGeometry",
    "Codec",
    "to_symbols",
    "from_symbols",
    "system_loss",
    "psnr",
    "train_codec",
]

_ENC_CHANNELS = (16, 32, 32, 32, 24)
_ENC_STRIDES = (2, 2, 1, 1, 1)
_DEC_CHANNELS = (32, 32, 32, 16, 3)
_DEC_STRIDES = (1, 1, 2, 2, 1)


@dataclass(frozen=True)
class CodecGeometry:
    """Image/feature dimensions. Defaults are the desk profile; pass
    img_h = img_w = 32 for the full-size profile. Both give R = 1/4."""
    img_h: int = 16
    img_w: int = 16
    img_c: int = 3
    feat_c: int = 24

    def __post_init__(self):
        if self.img_h % 4 or self.img_w % 4:
            raise ValueError("image sides must be divisible by 4 (two stride-2 stages)")

    @property
    def feat_h(self) -> int:
        return self.img_h // 4

    @property
    def feat_w(self) -> int:
        return self.img_w // 4

    @property
    def image_size(self) -> int:
        return self.img_c * self.img_h * self.img_w

    @property
    def n_symbols(self) -> int:
        return self.feat_c * self.feat_h * self.feat_w // 2

    @property
    def bandwidth_ratio(self) -> float:
        return self.n_symbols / self.image_size

    @property
    def feature_shape(self):
        return (self.feat_c, self.feat_h, self.feat_w)


def _build_encoder(geom: CodecGeometry, rng) -> ParamSet:
    ps = ParamSet()
    c_in = geom.img_c
    for i, (c_out, stride) in enumerate(zip(_ENC_CHANNELS, _ENC_STRIDES)):
        k = 3
        fan_in = c_in * k * k
        ps.add(f"enc/conv{i}/w", L.kaiming_uniform(rng, (c_out, c_in, k, k), fan_in))
        ps.add(f"enc/conv{i}/b", np.zeros(c_out))
        c_in = c_out
    return ps


def _build_decoder(geom: CodecGeometry, rng) -> ParamSet:
    ps = ParamSet()
    c_in = geom.feat_c
    for i, (c_out, stride) in enumerate(zip(_DEC_CHANNELS, _DEC_STRIDES)):
        k = 4 if stride == 2 else 3
        fan_in = c_in * k * k
        ps.add(f"dec/tconv{i}/w", L.kaiming_uniform(rng, (c_in, c_out, k, k), fan_in))
        ps.add(f"dec/tconv{i}/b", np.zeros(c_out))
        c_in = c_out
    return ps


class Codec:
    """Encoder/decoder parameter pair for one geometry and training SNR."""

    def __init__(self, geometry: CodecGeometry, seed: int = 0,
                 snr_train_db: float = math.nan):
        self.geometry = geometry
        self.snr_train_db = snr_train_db
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0xE0C)))
        self.enc = _build_encoder(geometry, rng)
        self.dec = _build_decoder(geometry, rng)

    # --- differentiable paths -------------------------------------------
    def encode_graph(self, images: Tensor) -> Tensor:
        x = images
        n_layers = len(_ENC_CHANNELS)
        for i, stride in enumerate(_ENC_STRIDES):
            w = self.enc[f"enc/conv{i}/w"]
            b = self.enc[f"enc/conv{i}/b"]
            x = L.conv2d(x, w, stride=stride, padding=1)
            bias = T.reshape(b, (-1, 1, 1))
            x = T.add(x, bias)
            if i < n_layers - 1:
                x = T.relu(x)
        return x

    def decode_graph(self, features: Tensor) -> Tensor:
        x = features
        n_layers = len(_DEC_CHANNELS)
        for i, stride in enumerate(_DEC_STRIDES):
            w = self.dec[f"dec/tconv{i}/w"]
            b = self.dec[f"dec/tconv{i}/b"]
            x = L.conv2d_transpose(x, w, stride=stride, padding=1)
            bias = T.reshape(b, (-1, 1, 1))
            x = T.add(x, bias)
            x = T.sigmoid(x) if i == n_layers - 1 else T.relu(x)
        return x

    # --- plain-array conveniences ---------------------------------------
    def encode(self, images) -> np.ndarray:
        images = np.asarray(images, dtype=np.float64)
        self._check_image_shape(images)
        return self.encode_graph(Tensor(images)).data

    def decode(self, features) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        expect = self.geometry.feature_shape
        if features.shape[-3:] != expect:
            raise ValueError(f"feature shape {features.shape} does not match {expect}")
        return self.decode_graph(Tensor(features)).data

    def _check_image_shape(self, images):
        g = self.geometry
        if images.shape[-3:] != (g.img_c, g.img_h, g.img_w):
            raise ValueError(
                f"image shape {images.shape} does not match geometry "
                f"({g.img_c},{g.img_h},{g.img_w})")

    def all_params(self) -> ParamSet:
        ps = ParamSet()
        for name, t in list(self.enc.items()) + list(self.dec.items()):
            ps.add(name, t.data)
        return ps

    def save(self, path):
        ps = self.all_params()
        g = self.geometry
        ps.add("_meta/geometry", np.array([g.img_h, g.img_w, g.img_c, g.feat_c],
                                          dtype=np.float64))
        ps.add("_meta/snr_train_db", np.array([self.snr_train_db]))
        ps.save(path)

    @classmethod
    def load(cls, path) -> "Codec":
        ps = ParamSet.load(path)
        gh, gw, gc, fc = ps["_meta/geometry"].data.astype(int)
        codec = cls(CodecGeometry(int(gh), int(gw), int(gc), int(fc)),
                    snr_train_db=float(ps["_meta/snr_train_db"].data[0]))
        for name in codec.enc.names():
            codec.enc[name].data[...] = ps[name].data
        for name in codec.dec.names():
            codec.dec[name].data[...] = ps[name].data
        return codec


# ---------------------------------------------------------------------------
# feature <-> symbol mapping
# ---------------------------------------------------------------------------

def to_symbols(features, power: float = 1.0) -> SymbolVector:
    """Pair each feature's reals (row-major) into contiguous complex slots and
    scale so the mean symbol power is exactly `power`."""
    features = np.asarray(features, dtype=np.float64)
    c, h, w = features.shape
    if (h * w) % 2:
        raise ValueError(f"feature plane size {h}x{w} must be even to pair symbols")
    flat = features.reshape(c * h * w)
    symbols = flat[0::2] + 1j * flat[1::2]
    k = symbols.size
    norm = float(np.linalg.norm(flat))
    if norm == 0.0:
        return SymbolVector(np.zeros(k, dtype=np.complex128), c, 0.0, degenerate=True)
    scale = math.sqrt(k * power) / norm
    return SymbolVector(symbols * scale, c, scale)


def from_symbols(symbols, feature_shape, scale: float) -> np.ndarray:
    """Exact inverse of to_symbols given the stored scale."""
    if isinstance(symbols, SymbolVector):
        if scale is None:
            scale = symbols.scale
        symbols = symbols.symbols
    symbols = np.asarray(symbols, dtype=np.complex128)
    c, h, w = feature_shape
    if symbols.size * 2 != c * h * w:
        raise ValueError(
            f"{symbols.size} symbols do not fill a {c}x{h}x{w} feature tensor")
    flat = np.empty(c * h * w, dtype=np.float64)
    flat[0::2] = symbols.real
    flat[1::2] = symbols.imag
    if scale == 0.0:
        return np.zeros((c, h, w))
    return (flat / scale).reshape(c, h, w)


def system_loss(s, s_hat) -> float:
    """Per-image distortion (1/l)*||s_hat - s||^2."""
    s = np.ravel(np.asarray(s, dtype=np.float64))
    s_hat = np.ravel(np.asarray(s_hat, dtype=np.float64))
    if s.shape != s_hat.shape:
        raise ValueError(f"length mismatch: {s.shape} vs {s_hat.shape}")
    d = s_hat - s
    return float(np.mean(d * d))


def psnr(s, s_hat, max_val: float = 1.0) -> float:
    """10*log10(MAX^2/MSE); returns +inf when the reconstruction is exact."""
    mse_val = system_loss(s, s_hat)
    if mse_val == 0.0:
        return math.inf
    return float(10.0 * np.log10(max_val * max_val / mse_val))


# ---------------------------------------------------------------------------
# end-to-end training through the channel
# ---------------------------------------------------------------------------

def effective_channel(slot_csi, sigma: float, method: str = "mmse"):
    """Real per-slot gain gamma and equalized-noise coefficient q for the
    combined fade -> AWGN -> equalize path (gamma = q*h is real for both
    equalizers under perfect receiver CSI)."""
    q = equalizer_gain(slot_csi, sigma, method)
    gamma = (q * np.asarray(slot_csi, dtype=np.complex128)).real
    return gamma, q


def _unpair(values: np.ndarray) -> np.ndarray:
    """(…, k) complex -> (…, 2k) interleaved reals (inverse of pairing)."""
    out = np.empty(values.shape[:-1] + (values.shape[-1] * 2,), dtype=np.float64)
    out[..., 0::2] = values.real
    out[..., 1::2] = values.imag
    return out


def channel_roundtrip_graph(features: Tensor, gamma: np.ndarray,
                            eq_noise: np.ndarray, power: float = 1.0) -> Tensor:
    """Differentiable transmit -> fade -> equalize -> receive on a batch.

    features: (N,c,h,w) graph tensor; gamma: (N,c) real effective slot gains;
    eq_noise: (N,k) complex equalized noise q*n. The random draws are
    constants; gradients flow through the gains and the power normalization.

        z_hat = gamma * z + (q*n / sqrt(k*P)) * ||z||
    """
    n, c, h, w = features.shape
    k = c * h * w // 2
    rho = _unpair(eq_noise / math.sqrt(k * power)).reshape(n, c, h, w)
    sq = T.mul(features, features)
    norm = T.sqrt(T.tsum(sq, axis=(1, 2, 3), keepdims=True))
    faded = T.mul(features, Tensor(gamma[:, :, None, None]))
    return T.add(faded, T.mul(Tensor(rho), norm))


def train_codec(images, channel_config: SosConfig, snr_train_db: float,
                epochs: int, seed: int = 0, batch_size: int = 32,
                lr: float = 1e-3, equalizer: str = "mmse",
                geometry: CodecGeometry | None = None,
                verbose: bool = False):
    """Train encoder+decoder end to end; returns (codec, history).

    history is a list of (epoch, mean_train_loss) rows. snr_train_db = +inf
    trains a plain autoencoder (no fading, no noise). Aborts on NaN loss.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or images.shape[0] == 0:
        raise ValueError("expected a non-empty (N, C, H, W) image array")
    if geometry is None:
        geometry = CodecGeometry(img_h=images.shape[2], img_w=images.shape[3],
                                 img_c=images.shape[1])
    codec = Codec(geometry, seed=seed, snr_train_db=snr_train_db)
    params = ParamSet()
    for name, t in list(codec.enc.items()) + list(codec.dec.items()):
        params.add_shared(name, t)
    state = AdamState(params, lr=lr)

    noiseless = math.isinf(snr_train_db)
    sigma = 0.0 if noiseless else noise_sigma_from_snr(snr_train_db)
    streams = np.random.SeedSequence((seed, 0x7247)).spawn(2)
    shuffle_rng = np.random.default_rng(streams[0])
    chan_rng = np.random.default_rng(streams[1])

    n_images = images.shape[0]
    c = geometry.feat_c
    k = geometry.n_symbols
    history = []
    for epoch in range(epochs):
        order = shuffle_rng.permutation(n_images)
        losses = []
        for start in range(0, n_images, batch_size):
            batch = images[order[start:start + batch_size]]
            nb = batch.shape[0]
            feats = codec.encode_graph(Tensor(batch))
            if noiseless:
                received = feats
            else:
                slot_csi = _batch_sos(channel_config, chan_rng, nb, c)
                noise = draw_noise(chan_rng, nb * k, sigma).reshape(nb, k)
                gamma, q = effective_channel(slot_csi, sigma, equalizer)
                eq_noise = np.repeat(q, k // c, axis=1) * noise
                received = channel_roundtrip_graph(feats, gamma, eq_noise)
            recon = codec.decode_graph(received)
            loss = T.mse(recon, Tensor(batch))
            loss_val = loss.item()
            if not math.isfinite(loss_val):
                raise RuntimeError(
                    f"codec training diverged (loss={loss_val}) at epoch {epoch}, "
                    f"batch starting {start}")
            backward(loss)
            grads = {name: t.grad for name, t in params.items()}
            adam_step(params, grads, state)
            losses.append(loss_val)
        mean_loss = float(np.mean(losses))
        history.append((epoch, mean_loss))
        if verbose:
            print(f"epoch {epoch:3d}  loss {mean_loss:.6f}")
    return codec, history


def save_history_csv(history, path):
    with open(path, "w") as fh:
        fh.write("epoch,loss\n")
        for epoch, loss in history:
            fh.write(f"{epoch},{loss:.10g}\n")
