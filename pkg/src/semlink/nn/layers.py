"""Differentiable layers: conv, transposed conv, pooling, dense, LSTM cell.

Spatial ops accept a single (C, H, W) array or a batched (N, C, H, W) one;
the batch axis is added and stripped transparently. All convolutions are
cross-correlations implemented with an im2col/col2im pair so the heavy work
lands in BLAS.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor, matmul, add

__all__ = [
    "conv2d",
    "conv2d_transpose",
    "conv_out_size",
    "conv_transpose_out_size",
    "dense",
    "lstm_cell_step",
    "avg_pool",
    "adaptive_avg_pool",
    "global_avg_pool",
    "kaiming_uniform",
    "uniform_fan_in",
]


def conv_out_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def conv_transpose_out_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return stride * (size - 1) + kernel - 2 * padding


def _im2col(xp, kernel, stride, out_h, out_w):
    # xp: (N, C, Hp, Wp) padded input -> (N, C*K*K, out_h*out_w)
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kernel, kernel, out_h, out_w), dtype=np.float64)
    for ki in range(kernel):
        for kj in range(kernel):
            cols[:, :, ki, kj] = xp[:, :, ki:ki + stride * out_h:stride,
                                    kj:kj + stride * out_w:stride]
    return cols.reshape(n, c * kernel * kernel, out_h * out_w)


def _col2im(cols, n, c, hp, wp, kernel, stride, out_h, out_w):
    # scatter-add of _im2col: (N, C*K*K, out_h*out_w) -> (N, C, Hp, Wp)
    xp = np.zeros((n, c, hp, wp), dtype=np.float64)
    cols = cols.reshape(n, c, kernel, kernel, out_h, out_w)
    for ki in range(kernel):
        for kj in range(kernel):
            xp[:, :, ki:ki + stride * out_h:stride,
               kj:kj + stride * out_w:stride] += cols[:, :, ki, kj]
    return xp


def _promote(x: Tensor):
    if x.data.ndim == 3:
        return Tensor(x.data[None], (x,), lambda g: (g[0],)), True
    if x.data.ndim == 4:
        return x, False
    raise ValueError(f"expected a (C,H,W) or (N,C,H,W) array, got shape {x.data.shape}")


def _demote(y: Tensor, squeezed: bool):
    if not squeezed:
        return y
    return Tensor(y.data[0], (y,), lambda g: (g[None],))


def conv2d(x, kernels, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate x (C_in,H,W) with kernels (C_out,C_in,K,K)."""
    x, squeezed = _promote(as_tensor(x))
    kernels = as_tensor(kernels)
    n, c_in, h, w = x.data.shape
    c_out, kc_in, kh, kw = kernels.data.shape
    if kh != kw:
        raise ValueError(f"only square kernels supported, got {kh}x{kw}")
    if kc_in != c_in:
        raise ValueError(
            f"conv2d channel mismatch: input has {c_in} channels, kernels expect {kc_in}")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ValueError(
            f"conv2d kernel {kh} too large for padded input {h + 2 * padding}x{w + 2 * padding}")
    k, s, p = kh, stride, padding
    out_h, out_w = conv_out_size(h, k, s, p), conv_out_size(w, k, s, p)

    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    cols = _im2col(xp, k, s, out_h, out_w)
    w2d = kernels.data.reshape(c_out, c_in * k * k)
    out_data = np.matmul(w2d[None], cols).reshape(n, c_out, out_h, out_w)

    def vjp(g):
        g2 = g.reshape(n, c_out, out_h * out_w)
        gw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0)
        dcols = np.matmul(w2d.T[None], g2)
        gxp = _col2im(dcols, n, c_in, h + 2 * p, w + 2 * p, k, s, out_h, out_w)
        gx = gxp[:, :, p:p + h, p:p + w] if p else gxp
        return gx, gw.reshape(kernels.data.shape)

    return _demote(Tensor(out_data, (x, kernels), vjp), squeezed)


def conv2d_transpose(x, kernels, stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed conv (adjoint of conv2d): kernels are (C_in,C_out,K,K)."""
    x, squeezed = _promote(as_tensor(x))
    kernels = as_tensor(kernels)
    n, c_in, h, w = x.data.shape
    kc_in, c_out, kh, kw = kernels.data.shape
    if kh != kw:
        raise ValueError(f"only square kernels supported, got {kh}x{kw}")
    if kc_in != c_in:
        raise ValueError(
            f"conv2d_transpose channel mismatch: input has {c_in} channels, "
            f"kernels expect {kc_in}")
    k, s, p = kh, stride, padding
    out_h = conv_transpose_out_size(h, k, s, p)
    out_w = conv_transpose_out_size(w, k, s, p)
    if out_h <= 0 or out_w <= 0:
        raise ValueError(f"conv2d_transpose geometry collapses to {out_h}x{out_w}")

    w2d = kernels.data.reshape(c_in, c_out * k * k)
    x2 = x.data.reshape(n, c_in, h * w)
    cols = np.matmul(w2d.T[None], x2)
    full = _col2im(cols, n, c_out, out_h + 2 * p, out_w + 2 * p, k, s, h, w)
    out_data = full[:, :, p:p + out_h, p:p + out_w] if p else full

    def vjp(g):
        gp = np.pad(g, ((0, 0), (0, 0), (p, p), (p, p))) if p else g
        gcols = _im2col(gp, k, s, h, w)
        gx = np.matmul(w2d[None], gcols).reshape(n, c_in, h, w)
        gw = np.matmul(x2, gcols.transpose(0, 2, 1)).sum(axis=0)
        return gx, gw.reshape(kernels.data.shape)

    return _demote(Tensor(out_data, (x, kernels), vjp), squeezed)


def dense(x, weight, bias=None) -> Tensor:
    """x (N,in) @ weight (in,out) + bias; 1-D inputs are treated as one row."""
    from .tensor import reshape

    x = as_tensor(x)
    if x.data.ndim == 1:
        return reshape(dense(reshape(x, (1, -1)), weight, bias), (-1,))
    out = matmul(x, as_tensor(weight))
    if bias is not None:
        out = add(out, as_tensor(bias))
    return out


def lstm_cell_step(x_t, state, params) -> tuple[Tensor, Tensor]:
    """One LSTM step. params = dict with wx (in,4H), wh (H,4H), b (4H).

    Gate layout along the last axis is [input, forget, candidate, output];
    returns (h_t, c_t) for a batch of rows.
    """
    from .tensor import sigmoid, tanh, slice_last, mul, add as tadd

    h_prev, c_prev = state
    x_t, h_prev, c_prev = as_tensor(x_t), as_tensor(h_prev), as_tensor(c_prev)
    hidden = h_prev.data.shape[-1]
    if c_prev.data.shape != h_prev.data.shape:
        raise ValueError(
            f"lstm state shape mismatch: h {h_prev.data.shape} vs c {c_prev.data.shape}")
    wx, wh, b = params["wx"], params["wh"], params["b"]
    if as_tensor(wx).data.shape[1] != 4 * hidden:
        raise ValueError("lstm gate parameters inconsistent with hidden size")

    z = tadd(tadd(matmul(x_t, as_tensor(wx)), matmul(h_prev, as_tensor(wh))),
             as_tensor(b))
    i = sigmoid(slice_last(z, 0, hidden))
    f = sigmoid(slice_last(z, hidden, 2 * hidden))
    g = tanh(slice_last(z, 2 * hidden, 3 * hidden))
    o = sigmoid(slice_last(z, 3 * hidden, 4 * hidden))
    c_t = tadd(mul(f, c_prev), mul(i, g))
    h_t = mul(o, tanh(c_t))
    return h_t, c_t


def avg_pool(x, window: int) -> Tensor:
    """Non-overlapping window average; window must divide H and W."""
    x, squeezed = _promote(as_tensor(x))
    n, c, h, w = x.data.shape
    if h % window or w % window:
        raise ValueError(f"avg_pool window {window} does not divide {h}x{w}")
    oh, ow = h // window, w // window
    out_data = x.data.reshape(n, c, oh, window, ow, window).mean(axis=(3, 5))

    def vjp(g):
        gx = np.repeat(np.repeat(g, window, axis=2), window, axis=3)
        return (gx / (window * window),)

    return _demote(Tensor(out_data, (x,), vjp), squeezed)


def adaptive_avg_pool(x, out_h: int, out_w: int) -> Tensor:
    """Average each map down to an out_h x out_w grid (uneven bins allowed)."""
    x, squeezed = _promote(as_tensor(x))
    n, c, h, w = x.data.shape
    rb = [(i * h // out_h, -(-(i + 1) * h // out_h)) for i in range(out_h)]
    cb = [(j * w // out_w, -(-(j + 1) * w // out_w)) for j in range(out_w)]
    out_data = np.empty((n, c, out_h, out_w), dtype=np.float64)
    for i, (r0, r1) in enumerate(rb):
        for j, (c0, c1) in enumerate(cb):
            out_data[:, :, i, j] = x.data[:, :, r0:r1, c0:c1].mean(axis=(2, 3))

    def vjp(g):
        gx = np.zeros((n, c, h, w), dtype=np.float64)
        for i, (r0, r1) in enumerate(rb):
            for j, (c0, c1) in enumerate(cb):
                area = (r1 - r0) * (c1 - c0)
                gx[:, :, r0:r1, c0:c1] += g[:, :, i:i + 1, j:j + 1] / area
        return (gx,)

    return _demote(Tensor(out_data, (x,), vjp), squeezed)


def global_avg_pool(x) -> Tensor:
    """(C,H,W) -> (C,) or (N,C,H,W) -> (N,C) channel means."""
    x, squeezed = _promote(as_tensor(x))
    n, c, h, w = x.data.shape
    out_data = x.data.mean(axis=(2, 3))

    def vjp(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), (n, c, h, w)).copy(),)

    out = Tensor(out_data, (x,), vjp)
    if squeezed:
        return Tensor(out.data[0], (out,), lambda g: (g[None],))
    return out


# ---------------------------------------------------------------------------
# seedable initializers
# ---------------------------------------------------------------------------

def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def uniform_fan_in(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)
