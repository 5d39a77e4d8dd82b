"""Teacher-side feature scoring.

Importance is the global-average-pooled gradient of the reconstruction
distortion with respect to each feature map. Robustness is the reciprocal
of the largest distortion increase achievable by an L2-bounded perturbation
of that single feature map, found by projected gradient ascent with
best-iterate selection. The priority of a feature is
alpha * importance + beta * (1 - robustness) on min-max normalized scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Tensor, backward
from .nn import tensor as T

__all__ = [
    "ImportanceVector",
    "RobustnessVector",
    "NoiseBudget",
    "normalize_minmax",
    "compute_importance",
    "compute_importance_batch",
    "generate_semantic_noise",
    "compute_robustness",
    "compute_robustness_batch",
    "combine_priority",
    "teacher_priority",
]


@dataclass
class ImportanceVector:
    raw: np.ndarray
    norm: np.ndarray


@dataclass
class RobustnessVector:
    raw: np.ndarray
    norm: np.ndarray
    loss_increase: np.ndarray


@dataclass
class NoiseBudget:
    """L2 budget for per-feature perturbations.

    epsilon = None derives the radius per feature as rel_scale * ||A_k||
    (floored away from zero); step_size = None uses epsilon / 10.
    """
    epsilon: float | None = None
    steps: int = 20
    step_size: float | None = None
    rel_scale: float = 0.1

    def resolve(self, feature_norms: np.ndarray):
        if self.epsilon is not None:
            eps = np.full_like(np.asarray(feature_norms, dtype=np.float64),
                               self.epsilon)
        else:
            eps = np.maximum(self.rel_scale * np.asarray(feature_norms), 1e-6)
        step = np.full_like(eps, self.step_size) if self.step_size is not None \
            else eps / 10.0
        if np.any(eps <= 0):
            raise ValueError("noise budget must be positive")
        return eps, step


def normalize_minmax(v) -> np.ndarray:
    """(v - min)/(max - min); a constant vector maps to all 0.5."""
    v = np.asarray(v, dtype=np.float64)
    if v.size < 1:
        raise ValueError("cannot normalize an empty vector")
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.full_like(v, 0.5)
    return (v - lo) / (hi - lo)


def _image_loss_graph(decode_fn, features_t: Tensor, target: np.ndarray) -> Tensor:
    recon = decode_fn(features_t)
    if recon.data.shape != target.shape:
        raise ValueError(
            f"decoder output shape {recon.data.shape} does not match source "
            f"{target.shape}")
    return T.mse(recon, Tensor(target))


def compute_importance(decode_fn, features, source) -> ImportanceVector:
    """Average the distortion gradient over each feature map.

    decode_fn maps a (c,h,w) graph tensor to the reconstructed image tensor;
    source is the matching ground-truth image array.
    """
    features = np.asarray(features, dtype=np.float64)
    source = np.asarray(source, dtype=np.float64)
    feats_t = Tensor(features)
    loss = _image_loss_graph(decode_fn, feats_t, source)
    (grad,) = backward(loss, [feats_t])
    raw = grad.mean(axis=(1, 2))
    return ImportanceVector(raw=raw, norm=normalize_minmax(raw))


def _embed_channels(delta: Tensor, c: int, channels: np.ndarray) -> Tensor:
    """(n,h,w) per-item noise -> (n,c,h,w) tensors zero-padded so item i
    only perturbs channel channels[i]."""
    n, h, w = delta.data.shape
    rows = np.arange(n)
    out_data = np.zeros((n, c, h, w))
    out_data[rows, channels] = delta.data

    def vjp(g):
        return (g[rows, channels],)

    return Tensor(out_data, (delta,), vjp)


def _project_l2(delta: np.ndarray, eps: np.ndarray) -> np.ndarray:
    norms = np.sqrt((delta ** 2).sum(axis=(1, 2)))
    factor = np.where(norms > eps, eps / np.maximum(norms, 1e-300), 1.0)
    return delta * factor[:, None, None]


def _per_item_mse(recon: np.ndarray, target: np.ndarray) -> np.ndarray:
    d = (recon - target).reshape(recon.shape[0], -1)
    return (d * d).mean(axis=1)


def _pga_core(decode_fn, base: np.ndarray, channels: np.ndarray,
              target: np.ndarray, eps: np.ndarray, steps: int,
              step_size: np.ndarray, base_losses: np.ndarray,
              rng: np.random.Generator):
    """Run independent per-feature ascent problems side by side.

    base is an (n,c,h,w) stack of tensors to perturb; item i receives its
    noise on channel channels[i] and is scored against target[i]. Returns
    (best_deltas (n,h,w), best_losses (n,)).
    """
    n, c, h, w = base.shape

    delta = np.zeros((n, h, w))
    best_delta = delta.copy()
    best_loss = base_losses.copy()  # the untouched tensor is a candidate

    for it in range(steps + 1):
        delta_t = Tensor(delta)
        perturbed = T.add(Tensor(base), _embed_channels(delta_t, c, channels))
        recon = decode_fn(perturbed)
        losses = _per_item_mse(recon.data, target)
        improved = losses > best_loss
        best_loss = np.where(improved, losses, best_loss)
        best_delta[improved] = delta[improved]
        if it == steps:
            break
        loss = T.mse(recon, Tensor(target))
        (grad,) = backward(loss, [delta_t])
        gnorm = np.sqrt((grad ** 2).sum(axis=(1, 2)))
        dead = gnorm < 1e-12
        if np.any(dead):
            # flat start: nudge with a tiny random seed vector and continue
            delta[dead] += rng.standard_normal((int(dead.sum()), h, w)) * 1e-6
        alive = ~dead
        if np.any(alive):
            unit = grad[alive] / gnorm[alive][:, None, None]
            delta[alive] += step_size[alive][:, None, None] * unit
        delta = _project_l2(delta, eps)
    return best_delta, best_loss


def _base_loss(decode_fn, features, source) -> float:
    recon = decode_fn(Tensor(features)).data
    return float(np.mean((recon - source) ** 2))


def generate_semantic_noise(decode_fn, features, channel: int, source,
                            budget: NoiseBudget,
                            rng: np.random.Generator | None = None) -> np.ndarray:
    """Worst-case L2-bounded perturbation of one feature map (best iterate)."""
    features = np.asarray(features, dtype=np.float64)
    source = np.asarray(source, dtype=np.float64)
    if rng is None:
        rng = np.random.default_rng(0)
    norms = np.array([np.linalg.norm(features[channel])])
    eps, step = budget.resolve(norms)
    deltas, _ = _pga_core(decode_fn, features[None], np.array([channel]),
                          source[None], eps, budget.steps, step,
                          np.array([_base_loss(decode_fn, features, source)]), rng)
    return deltas[0]


def compute_robustness(decode_fn, features, source, budget: NoiseBudget,
                       rng: np.random.Generator | None = None) -> RobustnessVector:
    """Reciprocal worst-case loss increase per feature, min-max normalized."""
    features = np.asarray(features, dtype=np.float64)
    source = np.asarray(source, dtype=np.float64)
    if rng is None:
        rng = np.random.default_rng(0)
    c = features.shape[0]
    norms = np.linalg.norm(features.reshape(c, -1), axis=1)
    eps, step = budget.resolve(norms)
    base = np.broadcast_to(features, (c,) + features.shape).copy()
    target = np.broadcast_to(source, (c,) + source.shape).copy()
    base_losses = np.full(c, _base_loss(decode_fn, features, source))
    _, best_loss = _pga_core(decode_fn, base, np.arange(c), target,
                             eps, budget.steps, step, base_losses, rng)
    delta_l = np.maximum(best_loss - base_losses, 1e-8)
    raw = 1.0 / delta_l
    return RobustnessVector(raw=raw, norm=normalize_minmax(raw),
                            loss_increase=delta_l)


def compute_importance_batch(decode_fn, features: np.ndarray,
                             sources: np.ndarray) -> np.ndarray:
    """Normalized importance for a stack of images in one backward pass."""
    features = np.asarray(features, dtype=np.float64)
    sources = np.asarray(sources, dtype=np.float64)
    g = features.shape[0]
    feats_t = Tensor(features)
    loss = T.mse(decode_fn(feats_t), Tensor(sources))
    (grad,) = backward(loss, [feats_t])
    raw = grad.mean(axis=(2, 3)) * g  # undo the batch-mean scale
    return np.stack([normalize_minmax(row) for row in raw])


def compute_robustness_batch(decode_fn, features: np.ndarray,
                             sources: np.ndarray, budget: NoiseBudget,
                             rng: np.random.Generator) -> np.ndarray:
    """Normalized robustness for a stack of images; the per-feature ascent
    problems of all images run as one batched graph."""
    features = np.asarray(features, dtype=np.float64)
    sources = np.asarray(sources, dtype=np.float64)
    g, c, h, w = features.shape
    base = np.repeat(features, c, axis=0)
    target = np.repeat(sources, c, axis=0)
    channels = np.tile(np.arange(c), g)
    norms = np.linalg.norm(features.reshape(g, c, -1), axis=2).ravel()
    eps, step = budget.resolve(norms)
    recon = decode_fn(Tensor(features)).data
    per_image = ((recon - sources).reshape(g, -1) ** 2).mean(axis=1)
    base_losses = np.repeat(per_image, c)
    _, best_loss = _pga_core(decode_fn, base, channels, target, eps,
                             budget.steps, step, base_losses, rng)
    delta_l = np.maximum(best_loss - base_losses, 1e-8).reshape(g, c)
    return np.stack([normalize_minmax(1.0 / row) for row in delta_l])


def combine_priority(importance_norm, robustness_norm,
                     alpha: float = 0.5, beta: float = 0.5) -> np.ndarray:
    """Priority = alpha*w + beta*(1 - r) on [0,1]-normalized inputs."""
    if not (alpha > 0 and beta > 0):
        raise ValueError(f"preference weights must be positive, got {alpha}, {beta}")
    if abs(alpha + beta - 1.0) > 1e-9:
        raise ValueError(f"preference weights must sum to 1, got {alpha + beta}")
    w = np.asarray(importance_norm, dtype=np.float64)
    r = np.asarray(robustness_norm, dtype=np.float64)
    if w.shape != r.shape:
        raise ValueError(f"score length mismatch: {w.shape} vs {r.shape}")
    return alpha * w + beta * (1.0 - r)


def teacher_priority(codec, image, budget: NoiseBudget, alpha: float = 0.5,
                     beta: float = 0.5, seed: int = 0) -> dict:
    """Full teacher pass for one image: encode, score, combine."""
    image = np.asarray(image, dtype=np.float64)
    features = codec.encode(image)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xF417)))
    imp = compute_importance(codec.decode_graph, features, image)
    rob = compute_robustness(codec.decode_graph, features, image, budget, rng)
    xi = combine_priority(imp.norm, rob.norm, alpha, beta)
    return {"features": features, "importance": imp, "robustness": rob,
            "priority": xi}
