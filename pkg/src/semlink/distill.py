"""Teacher-to-student transfer of the feature scoring algorithms.

Stage one runs the gradient and perturbation teachers over a corpus and
stores (feature tensor, normalized target vector) pairs. Stage two fits two
small pooled MLPs (one for importance, one for robustness) by plain MSE
regression. Stage three swaps the students in: scoring a tensor then needs
no decoder, no loss and no gradients, so it can happen before transmission.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .nn import ParamSet, Tensor, AdamState, adam_step, backward
from .nn import layers as L
from .nn import tensor as T
from .priority import NoiseBudget, combine_priority, compute_importance_batch, \
    compute_robustness_batch

__all__ = [
    "DistillDataset",
    "build_distill_dataset",
    "Student",
    "train_student",
    "student_infer",
    "default_pool_grid",
]

_MAGIC = b"DSET1"
_KINDS = ("importance", "robustness")
_SPLITS = ("all", "train", "holdout")


@dataclass
class DistillDataset:
    """(feature tensor, [0,1]^c target) pairs for one teacher algorithm."""
    features: np.ndarray
    targets: np.ndarray
    kind: str
    split: str = "all"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.kind not in _KINDS:
            raise ValueError(f"unknown target kind {self.kind!r}")
        if self.split not in _SPLITS:
            raise ValueError(f"unknown split tag {self.split!r}")
        if self.features.shape[0] != self.targets.shape[0]:
            raise ValueError("feature/target record counts differ")

    def __len__(self):
        return self.features.shape[0]

    def split_train_holdout(self, holdout_frac: float, seed: int):
        """Deterministic shuffled split into train/holdout datasets."""
        n = len(self)
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5B117)))
        order = rng.permutation(n)
        n_hold = max(1, int(round(holdout_frac * n)))
        ho, tr = order[:n_hold], order[n_hold:]
        return (DistillDataset(self.features[tr], self.targets[tr], self.kind, "train"),
                DistillDataset(self.features[ho], self.targets[ho], self.kind, "holdout"))

    def save(self, path):
        n, c, h, w = self.features.shape
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<BB", _KINDS.index(self.kind),
                                 _SPLITS.index(self.split)))
            fh.write(struct.pack("<IIII", n, c, h, w))
            for i in range(n):
                fh.write(np.ascontiguousarray(self.features[i], dtype="<f8").tobytes())
                fh.write(np.ascontiguousarray(self.targets[i], dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "DistillDataset":
        with open(path, "rb") as fh:
            if fh.read(len(_MAGIC)) != _MAGIC:
                raise ValueError(f"{path}: not a distillation dataset")
            kind_i, split_i = struct.unpack("<BB", fh.read(2))
            n, c, h, w = struct.unpack("<IIII", fh.read(16))
            feats = np.empty((n, c, h, w))
            targets = np.empty((n, c))
            rec = 8 * (c * h * w + c)
            for i in range(n):
                buf = fh.read(rec)
                if len(buf) != rec:
                    raise ValueError(f"{path}: truncated at record {i}")
                feats[i] = np.frombuffer(buf[:8 * c * h * w], "<f8").reshape(c, h, w)
                targets[i] = np.frombuffer(buf[8 * c * h * w:], "<f8")
        return cls(feats, targets, _KINDS[kind_i], _SPLITS[split_i])


def build_distill_dataset(codec, images, budget: NoiseBudget, seed: int = 0):
    """Run both teachers over a corpus; returns (importance_ds, robustness_ds)."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or images.shape[0] == 0:
        raise ValueError("expected a non-empty (N, C, H, W) image array")
    n = images.shape[0]
    shape = codec.geometry.feature_shape
    feats = np.empty((n,) + shape)
    w_targets = np.empty((n, shape[0]))
    r_targets = np.empty((n, shape[0]))
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0xD157, i)))
        a = codec.encode(images[i])
        feats[i] = a
        w_targets[i] = compute_importance(codec.decode_graph, a, images[i]).norm
        r_targets[i] = compute_robustness(codec.decode_graph, a, images[i],
                                          budget, rng).norm
    return (DistillDataset(feats, w_targets, "importance"),
            DistillDataset(feats, r_targets, "robustness"))


def default_pool_grid(feat_h: int, feat_w: int) -> tuple[int, int]:
    """Pooled grid for the student trunk: 5x5 maps when features are 8x8
    or larger, 2x2 at the desk scale."""
    return (5, 5) if min(feat_h, feat_w) >= 5 else (2, 2)


class Student:
    """Pooled-feature MLP emitting one [0,1] score per feature map."""

    def __init__(self, feature_shape, pool_hw=None, hidden: int | None = None,
                 seed: int = 0, kind: str = "importance"):
        c, h, w = feature_shape
        self.feature_shape = tuple(feature_shape)
        self.pool_hw = tuple(pool_hw) if pool_hw else default_pool_grid(h, w)
        self.hidden = hidden if hidden is not None else c
        self.kind = kind
        in_dim = c * self.pool_hw[0] * self.pool_hw[1]
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0x57D)))
        ps = ParamSet()
        ps.add("fc1/w", L.kaiming_uniform(rng, (in_dim, self.hidden), in_dim))
        ps.add("fc1/b", np.zeros(self.hidden))
        ps.add("fc2/w", L.kaiming_uniform(rng, (self.hidden, c), self.hidden))
        ps.add("fc2/b", np.zeros(c))
        self.params = ps

    def forward_graph(self, features: Tensor) -> Tensor:
        if features.data.shape[-3:] != self.feature_shape:
            raise ValueError(
                f"feature shape {features.data.shape} does not match "
                f"{self.feature_shape}")
        pooled = L.adaptive_avg_pool(features, *self.pool_hw)
        n = pooled.data.shape[0] if pooled.data.ndim == 4 else 1
        flat = T.reshape(pooled, (n, -1))
        hid = T.relu(L.dense(flat, self.params["fc1/w"], self.params["fc1/b"]))
        return T.sigmoid(L.dense(hid, self.params["fc2/w"], self.params["fc2/b"]))

    def predict(self, features) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        single = features.ndim == 3
        out = self.forward_graph(Tensor(features if not single else features[None])).data
        return out[0] if single else out

    def save(self, path):
        ps = ParamSet()
        for name, t in self.params.items():
            ps.add(name, t.data)
        c, h, w = self.feature_shape
        ps.add("_meta/arch", np.array([c, h, w, *self.pool_hw, self.hidden,
                                       _KINDS.index(self.kind)], dtype=np.float64))
        ps.save(path)

    @classmethod
    def load(cls, path) -> "Student":
        ps = ParamSet.load(path)
        c, h, w, ph, pw, hidden, kind_i = ps["_meta/arch"].data.astype(int)
        student = cls((int(c), int(h), int(w)), (int(ph), int(pw)),
                      int(hidden), kind=_KINDS[int(kind_i)])
        for name in student.params.names():
            student.params[name].data[...] = ps[name].data
        return student


def train_student(dataset: DistillDataset, epochs: int = 200, seed: int = 0,
                  holdout_frac: float = 0.1, lr: float = 3e-3,
                  batch_size: int = 64, pool_hw=None, hidden=None,
                  verbose: bool = False):
    """MSE regression of student scores onto teacher targets.

    Returns (student, report) with holdout MSE and mean per-image Spearman
    rank correlation to the teacher.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train a student on an empty dataset")
    if dataset.split == "all" and len(dataset) > 1:
        train_ds, hold_ds = dataset.split_train_holdout(holdout_frac, seed)
    else:
        train_ds, hold_ds = dataset, dataset
    student = Student(train_ds.features.shape[1:], pool_hw=pool_hw,
                      hidden=hidden, seed=seed, kind=dataset.kind)
    state = AdamState(student.params, lr=lr)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence((seed, 0x57E)))
    n = len(train_ds)
    history = []
    for epoch in range(epochs):
        order = shuffle_rng.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            out = student.forward_graph(Tensor(train_ds.features[idx]))
            loss = T.mse(out, Tensor(train_ds.targets[idx]))
            loss_val = loss.item()
            if not np.isfinite(loss_val):
                raise RuntimeError(f"student training diverged at epoch {epoch}")
            backward(loss)
            grads = {name: t.grad for name, t in student.params.items()}
            adam_step(student.params, grads, state)
            losses.append(loss_val)
        history.append((epoch, float(np.mean(losses))))
        if verbose and epoch % 20 == 0:
            print(f"epoch {epoch:3d}  loss {history[-1][1]:.6f}")

    pred = student.predict(hold_ds.features)
    holdout_mse = float(np.mean((pred - hold_ds.targets) ** 2))
    rhos = []
    for i in range(len(hold_ds)):
        rho = stats.spearmanr(pred[i], hold_ds.targets[i]).statistic
        if np.isfinite(rho):
            rhos.append(rho)
    report = {
        "train_records": int(n),
        "holdout_records": int(len(hold_ds)),
        "holdout_mse": holdout_mse,
        "holdout_spearman_mean": float(np.mean(rhos)) if rhos else float("nan"),
        "history": history,
    }
    return student, report


def student_infer(wnet: Student, rnet: Student, features,
                  alpha: float = 0.5, beta: float = 0.5) -> np.ndarray:
    """Priority from the student pair alone: no source image, no decoder,
    no gradients, so it runs before transmission."""
    w_hat = wnet.predict(features)
    r_hat = rnet.predict(features)
    return combine_priority(w_hat, r_hat, alpha, beta)
