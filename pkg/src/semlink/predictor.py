"""LSTM one-step-ahead channel forecasting with recursive multi-step rollout.

The transmitter keeps a window of t1 sampled coefficients, forecasts the
next one, rolls the window forward with its own prediction and repeats
until the c future slot coefficients are filled. Only the sampled history
ever crosses the interface, so the true future cannot leak in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import SosConfig, _batch_sos
from .nn import ParamSet, Tensor, AdamState, adam_step, backward
from .nn import layers as L
from .nn import tensor as T

__all__ = [
    "HistoryWindow",
    "Predictor",
    "rolling_forecast",
    "rolling_forecast_batch",
    "make_window_dataset",
    "train_predictor",
    "one_step_nmse",
    "rolling_eval",
]


@dataclass
class HistoryWindow:
    """t1 consecutive complex CSI samples; end_index is the absolute sample
    index of the newest entry."""
    values: np.ndarray
    end_index: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.ndim != 1:
            raise ValueError("history window must be a 1-D complex sequence")

    def __len__(self):
        return len(self.values)

    def advanced(self, prediction: complex) -> "HistoryWindow":
        """Drop the oldest sample, append the prediction."""
        return HistoryWindow(np.append(self.values[1:], prediction),
                             self.end_index + 1)


def _to_real_seq(windows: np.ndarray) -> np.ndarray:
    """(N, t) complex -> (N, t, 2) stacked (Re, Im)."""
    return np.stack([windows.real, windows.imag], axis=-1)


class Predictor:
    """Two stacked LSTM layers (hidden 50 each) + dense head to (Re, Im)."""

    def __init__(self, t1: int = 32, hidden: int = 50, seed: int = 0):
        self.t1 = t1
        self.hidden = hidden
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0x757)))
        ps = ParamSet()
        for layer, in_dim in (("lstm1", 2), ("lstm2", hidden)):
            ps.add(f"{layer}/wx", L.uniform_fan_in(rng, (in_dim, 4 * hidden), in_dim))
            ps.add(f"{layer}/wh", L.uniform_fan_in(rng, (hidden, 4 * hidden), hidden))
            b = np.zeros(4 * hidden)
            b[hidden:2 * hidden] = 1.0  # open forget gates at init
            ps.add(f"{layer}/b", b)
        ps.add("head/w", L.uniform_fan_in(rng, (hidden, 2), hidden))
        ps.add("head/b", np.zeros(2))
        self.params = ps

    def _cell_params(self, layer):
        return {"wx": self.params[f"{layer}/wx"],
                "wh": self.params[f"{layer}/wh"],
                "b": self.params[f"{layer}/b"]}

    def forward_graph(self, seq: np.ndarray) -> Tensor:
        """(N, t, 2) real sequence -> (N, 2) prediction, building the tape."""
        n, t, _ = seq.shape
        hsz = self.hidden
        zeros = Tensor(np.zeros((n, hsz)))
        h1 = c1 = h2 = c2 = zeros
        p1, p2 = self._cell_params("lstm1"), self._cell_params("lstm2")
        for step in range(t):
            x_t = Tensor(seq[:, step, :])
            h1, c1 = L.lstm_cell_step(x_t, (h1, c1), p1)
            h2, c2 = L.lstm_cell_step(h1, (h2, c2), p2)
        return L.dense(h2, self.params["head/w"], self.params["head/b"])

    def _forward_np(self, seq: np.ndarray) -> np.ndarray:
        """Tape-free twin of forward_graph for inference."""
        n, t, _ = seq.shape
        hsz = self.hidden
        state = [(np.zeros((n, hsz)), np.zeros((n, hsz))) for _ in range(2)]
        mats = [(self.params[f"{l}/wx"].data, self.params[f"{l}/wh"].data,
                 self.params[f"{l}/b"].data) for l in ("lstm1", "lstm2")]
        x = None
        for step in range(t):
            x = seq[:, step, :]
            for li, (wx, wh, b) in enumerate(mats):
                h_prev, c_prev = state[li]
                z = x @ wx + h_prev @ wh + b
                i = _sigm(z[:, :hsz])
                f = _sigm(z[:, hsz:2 * hsz])
                g = np.tanh(z[:, 2 * hsz:3 * hsz])
                o = _sigm(z[:, 3 * hsz:])
                c = f * c_prev + i * g
                h = o * np.tanh(c)
                state[li] = (h, c)
                x = h
        return x @ self.params["head/w"].data + self.params["head/b"].data

    def predict_batch(self, windows: np.ndarray) -> np.ndarray:
        """(N, t1) complex windows -> (N,) complex one-step predictions."""
        windows = np.asarray(windows, dtype=np.complex128)
        if windows.shape[1] != self.t1:
            raise ValueError(f"window length {windows.shape[1]} != t1 = {self.t1}")
        out = self._forward_np(_to_real_seq(windows))
        return out[:, 0] + 1j * out[:, 1]

    def predict_one_step(self, window: HistoryWindow) -> complex:
        if len(window) != self.t1:
            raise ValueError(f"window length {len(window)} != t1 = {self.t1}")
        return complex(self.predict_batch(window.values[None])[0])

    def save(self, path):
        ps = ParamSet()
        for name, t in self.params.items():
            ps.add(name, t.data)
        ps.add("_meta/arch", np.array([self.t1, self.hidden], dtype=np.float64))
        ps.save(path)

    @classmethod
    def load(cls, path) -> "Predictor":
        ps = ParamSet.load(path)
        t1, hidden = ps["_meta/arch"].data.astype(int)
        pred = cls(t1=int(t1), hidden=int(hidden))
        for name in pred.params.names():
            pred.params[name].data[...] = ps[name].data
        return pred


def _sigm(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def rolling_forecast(window: HistoryWindow, t2: int, predictor) -> np.ndarray:
    """Recursive t2-step forecast; each prediction re-enters the window."""
    if t2 < 1:
        raise ValueError("t2 must be >= 1")
    out = np.empty(t2, dtype=np.complex128)
    cur = window
    for step in range(t2):
        pred = predictor.predict_one_step(cur)
        out[step] = pred
        cur = cur.advanced(pred)
    return out


def rolling_forecast_batch(windows: np.ndarray, t2: int,
                           predictor: Predictor) -> np.ndarray:
    """(N, t1) windows -> (N, t2) forecasts, batched across windows."""
    windows = np.asarray(windows, dtype=np.complex128).copy()
    n = windows.shape[0]
    out = np.empty((n, t2), dtype=np.complex128)
    for step in range(t2):
        pred = predictor.predict_batch(windows)
        out[:, step] = pred
        windows = np.concatenate([windows[:, 1:], pred[:, None]], axis=1)
    return out


# ---------------------------------------------------------------------------
# training and evaluation
# ---------------------------------------------------------------------------

def make_window_dataset(config: SosConfig, t1: int, num_sequences: int,
                        seq_len: int, seed: int, stride: int = 1,
                        future: int = 1):
    """Slice (window, future) pairs from independent fading realizations.

    Returns (windows (N, t1), futures (N, future), seq_ids (N,)).
    """
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, seed, 0xDA7A)))
    traces = _batch_sos(config, rng, num_sequences, seq_len)
    windows, futures, seq_ids = [], [], []
    last = seq_len - t1 - future
    for s in range(num_sequences):
        for i in range(0, last + 1, stride):
            windows.append(traces[s, i:i + t1])
            futures.append(traces[s, i + t1:i + t1 + future])
            seq_ids.append(s)
    return (np.array(windows), np.array(futures), np.array(seq_ids))


def one_step_nmse(predictor: Predictor, windows: np.ndarray,
                  targets: np.ndarray) -> float:
    pred = predictor.predict_batch(windows)
    t = targets[:, 0] if targets.ndim == 2 else targets
    return float(np.mean(np.abs(pred - t) ** 2) / np.mean(np.abs(t) ** 2))


def rolling_eval(predictor: Predictor, windows: np.ndarray,
                 futures: np.ndarray) -> dict:
    """Compare the rolling forecast against the persistence baseline
    (repeat the newest observed sample) on held-out windows."""
    t2 = futures.shape[1]
    pred = rolling_forecast_batch(windows, t2, predictor)
    persist = np.repeat(windows[:, -1][:, None], t2, axis=1)
    denom = np.mean(np.abs(futures) ** 2)
    err_pred = np.abs(pred - futures) ** 2
    err_persist = np.abs(persist - futures) ** 2
    nmse_window_pred = err_pred.mean(axis=1) / denom
    nmse_window_persist = err_persist.mean(axis=1) / denom
    return {
        "horizon_nmse": (err_pred.mean(axis=0) / denom).tolist(),
        "horizon_nmse_persistence": (err_persist.mean(axis=0) / denom).tolist(),
        "nmse": float(err_pred.mean() / denom),
        "nmse_persistence": float(err_persist.mean() / denom),
        "win_fraction": float(np.mean(nmse_window_pred < nmse_window_persist)),
        "n_windows": int(windows.shape[0]),
    }


def train_predictor(config: SosConfig, t1: int = 32, num_sequences: int = 36,
                    seq_len: int = 600, epochs: int = 6, seed: int = 0,
                    batch_size: int = 256, lr: float = 3e-3, stride: int = 2,
                    holdout_frac: float = 0.2, hidden: int = 50,
                    verbose: bool = False):
    """Supervised one-step regression on SOS traces; held-out realizations
    are never seen in training. Returns (predictor, report)."""
    windows, futures, seq_ids = make_window_dataset(
        config, t1, num_sequences, seq_len, seed, stride=stride)
    n_hold = max(1, int(round(holdout_frac * num_sequences)))
    hold_mask = seq_ids >= (num_sequences - n_hold)
    tr_w, tr_t = windows[~hold_mask], futures[~hold_mask, 0]
    ho_w, ho_t = windows[hold_mask], futures[hold_mask, 0]

    predictor = Predictor(t1=t1, hidden=hidden, seed=seed)
    state = AdamState(predictor.params, lr=lr)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence((seed, 0x7E4)))

    seq_real = _to_real_seq(tr_w)
    tgt_real = np.stack([tr_t.real, tr_t.imag], axis=-1)
    n = len(tr_w)
    history = []
    for epoch in range(epochs):
        order = shuffle_rng.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            out = predictor.forward_graph(seq_real[idx])
            loss = T.mse(out, Tensor(tgt_real[idx]))
            loss_val = loss.item()
            if not np.isfinite(loss_val):
                raise RuntimeError(
                    f"predictor training diverged at epoch {epoch} (loss={loss_val})")
            backward(loss)
            grads = {name: t.grad for name, t in predictor.params.items()}
            adam_step(predictor.params, grads, state)
            losses.append(loss_val)
        history.append((epoch, float(np.mean(losses))))
        if verbose:
            print(f"epoch {epoch:3d}  loss {history[-1][1]:.6f}")

    report = {
        "train_pairs": int(n),
        "holdout_pairs": int(len(ho_w)),
        "holdout_one_step_nmse": one_step_nmse(predictor, ho_w, ho_t),
        "history": history,
    }
    return predictor, report
