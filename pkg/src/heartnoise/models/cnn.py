"""Three-block convolutional classifier in plain numpy (float64).

Architecture, for an input of shape [freq, frames, 1]::

    conv3x3(16, same) -> ReLU -> maxpool2x2 -> dropout(0.5)
    conv3x3(32, same) -> ReLU -> maxpool2x2 -> dropout(0.5)
    conv3x3(64, same) -> ReLU -> maxpool2x2 -> dropout(0.5)
    flatten -> dense(100) -> ReLU -> dropout(0.5) -> dense(2) -> softmax

Pools floor odd sizes. Dropout is inverted (scaled by 1/(1-p) in training)
so inference needs no rescale. Class index 0 is normal, 1 is abnormal.
"""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DegenerateLabelsError, DivergenceError, InvalidArgumentError, ShapeError

log = logging.getLogger(__name__)

CONV_CHANNELS = (16, 32, 64)
DENSE_UNITS = 100
N_CLASSES = 2
DROPOUT = 0.5
CONV_LAYERS = ("conv1", "conv2", "conv3")
DENSE_LAYERS = ("dense1", "dense2")
ADAM_BETA1, ADAM_BETA2, ADAM_EPS = 0.9, 0.999, 1e-8
FREEZE_MODES = ("none", "all_but_dense")


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    freeze: str = "none"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be positive")
        if self.freeze not in FREEZE_MODES:
            raise InvalidArgumentError(f"freeze must be one of {FREEZE_MODES}")
        if self.batch_size < 1 or self.epochs < 0:
            raise InvalidArgumentError("batch_size must be >= 1 and epochs >= 0")


@dataclass(eq=False)
class CnnModel:
    input_shape: Tuple[int, int]
    params: Dict[str, np.ndarray]
    feature_kind: str = ""
    norm_mean: float = 0.0
    norm_std: float = 1.0
    norm_fitted: bool = False
    adam_m: Dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: Dict[str, np.ndarray] = field(default_factory=dict)
    adam_t: int = 0
    meta: dict = field(default_factory=dict)

    def param_names(self):
        return list(self.params)

    def layer_of(self, name: str) -> str:
        return name.rsplit("_", 1)[0]

    def trainable(self, freeze: str):
        skip = set(CONV_LAYERS) if freeze == "all_but_dense" else set()
        return [n for n in self.params if self.layer_of(n) not in skip]

    def reset_optimizer(self):
        self.adam_m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.adam_v = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.adam_t = 0

    def copy(self) -> "CnnModel":
        return copy.deepcopy(self)


def pooled_shape(freq: int, frames: int) -> Tuple[int, int]:
    for _ in CONV_CHANNELS:
        freq, frames = freq // 2, frames // 2
    return freq, frames


def _input_hw(input_shape: Sequence[int]) -> Tuple[int, int]:
    shape = tuple(int(s) for s in input_shape)
    if len(shape) == 3 and shape[2] == 1:
        shape = shape[:2]
    if len(shape) != 2:
        raise ShapeError(f"input shape must be [freq, frames] or [freq, frames, 1], got {input_shape}")
    return shape


def cnn_init(input_shape: Sequence[int], seed: int = 0, feature_kind: str = "") -> CnnModel:
    """Kaiming-uniform weights (ReLU gain), zero biases, deterministic per seed."""
    freq, frames = _input_hw(input_shape)
    if freq < 8 or frames < 8:
        raise ShapeError(f"input {freq}x{frames} is too small for three 2x2 pools (need >= 8x8)")
    rng = np.random.Generator(np.random.PCG64(seed))

    def kaiming(shape, fan_in):
        bound = np.sqrt(6.0 / fan_in)
        return rng.uniform(-bound, bound, size=shape)

    params: Dict[str, np.ndarray] = {}
    c_in = 1
    for name, c_out in zip(CONV_LAYERS, CONV_CHANNELS):
        params[f"{name}_W"] = kaiming((c_out, c_in, 3, 3), c_in * 9)
        params[f"{name}_b"] = np.zeros(c_out)
        c_in = c_out
    h, w = pooled_shape(freq, frames)
    flat = h * w * CONV_CHANNELS[-1]
    params["dense1_W"] = kaiming((flat, DENSE_UNITS), flat)
    params["dense1_b"] = np.zeros(DENSE_UNITS)
    params["dense2_W"] = kaiming((DENSE_UNITS, N_CLASSES), DENSE_UNITS)
    params["dense2_b"] = np.zeros(N_CLASSES)
    m = CnnModel((freq, frames), params, feature_kind)
    m.reset_optimizer()
    return m


# -- layers -----------------------------------------------------------------

def _conv_forward(x, W, b):
    B, C, H, Wd = x.shape
    F = W.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))  # B, C, H, W, 3, 3
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * H * Wd, C * 9)
    out = cols @ W.reshape(F, -1).T + b
    return out.reshape(B, H, Wd, F).transpose(0, 3, 1, 2), cols


def _conv_backward(dout, cols, x_shape, W, need_dx=True):
    B, C, H, Wd = x_shape
    F = W.shape[0]
    d2 = dout.transpose(0, 2, 3, 1).reshape(-1, F)
    dW = (d2.T @ cols).reshape(W.shape)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dW, db
    dcols = np.ascontiguousarray(
        (d2 @ W.reshape(F, -1)).reshape(B, H, Wd, C, 3, 3).transpose(4, 5, 0, 3, 1, 2)
    )
    dxp = np.zeros((B, C, H + 2, Wd + 2))
    for i in range(3):
        for j in range(3):
            dxp[:, :, i:i + H, j:j + Wd] += dcols[i, j]
    return dxp[:, :, 1:-1, 1:-1], dW, db


def _pool_forward(x):
    B, C, H, W = x.shape
    Ho, Wo = H // 2, W // 2
    blocks = (
        x[:, :, : 2 * Ho, : 2 * Wo]
        .reshape(B, C, Ho, 2, Wo, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(B, C, Ho, Wo, 4)
    )
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _pool_backward(dout, idx, x_shape):
    B, C, H, W = x_shape
    Ho, Wo = H // 2, W // 2
    dblocks = np.zeros((B, C, Ho, Wo, 4))
    np.put_along_axis(dblocks, idx[..., None], dout[..., None], axis=-1)
    dx = np.zeros(x_shape)
    dx[:, :, : 2 * Ho, : 2 * Wo] = (
        dblocks.reshape(B, C, Ho, Wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, 2 * Ho, 2 * Wo)
    )
    return dx


def _dropout_mask(shape, rng, p=DROPOUT):
    return (rng.random(shape) >= p) / (1.0 - p)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


# -- forward / backward ----------------------------------------------------

def _as_batch(m: CnnModel, x) -> np.ndarray:
    x = np.asarray(getattr(x, "values", x), dtype=np.float64)
    if x.ndim == 4 and x.shape[-1] == 1:
        x = x[..., 0]
    if x.ndim == 3 and x.shape[1:] == tuple(m.input_shape) and x.shape[0] > 0:
        pass
    elif x.ndim == 2 and x.shape == tuple(m.input_shape):
        x = x[None]
    else:
        raise ShapeError(f"model expects input {tuple(m.input_shape)}, got {x.shape}")
    return ((x - m.norm_mean) / m.norm_std)[:, None, :, :]


def _forward(m: CnnModel, x: np.ndarray, rng: Optional[np.random.Generator]):
    """Logits for a standardized NCHW batch; ``rng`` enables dropout."""
    p = m.params
    cache = []
    h = x
    for name in CONV_LAYERS:
        z, cols = _conv_forward(h, p[f"{name}_W"], p[f"{name}_b"])
        a = np.maximum(z, 0.0)
        pooled, idx = _pool_forward(a)
        mask = _dropout_mask(pooled.shape, rng) if rng is not None else None
        out = pooled * mask if mask is not None else pooled
        cache.append((h.shape, cols, z, a.shape, idx, mask))
        h = out
    conv_shape = h.shape
    flat = h.reshape(h.shape[0], -1)
    z1 = flat @ p["dense1_W"] + p["dense1_b"]
    a1 = np.maximum(z1, 0.0)
    mask1 = _dropout_mask(a1.shape, rng) if rng is not None else None
    d1 = a1 * mask1 if mask1 is not None else a1
    logits = d1 @ p["dense2_W"] + p["dense2_b"]
    return logits, (cache, conv_shape, flat, z1, mask1, d1)


def _backward(m: CnnModel, dlogits, fwd, need_conv: bool = True) -> Dict[str, np.ndarray]:
    p = m.params
    cache, conv_shape, flat, z1, mask1, d1 = fwd
    g: Dict[str, np.ndarray] = {}
    g["dense2_W"] = d1.T @ dlogits
    g["dense2_b"] = dlogits.sum(axis=0)
    dd1 = dlogits @ p["dense2_W"].T
    if mask1 is not None:
        dd1 = dd1 * mask1
    dz1 = dd1 * (z1 > 0)
    g["dense1_W"] = flat.T @ dz1
    g["dense1_b"] = dz1.sum(axis=0)
    if not need_conv:
        return g
    dh = (dz1 @ p["dense1_W"].T).reshape(conv_shape)
    for name, (in_shape, cols, z, a_shape, idx, mask) in zip(reversed(CONV_LAYERS), reversed(cache)):
        if mask is not None:
            dh = dh * mask
        da = _pool_backward(dh, idx, a_shape)
        dz = da * (z > 0)
        dh, g[f"{name}_W"], g[f"{name}_b"] = _conv_backward(
            dz, cols, in_shape, p[f"{name}_W"], need_dx=name != CONV_LAYERS[0]
        )
    return g


def _class_index(y) -> np.ndarray:
    y = np.asarray(y)
    if np.all(np.isin(y, (-1, 1))):
        return (y > 0).astype(int)
    if np.all(np.isin(y, (0, 1))):
        return y.astype(int)
    raise InvalidArgumentError("labels must be in {-1, +1} or {0, 1}")


def loss_and_grads(m: CnnModel, X, y, seed: Optional[int] = None, need_conv: bool = True):
    """Mean cross-entropy and its gradient for every parameter.

    With ``seed`` set, dropout is active with masks drawn from that seed;
    with ``seed=None`` the network runs in inference mode.
    """
    x = _as_batch(m, X)
    t = _class_index(y)
    rng = np.random.Generator(np.random.PCG64(seed)) if seed is not None else None
    logits, fwd = _forward(m, x, rng)
    logp = _log_softmax(logits)
    B = x.shape[0]
    loss = float(-logp[np.arange(B), t].mean())
    dlogits = np.exp(logp)
    dlogits[np.arange(B), t] -= 1.0
    dlogits /= B
    return loss, _backward(m, dlogits, fwd, need_conv)


def cnn_logits(m: CnnModel, x, seed: Optional[int] = None) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(seed)) if seed is not None else None
    logits, _ = _forward(m, _as_batch(m, x), rng)
    return logits


def cnn_forward(m: CnnModel, x, mode: str = "infer", seed: Optional[int] = None) -> np.ndarray:
    """Class probabilities [normal, abnormal].

    ``mode="train"`` applies dropout with masks drawn from ``seed``. A single
    input returns a length-2 vector, a batch returns [batch, 2].
    """
    if mode not in ("infer", "train"):
        raise InvalidArgumentError("mode must be 'infer' or 'train'")
    single = np.ndim(getattr(x, "values", x)) == 2 or (
        np.ndim(getattr(x, "values", x)) == 3 and np.shape(getattr(x, "values", x))[-1] == 1
    )
    if mode == "train" and seed is None:
        seed = 0
    probs = softmax(cnn_logits(m, x, seed if mode == "train" else None))
    return probs[0] if single else probs


def adam_update(m: CnnModel, grads: Dict[str, np.ndarray], lr: float, names) -> None:
    m.adam_t += 1
    t = m.adam_t
    c1 = 1.0 - ADAM_BETA1**t
    c2 = 1.0 - ADAM_BETA2**t
    for k in names:
        g = grads[k]
        m.adam_m[k] = ADAM_BETA1 * m.adam_m[k] + (1.0 - ADAM_BETA1) * g
        m.adam_v[k] = ADAM_BETA2 * m.adam_v[k] + (1.0 - ADAM_BETA2) * g * g
        m.params[k] = m.params[k] - lr * (m.adam_m[k] / c1) / (np.sqrt(m.adam_v[k] / c2) + ADAM_EPS)


def cnn_train_step(m: CnnModel, batch, cfg: TrainConfig, seed: Optional[int] = None) -> float:
    """One Adam step on ``batch = (X, y)``; returns the batch's mean cross-entropy.

    Dropout masks come from ``seed`` (defaults to ``cfg.seed``). Parameters
    of frozen layers, and their optimizer state, are left untouched.
    """
    X, y = batch
    if len(y) == 0:
        raise InvalidArgumentError("empty batch")
    if not m.adam_m:
        m.reset_optimizer()
    names = m.trainable(cfg.freeze)
    need_conv = cfg.freeze != "all_but_dense"
    loss, grads = loss_and_grads(m, X, y, cfg.seed if seed is None else seed, need_conv)
    if not np.isfinite(loss):
        raise DivergenceError(
            f"non-finite loss {loss} at Adam step {m.adam_t + 1} (lr={cfg.learning_rate}); "
            "check feature scaling or lower the learning rate"
        )
    adam_update(m, grads, cfg.learning_rate, names)
    return loss


def fit_normalization(m: CnnModel, X: np.ndarray) -> None:
    X = np.asarray(X, dtype=np.float64)
    m.norm_mean = float(X.mean())
    std = float(X.std())
    m.norm_std = std if std > 0 else 1.0
    m.norm_fitted = True


def cnn_train(m: CnnModel, X, y, cfg: TrainConfig, fit_norm: Optional[bool] = None, progress=None) -> CnnModel:
    """Train a copy of ``m`` for ``cfg.epochs`` epochs and return it.

    Each epoch visits a seeded permutation of the data in mini-batches; the
    Adam state is reset at the start. Dataset-level mean/std are fitted on
    ``X`` when the model has none yet (or when ``fit_norm`` is true), so a
    fine-tune run keeps the statistics of the pretraining data.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    cls = _class_index(y)
    if np.unique(cls).size < 2:
        raise DegenerateLabelsError("training data must contain both classes")
    out = m.copy()
    if fit_norm or (fit_norm is None and not out.norm_fitted):
        fit_normalization(out, X)
    out.reset_optimizer()
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    n = X.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            step_seed = int(rng.integers(0, 2**63 - 1))
            total += cnn_train_step(out, (X[idx], y[idx]), cfg, seed=step_seed) * idx.size
        if progress is not None:
            progress(epoch + 1, total / n)
        log.debug("epoch %d loss=%.6f", epoch + 1, total / n)
    return out


def cnn_predict_proba(m: CnnModel, X, batch_size: int = 64) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return np.concatenate(
        [softmax(cnn_logits(m, X[i:i + batch_size])) for i in range(0, X.shape[0], batch_size)]
    ) if X.shape[0] else np.zeros((0, N_CLASSES))
