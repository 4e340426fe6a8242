"""Auto-regressive CNN-LSTM channel model: architecture, forward, training."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTrainingSet, NonFiniteLoss, ShapeMismatch
from .ndautodiff import (
    AdamState,
    ParameterSet,
    Tensor,
    adam_update,
    backward,
    clip_grad_norm,
    conv2d_same,
    dense,
    lstm_step,
    maxpool_2x2,
    mse_loss,
    relu,
    reshape,
    sigmoid,
    strided_rows,
    tensor,
)


@dataclass(frozen=True)
class CnnLstmSpec:
    """Frame encoder: 2 blocks of (2 convs + pool), then two dense layers;
    LSTM over the per-frame codes; sigmoid triple from the final hidden state."""

    window: int = 10
    steps: int = 4
    channels: int = 3
    conv_blocks: int = 2
    convs_per_block: int = 2
    filters: int = 32
    dense_dims: tuple[int, int] = (256, 256)
    lstm_hidden: int = 64

    def __post_init__(self):
        if min(self.window, self.steps, self.channels, self.filters,
               self.lstm_hidden, *self.dense_dims) < 1:
            raise ValueError(f"bad spec {self}")

    def flatten_dim(self) -> int:
        edge = self.window
        for _ in range(self.conv_blocks):
            edge //= 2  # 2x2 pooling, floor semantics
        if edge < 1:
            raise ValueError(f"window {self.window} too small for {self.conv_blocks} pools")
        return edge * edge * self.filters


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def init_params(spec: CnnLstmSpec, seed: int, dtype=np.float32) -> ParameterSet:
    """Seeded Glorot-uniform weights, zero biases, forget-gate bias +1."""
    rng = np.random.default_rng(seed)
    t: dict[str, Tensor] = {}

    def add(name, data):
        t[name] = Tensor(np.asarray(data, dtype=dtype), requires_grad=True)

    cin = spec.channels
    layer = 0
    for _ in range(spec.conv_blocks):
        for _ in range(spec.convs_per_block):
            add(f"conv{layer}_k", _glorot(rng, (3, 3, cin, spec.filters), 9 * cin, 9 * spec.filters, dtype))
            add(f"conv{layer}_b", np.zeros(spec.filters))
            cin = spec.filters
            layer += 1

    in_dim = spec.flatten_dim()
    for i, out_dim in enumerate(spec.dense_dims):
        add(f"dense{i}_w", _glorot(rng, (out_dim, in_dim), in_dim, out_dim, dtype))
        add(f"dense{i}_b", np.zeros(out_dim))
        in_dim = out_dim

    k, d = spec.lstm_hidden, in_dim
    for gate in ("i", "f", "o", "g"):
        add(f"lstm_{gate}_w", _glorot(rng, (k, d + k), d + k, k, dtype))
        bias = np.zeros(k)
        if gate == "f":
            bias += 1.0  # keep early memory open
        add(f"lstm_{gate}_b", bias)

    add("out_w", _glorot(rng, (spec.channels, k), k, spec.channels, dtype))
    add("out_b", np.zeros(spec.channels))
    return ParameterSet(t)


def forward_batch(params: ParameterSet, spec: CnnLstmSpec, x: np.ndarray) -> Tensor:
    """Prediction tensor of shape (B, channels) for inputs (B, T, w, w, c)."""
    if x.ndim != 5 or x.shape[1:] != (spec.steps, spec.window, spec.window, spec.channels):
        raise ShapeMismatch(f"input {x.shape} vs spec {spec}")
    b, T, w, _, c = x.shape

    frames = tensor(x.reshape(b * T, w, w, c))
    layer = 0
    for _ in range(spec.conv_blocks):
        for _ in range(spec.convs_per_block):
            frames = relu(conv2d_same(frames, params[f"conv{layer}_k"], params[f"conv{layer}_b"]))
            layer += 1
        frames = maxpool_2x2(frames)

    flat = reshape(frames, (b * T, spec.flatten_dim()))
    flat = relu(dense(flat, params["dense0_w"], params["dense0_b"]))
    codes = dense(flat, params["dense1_w"], params["dense1_b"])

    gates = {g: (params[f"lstm_{g}_w"], params[f"lstm_{g}_b"]) for g in ("i", "f", "o", "g")}
    dtype = codes.dtype
    k = spec.lstm_hidden
    c_state = tensor(np.zeros((b, k), dtype=dtype))
    h_state = tensor(np.zeros((b, k), dtype=dtype))
    for t in range(T):
        x_t = strided_rows(codes, t, T)
        c_state, h_state = lstm_step(c_state, h_state, x_t, gates)

    return sigmoid(dense(h_state, params["out_w"], params["out_b"]))


def cnnlstm_forward(params: ParameterSet, spec: CnnLstmSpec, sample_input: np.ndarray) -> np.ndarray:
    """Channel triple in (0,1)^3 for a single (T, w, w, c) input."""
    out = forward_batch(params, spec, np.asarray(sample_input)[None])
    return out.data[0]


def predict_batch(params: ParameterSet, spec: CnnLstmSpec, x: np.ndarray,
                  chunk: int = 256) -> np.ndarray:
    """Inference over (n, T, w, w, c) without keeping the graph."""
    outs = []
    for i in range(0, x.shape[0], chunk):
        outs.append(forward_batch(params, spec, x[i : i + chunk]).data)
    return np.concatenate(outs, axis=0)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 1e-3
    max_epochs: int = 60
    patience: int = 10
    clip_norm: float | None = 5.0
    stop_train_mse: float | None = None


@dataclass
class TrainHistory:
    seed: int
    epochs_run: int = 0
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = math.inf


def _epoch_loss(params, spec, X, y, batch: int = 256) -> float:
    total = 0.0
    for i in range(0, X.shape[0], batch):
        pred = forward_batch(params, spec, X[i : i + batch]).data
        diff = pred.astype(np.float64) - y[i : i + batch]
        total += float((diff * diff).sum())
    return total / X.shape[0]


def train(
    train_X: np.ndarray,
    train_y: np.ndarray,
    spec: CnnLstmSpec,
    config: TrainConfig,
    seed: int,
    val_X: np.ndarray | None = None,
    val_y: np.ndarray | None = None,
    dtype=np.float32,
    log=None,
) -> tuple[ParameterSet, TrainHistory]:
    """Mini-batch Adam on MSE with early stopping on validation loss.

    Returns the best-validation parameters (final ones when no validation
    set is supplied). Deterministic given (seed, dtype, thread count).
    """
    if train_X.shape[0] == 0:
        raise EmptyTrainingSet("no training sequences")
    train_X = np.ascontiguousarray(train_X, dtype=dtype)
    train_y = np.ascontiguousarray(train_y, dtype=dtype)
    has_val = val_X is not None and val_X.shape[0] > 0

    params = init_params(spec, seed, dtype=dtype)
    state = AdamState()
    rng = np.random.default_rng(seed + 1)
    history = TrainHistory(seed=seed)
    best_params = params.copy()
    since_best = 0

    for epoch in range(config.max_epochs):
        order = rng.permutation(train_X.shape[0])
        epoch_sq_sum = 0.0
        for i in range(0, order.size, config.batch_size):
            idx = order[i : i + config.batch_size]
            params.zero_grads()
            pred = forward_batch(params, spec, train_X[idx])
            loss = mse_loss(pred, train_y[idx])
            loss_val = float(loss.data)
            if not math.isfinite(loss_val):
                raise NonFiniteLoss(
                    f"epoch {epoch}, batch at {i}: loss={loss_val}, "
                    f"param norm={params.l2_norm():.3e}"
                )
            backward(loss)
            grads = params.grads()
            if config.clip_norm is not None:
                clip_grad_norm(grads, config.clip_norm)
            adam_update(params, grads, state, lr=config.learning_rate)
            epoch_sq_sum += loss_val * idx.size

        train_loss = epoch_sq_sum / train_X.shape[0]
        history.train_loss.append(train_loss)
        history.epochs_run = epoch + 1

        if has_val:
            val_loss = _epoch_loss(params, spec, val_X, val_y)
            history.val_loss.append(val_loss)
            if val_loss < history.best_val_loss:
                history.best_val_loss = val_loss
                history.best_epoch = epoch
                best_params = params.copy()
                since_best = 0
            else:
                since_best += 1
        if log is not None:
            log(epoch, train_loss, history.val_loss[-1] if has_val else None)

        if config.stop_train_mse is not None and train_loss < config.stop_train_mse:
            break
        if has_val and since_best >= config.patience:
            break

    if not has_val:
        best_params = params
        history.best_epoch = history.epochs_run - 1
    return best_params, history
