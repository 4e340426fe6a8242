"""Dense tensors with reverse-mode differentiation.

Exactly the operations the channel model needs: 3x3 same-padded convolution,
2x2 max pooling, dense layers, ReLU/sigmooid/tanh, an LSTM step, MSE, Adam,
and central-difference gradient checking. Every operation records its parents
and a backward closure on the value itself; backward() walks that recorded
graph in reverse topological order. Arrays are float32 for training and
float64 wherever gradients are being verified.

Operations accept both unbatched inputs (H,W,C), (n,) and batched ones
(N,H,W,C), (N,n).
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .errors import NotScalarLoss, ShapeMismatch


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = parents
        self._backward: Callable[[np.ndarray], None] | None = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    # light operator sugar, mostly for tests
    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    def __sub__(self, other):
        other = _as_tensor(other, self.dtype)
        return add(self, scale(other, -1.0))

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self.dtype))


def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def tensor(data, requires_grad=False, dtype=None) -> Tensor:
    arr = np.asarray(data, dtype=dtype) if dtype is not None else np.asarray(data)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return Tensor(arr, requires_grad=requires_grad)


def topo_order(root: Tensor) -> list[Tensor]:
    """Recorded operations reachable from root, parents before children."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate .grad on every recorded tensor reachable from a scalar loss."""
    if loss.data.size != 1:
        raise NotScalarLoss(f"loss has shape {loss.data.shape}")
    order = topo_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# -- elementwise derivative rules (module-level so tests can mutate them) -----


def _relu_grad(data: np.ndarray) -> np.ndarray:
    return (data > 0).astype(data.dtype)


def _sigmoid_grad(out: np.ndarray) -> np.ndarray:
    return out * (1.0 - out)


def _tanh_grad(out: np.ndarray) -> np.ndarray:
    return 1.0 - out * out


# -- primitive operations ------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def back(g):
        a.accumulate(_unbroadcast(g, a.data.shape))
        b.accumulate(_unbroadcast(g, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=back)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"mul {a.data.shape} vs {b.data.shape}")
    out_data = a.data * b.data

    def back(g):
        a.accumulate(g * b.data)
        b.accumulate(g * a.data)

    return Tensor(out_data, parents=(a, b), backward=back)


def scale(a: Tensor, s: float) -> Tensor:
    def back(g):
        a.accumulate(g * s)

    return Tensor(a.data * s, parents=(a,), backward=back)


def sum_all(a: Tensor) -> Tensor:
    def back(g):
        a.accumulate(np.full_like(a.data, g))

    return Tensor(np.asarray(a.data.sum(), dtype=a.dtype), parents=(a,), backward=back)


def reshape(a: Tensor, shape) -> Tensor:
    def back(g):
        a.accumulate(g.reshape(a.data.shape))

    return Tensor(a.data.reshape(shape), parents=(a,), backward=back)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along the last axis."""
    if a.data.shape[:-1] != b.data.shape[:-1]:
        raise ShapeMismatch(f"concat {a.data.shape} vs {b.data.shape}")
    na = a.data.shape[-1]
    out_data = np.concatenate([a.data, b.data], axis=-1)

    def back(g):
        a.accumulate(g[..., :na])
        b.accumulate(g[..., na:])

    return Tensor(out_data, parents=(a, b), backward=back)


def strided_rows(a: Tensor, start: int, step: int) -> Tensor:
    """Rows start::step of a 2-d tensor (time-major batch slicing)."""
    out_data = a.data[start::step]

    def back(g):
        z = np.zeros_like(a.data)
        z[start::step] = g
        a.accumulate(z)

    return Tensor(out_data, parents=(a,), backward=back)


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0.0)

    def back(g):
        a.accumulate(g * _relu_grad(a.data))

    return Tensor(out_data, parents=(a,), backward=back)


def sigmoid(a: Tensor) -> Tensor:
    # stable two-branch logistic
    d = a.data
    e = np.exp(-np.abs(d))
    out_data = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(d.dtype)

    def back(g):
        a.accumulate(g * _sigmoid_grad(out_data))

    return Tensor(out_data, parents=(a,), backward=back)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def back(g):
        a.accumulate(g * _tanh_grad(out_data))

    return Tensor(out_data, parents=(a,), backward=back)


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map weight @ x + bias, with weight of shape (m, n)."""
    m, n = weight.data.shape
    single = x.data.ndim == 1
    xd = x.data[None, :] if single else x.data
    if xd.ndim != 2 or xd.shape[1] != n or bias.data.shape != (m,):
        raise ShapeMismatch(
            f"dense x{x.data.shape} weight{weight.data.shape} bias{bias.data.shape}"
        )
    out_data = xd @ weight.data.T + bias.data
    if single:
        out_data = out_data[0]

    def back(g):
        gd = g[None, :] if single else g
        weight.accumulate(gd.T @ xd)
        bias.accumulate(gd.sum(axis=0))
        gx = gd @ weight.data
        x.accumulate(gx[0] if single else gx)

    return Tensor(out_data, parents=(x, weight, bias), backward=back)


def conv2d_same(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """3x3 cross-correlation with zero padding 1, preserving H and W.

    x: (H, W, Cin) or (N, H, W, Cin); kernels: (3, 3, Cin, Cout); bias: (Cout,).
    """
    kd = kernels.data
    if kd.ndim != 4 or kd.shape[:2] != (3, 3):
        raise ShapeMismatch(f"kernels must be (3,3,Cin,Cout), got {kd.shape}")
    single = x.data.ndim == 3
    xd = x.data[None] if single else x.data
    if xd.ndim != 4 or xd.shape[3] != kd.shape[2]:
        raise ShapeMismatch(f"conv input {x.data.shape} vs kernels {kd.shape}")
    cout = kd.shape[3]
    if bias.data.shape != (cout,):
        raise ShapeMismatch(f"conv bias {bias.data.shape}, expected ({cout},)")
    n, h, w, cin = xd.shape

    xp = np.pad(xd, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = np.empty((n, h, w, 3, 3, cin), dtype=xd.dtype)
    for di in range(3):
        for dj in range(3):
            cols[:, :, :, di, dj, :] = xp[:, di : di + h, dj : dj + w, :]
    cols2 = cols.reshape(n * h * w, 9 * cin)
    kmat = kd.reshape(9 * cin, cout)
    out_data = (cols2 @ kmat + bias.data).reshape(n, h, w, cout)
    if single:
        out_data = out_data[0]

    def back(g):
        gd = (g[None] if single else g).reshape(n * h * w, cout)
        kernels.accumulate((cols2.T @ gd).reshape(3, 3, cin, cout))
        bias.accumulate(gd.sum(axis=0))
        gcols = (gd @ kmat.T).reshape(n, h, w, 3, 3, cin)
        gxp = np.zeros_like(xp)
        for di in range(3):
            for dj in range(3):
                gxp[:, di : di + h, dj : dj + w, :] += gcols[:, :, :, di, dj, :]
        gx = gxp[:, 1 : 1 + h, 1 : 1 + w, :]
        x.accumulate(gx[0] if single else gx)

    return Tensor(out_data, parents=(x, kernels, bias), backward=back)


def maxpool_2x2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; trailing odd row/column dropped.

    Gradient routes to the first occurrence of the window maximum, scanning
    the window row-major.
    """
    single = x.data.ndim == 3
    xd = x.data[None] if single else x.data
    if xd.ndim != 4:
        raise ShapeMismatch(f"maxpool input {x.data.shape}")
    n, h, w, c = xd.shape
    if h < 2 or w < 2:
        raise ShapeMismatch(f"maxpool needs H, W >= 2, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    xc = xd[:, : h2 * 2, : w2 * 2, :]
    windows = (
        xc.reshape(n, h2, 2, w2, 2, c).transpose(0, 1, 3, 2, 4, 5).reshape(n, h2, w2, 4, c)
    )
    arg = windows.argmax(axis=3)  # first max wins ties
    out_data = np.take_along_axis(windows, arg[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    if single:
        out_data = out_data[0]

    def back(g):
        gd = g[None] if single else g
        gw = np.zeros((n, h2, w2, 4, c), dtype=xd.dtype)
        np.put_along_axis(gw, arg[:, :, :, None, :], gd[:, :, :, None, :], axis=3)
        gx = np.zeros_like(xd)
        gx[:, : h2 * 2, : w2 * 2, :] = (
            gw.reshape(n, h2, w2, 2, 2, c).transpose(0, 1, 3, 2, 4, 5).reshape(n, h2 * 2, w2 * 2, c)
        )
        x.accumulate(gx[0] if single else gx)

    return Tensor(out_data, parents=(x,), backward=back)


def mse_loss(pred: Tensor, target) -> Tensor:
    """Mean over the batch of the squared euclidean norm across channels."""
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=pred.dtype)
    single = pred.data.ndim == 1
    pd = pred.data[None] if single else pred.data
    td = t[None] if t.ndim == 1 else t
    if pd.shape != td.shape:
        raise ShapeMismatch(f"mse pred {pred.data.shape} vs target {t.shape}")
    n = pd.shape[0]
    diff = pd - td
    out_data = np.asarray((diff * diff).sum() / n, dtype=pred.dtype)

    def back(g):
        gp = (2.0 / n) * diff * g
        pred.accumulate(gp[0] if single else gp)

    return Tensor(out_data, parents=(pred,), backward=back)


def lstm_step(prev_c: Tensor, prev_h: Tensor, x: Tensor, gates: dict) -> tuple[Tensor, Tensor]:
    """One LSTM update: returns (c, h).

    `gates` maps "i", "f", "o", "g" to (weight, bias) pairs; every weight has
    shape (k, d + k) and acts on the concatenation [x, prev_h].
    """
    z = concat_cols(x, prev_h)
    i = sigmoid(dense(z, *gates["i"]))
    f = sigmoid(dense(z, *gates["f"]))
    o = sigmoid(dense(z, *gates["o"]))
    g = tanh(dense(z, *gates["g"]))
    c = add(mul(f, prev_c), mul(i, g))
    h = mul(o, tanh(c))
    return c, h


# -- parameters and the optimizer ---------------------------------------------


class ParameterSet:
    """Named trainable tensors."""

    def __init__(self, tensors: dict[str, Tensor]):
        self._tensors = dict(tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def grads(self) -> dict[str, np.ndarray]:
        return {
            name: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for name, t in self._tensors.items()
        }

    def zero_grads(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def astype(self, dtype) -> "ParameterSet":
        return ParameterSet(
            {n: Tensor(t.data.astype(dtype), requires_grad=True) for n, t in self.items()}
        )

    def copy(self) -> "ParameterSet":
        return ParameterSet(
            {n: Tensor(t.data.copy(), requires_grad=True) for n, t in self.items()}
        )

    def l2_norm(self) -> float:
        return math.sqrt(sum(float((t.data.astype(np.float64) ** 2).sum()) for t in self._tensors.values()))


class AdamState:
    def __init__(self):
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0


def adam_update(
    params: ParameterSet,
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam step, in place."""
    state.t += 1
    t = state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.data.shape:
            raise ShapeMismatch(f"adam grad {g.shape} vs param {p.data.shape} for {name}")
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        mhat = m / (1.0 - beta1 ** t)
        vhat = v / (1.0 - beta2 ** t)
        p.data -= lr * mhat / (np.sqrt(vhat) + eps)


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so the global L2 norm is at most max_norm."""
    total = math.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values()))
    if total > max_norm and total > 0:
        factor = max_norm / total
        for g in grads.values():
            g *= factor
    return total


def grad_check(model_forward, params: ParameterSet, inputs, h: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences.

    model_forward(params, inputs) must build and return a scalar loss Tensor.
    Relative error per coordinate is |ga - gn| / max(1e-12, |ga| + |gn|).
    """
    params.zero_grads()
    loss = model_forward(params, inputs)
    backward(loss)
    analytic = {name: np.array(g, copy=True) for name, g in params.grads().items()}

    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        ga_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = float(model_forward(params, inputs).data)
            flat[i] = orig - h
            lm = float(model_forward(params, inputs).data)
            flat[i] = orig
            gn = (lp - lm) / (2.0 * h)
            ga = float(ga_flat[i])
            rel = abs(ga - gn) / max(1e-12, abs(ga) + abs(gn))
            worst = max(worst, rel)
    return worst
