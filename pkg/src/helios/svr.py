"""Epsilon-insensitive support vector regression trained by SMO.

The dual is solved over 2n box-constrained variables a = [alpha, alpha*] with
signs z = [+1, -1] and a single equality constraint sum(z * a) = 0, picking
the maximal-KKT-violating pair each iteration until the violation gap drops
below tol. Features and labels are standardized internally; epsilon and C are
expressed in standardized label units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyTrainingSet, NonFiniteInput


@dataclass(frozen=True)
class SvrSpec:
    C: float = 10.0
    epsilon: float = 0.01
    kernel: str = "rbf"  # "rbf" | "linear"
    gamma: float | None = None  # None: 1 / feature_count
    tol: float = 1e-3
    max_passes: int = 200_000

    def __post_init__(self):
        if self.C <= 0 or self.epsilon <= 0 or self.tol <= 0:
            raise ValueError(f"bad SVR spec {self}")
        if self.kernel not in ("rbf", "linear"):
            raise ValueError(f"unknown kernel {self.kernel!r}")


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray  # population std; zero-variance features pass through

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        if X.shape[0] < 1:
            raise EmptyTrainingSet("standardizer needs at least one row")
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale == 0.0, 1.0, scale)
        return cls(mean, scale)

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale

    def invert(self, X: np.ndarray) -> np.ndarray:
        return X * self.scale + self.mean


def standardize_fit(X) -> Standardizer:
    return Standardizer.fit(np.asarray(X, dtype=np.float64))


def _kernel_matrix(spec: SvrSpec, A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    if spec.kernel == "linear":
        return A @ B.T
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * (A @ B.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass
class SvrModel:
    spec: SvrSpec
    gamma: float
    support_vectors: np.ndarray  # (m, d) standardized
    coef: np.ndarray  # alpha - alpha* for each support vector
    bias: float
    feature_standardizer: Standardizer
    label_standardizer: Standardizer
    dual_objective: float = 0.0
    iterations: int = 0

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.feature_standardizer.mean.size:
            raise DimensionMismatch(
                f"query dim {X.shape[1]} vs trained {self.feature_standardizer.mean.size}"
            )
        Xs = self.feature_standardizer.apply(X)
        if self.coef.size:
            k = _kernel_matrix(self.spec, Xs, self.support_vectors, self.gamma)
            u = k @ self.coef + self.bias
        else:
            u = np.full(Xs.shape[0], self.bias)
        return self.label_standardizer.invert(u)


def svr_fit(X, y, spec: SvrSpec = SvrSpec()) -> SvrModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyTrainingSet(f"X shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise ValueError(f"y shape {y.shape} vs X {X.shape}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise NonFiniteInput("features/labels contain NaN or inf")

    n, d = X.shape
    fstd = Standardizer.fit(X)
    lstd = Standardizer.fit(y[:, None])
    Xs = fstd.apply(X)
    ys = lstd.apply(y[:, None])[:, 0]
    gamma = spec.gamma if spec.gamma is not None else 1.0 / d

    K = _kernel_matrix(spec, Xs, Xs, gamma)
    C, eps, tol = spec.C, spec.epsilon, spec.tol

    # 2n variables: a[:n] = alpha (z=+1), a[n:] = alpha* (z=-1)
    z = np.concatenate([np.ones(n), -np.ones(n)])
    p = np.concatenate([eps - ys, eps + ys])
    a = np.zeros(2 * n)
    G = p.copy()  # gradient of 1/2 a'Qa + p'a at a=0
    idx = np.concatenate([np.arange(n), np.arange(n)])

    iterations = 0
    while iterations < spec.max_passes:
        zg = -z * G
        in_up = np.where(z > 0, a < C, a > 0)
        in_low = np.where(z > 0, a > 0, a < C)
        up_vals = np.where(in_up, zg, -np.inf)
        low_vals = np.where(in_low, zg, np.inf)
        i = int(np.argmax(up_vals))
        j = int(np.argmin(low_vals))
        gap = up_vals[i] - low_vals[j]
        if gap <= tol:
            break

        eta = K[idx[i], idx[i]] + K[idx[j], idx[j]] - 2.0 * K[idx[i], idx[j]]
        step = gap / max(eta, 1e-12)
        bound_i = (C - a[i]) if z[i] > 0 else a[i]
        bound_j = a[j] if z[j] > 0 else (C - a[j])
        step = min(step, bound_i, bound_j)

        a[i] += z[i] * step
        a[j] -= z[j] * step
        # dG_k = z_k * (K~[i,k] * da_i * z_i + K~[j,k] * da_j * z_j), z^2 = 1
        G += z * step * (K[idx[i]][idx] - K[idx[j]][idx])
        iterations += 1

    # bias from free vectors (-z*G equals b there); KKT midpoint when none are free
    zg = -z * G
    free = (a > 1e-12) & (a < C - 1e-12)
    if free.any():
        bias = float(np.mean(zg[free]))
    else:
        in_up = np.where(z > 0, a < C, a > 0)
        in_low = np.where(z > 0, a > 0, a < C)
        hi = zg[in_up].max() if in_up.any() else 0.0
        lo = zg[in_low].min() if in_low.any() else 0.0
        bias = float((hi + lo) / 2.0)

    beta = a[:n] - a[n:]
    quad = 0.5 * float(beta @ K @ beta)
    objective = quad + float(p @ a)

    keep = beta != 0.0
    return SvrModel(
        spec=spec,
        gamma=gamma,
        support_vectors=Xs[keep],
        coef=beta[keep],
        bias=bias,
        feature_standardizer=fstd,
        label_standardizer=lstd,
        dual_objective=objective,
        iterations=iterations,
    )


def svr_predict(model: SvrModel, x) -> np.ndarray | float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return float(model.predict(x[None])[0])
    return model.predict(x)
