"""Linear SVM and its transductive (label-switching) extension.

The primal problem is

    min_w,b  1/2 ||w||^2 + sum_i c_i * max(0, 1 - y_i (w.x_i + b))

with ``c_i = C`` for labeled and ``c_i = C*`` for unlabeled samples. It is
solved by seeded stochastic subgradient descent (1/t steps, projection onto
the ball that must contain the optimum) with polynomial-decay averaging of the
iterates. The averaged iterate is checkpointed every epoch and the best
checkpoint is kept.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

CLASSES = ("cr", "nc", "io")


@dataclass
class LinearModel:
    w: np.ndarray
    b: float
    C: float
    C_star: float = 0.0
    seed: int = 0
    label: str = ""
    objective: float = float("nan")
    n_iter: int = 0
    trace: list[float] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.w.size

    def decision(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} features, got {X.shape[1]}")
        return X @ self.w + self.b

    def to_dict(self) -> dict:
        return {"class": self.label, "w": self.w.tolist(), "b": self.b, "C": self.C, "C*": self.C_star,
                "seed": self.seed, "dim": self.dim}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearModel":
        w = np.asarray(d["w"], dtype=float)
        if w.size != d["dim"]:
            raise ValueError("model dim does not match weight vector")
        return cls(w, float(d["b"]), float(d["C"]), float(d["C*"]), int(d["seed"]), d.get("class", ""))


def save_models(models: Sequence[LinearModel], path: str | Path) -> None:
    Path(path).write_text(json.dumps([m.to_dict() for m in models], indent=1) + "\n")


def load_models(path: str | Path) -> list[LinearModel]:
    return [LinearModel.from_dict(d) for d in json.loads(Path(path).read_text())]


def svm_objective(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, c: np.ndarray) -> float:
    hinge = np.maximum(0.0, 1.0 - y * (X @ w + b))
    return 0.5 * float(w @ w) + float(c @ hinge)


@njit(cache=True)
def _sgd_pass(X, y, c, order, w, b, aw, ab, t, radius, bmax, omega):
    n, d = X.shape
    for i in order:
        t += 1
        eta = 1.0 / t
        m = b
        for q in range(d):
            m += w[q] * X[i, q]
        viol = y[i] * m < 1.0
        shrink = 1.0 - eta
        for q in range(d):
            w[q] *= shrink
        if viol:
            g = eta * n * c[i] * y[i]
            for q in range(d):
                w[q] += g * X[i, q]
            b += g
        nrm = 0.0
        for q in range(d):
            nrm += w[q] * w[q]
        nrm = np.sqrt(nrm)
        if nrm > radius:
            for q in range(d):
                w[q] *= radius / nrm
        if b > bmax:
            b = bmax
        elif b < -bmax:
            b = -bmax
        rho = (omega + 1.0) / (t + omega)
        for q in range(d):
            aw[q] += rho * (w[q] - aw[q])
        ab += rho * (b - ab)
    return b, ab, t


def fit_weighted(X: np.ndarray, y: np.ndarray, c: np.ndarray, seed: int = 0, epochs: int = 300,
                 omega: float = 3.0) -> tuple[np.ndarray, float, list[float]]:
    """Solve the weighted hinge problem; returns (w, b, best-so-far objective per epoch)."""
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    c = np.asarray(c, dtype=float)
    n, d = X.shape
    radius = np.sqrt(2.0 * c.sum())
    bmax = 1.0 + radius * float(np.max(np.linalg.norm(X, axis=1))) if n else 1.0
    rng = np.random.default_rng(seed)
    w, aw = np.zeros(d), np.zeros(d)
    b = ab = 0.0
    t = 0
    best_w, best_b = aw.copy(), ab
    best = svm_objective(best_w, best_b, X, y, c)
    trace = []
    for _ in range(epochs):
        order = rng.permutation(n).astype(np.int64)
        b, ab, t = _sgd_pass(X, y, c, order, w, b, aw, ab, t, radius, bmax, omega)
        obj = svm_objective(aw, ab, X, y, c)
        if obj < best:
            best, best_w, best_b = obj, aw.copy(), ab
        trace.append(best)
    return best_w, float(best_b), trace


def _check_labels(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be +1/-1")
    return y


def train_svm(X: np.ndarray, y: np.ndarray, C: float = 1.0, seed: int = 0, epochs: int = 300,
              label: str = "") -> LinearModel:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = _check_labels(y)
    if len(y) == 0:
        raise ValueError("empty labeled set")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("degenerate class: need at least one sample of each sign")
    if C <= 0:
        raise ValueError("C must be positive")
    w, b, trace = fit_weighted(X, y, np.full(len(y), float(C)), seed, epochs)
    return LinearModel(w, b, C, 0.0, seed, label, trace[-1], epochs, trace)


@dataclass
class TsvmResult:
    model: LinearModel
    labels: np.ndarray  # inferred +1/-1 for the unlabeled samples
    swaps: int = 0
    retrains: int = 0


def train_tsvm(X_lab: np.ndarray, y_lab: np.ndarray, X_unl: np.ndarray, C: float = 1.0, C_star: float = 0.5,
               seed: int = 0, epochs: int = 300, max_sweeps: int = 30, label: str = "") -> TsvmResult:
    """Transductive SVM by label switching with a geometric ramp on C*.

    Unlabeled samples start with the top ``p`` fraction (by decision value)
    marked positive, ``p`` being the labeled positive fraction. At each C*
    level, opposite-labeled pairs with positive slacks summing above 2 are
    swapped (each such swap lowers the objective at fixed w, b) and the model
    is retrained, until no pair qualifies.
    """
    X_lab = np.atleast_2d(np.asarray(X_lab, dtype=float))
    y_lab = _check_labels(y_lab)
    if len(y_lab) == 0:
        raise ValueError("empty labeled set")
    X_unl = np.asarray(X_unl, dtype=float).reshape(-1, X_lab.shape[1])
    sup = train_svm(X_lab, y_lab, C, seed, epochs, label)
    if C_star == 0 or len(X_unl) == 0:
        yhat = np.where(sup.decision(X_unl) > 0, 1.0, -1.0) if len(X_unl) else np.zeros(0)
        return TsvmResult(sup, yhat)

    n_u = len(X_unl)
    p = float(np.mean(y_lab > 0))
    n_pos = int(round(p * n_u))
    scores = sup.decision(X_unl)
    yhat = -np.ones(n_u)
    yhat[np.argsort(-scores, kind="stable")[:n_pos]] = 1.0

    X_all = np.vstack([X_lab, X_unl])
    n_l = len(y_lab)
    levels = [C_star / 2 ** k for k in range(6, -1, -1)]
    swaps = retrains = 0
    model = sup
    for cur in levels:
        c = np.concatenate([np.full(n_l, float(C)), np.full(n_u, cur)])
        for _ in range(max_sweeps):
            retrains += 1
            w, b, trace = fit_weighted(X_all, np.concatenate([y_lab, yhat]), c, seed + retrains, epochs)
            model = LinearModel(w, b, C, cur, seed, label, trace[-1], epochs, trace)
            pairs = _swap_pairs(model.decision(X_unl), yhat)
            if not pairs:
                break
            for i, j in pairs:
                yhat[i], yhat[j] = yhat[j], yhat[i]
            swaps += len(pairs)
    model.C_star = C_star
    return TsvmResult(model, yhat, swaps, retrains)


def _swap_pairs(f: np.ndarray, yhat: np.ndarray) -> list[tuple[int, int]]:
    """Disjoint (positive, negative) pairs whose label exchange lowers the hinge sum."""
    slack = np.maximum(0.0, 1.0 - yhat * f)
    pos = [i for i in np.argsort(-slack, kind="stable") if yhat[i] > 0 and slack[i] > 0]
    neg = [j for j in np.argsort(-slack, kind="stable") if yhat[j] < 0 and slack[j] > 0]
    pairs = []
    for i, j in zip(pos, neg):
        if slack[i] + slack[j] <= 2.0:
            break
        pairs.append((int(i), int(j)))
    return pairs


def predict(models: Sequence[LinearModel], X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-class decision values and labels (score 0 counts as negative)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    scores = np.column_stack([m.decision(X) for m in models])
    return np.where(scores > 0, 1, -1), scores
