"""Graph-regularized Tucker factorization of the user x feature x source tensor.

The model reconstructs ``t_ijk`` as ``sum_rst c_rst u_ir v_js w_kt`` and
minimizes

    1/2 * sum_observed (t_ijk - t_hat_ijk)^2
    + lambda1/2 * tr(U^T L U) + lambda2/2 * ||U||^2

with ``L = D - A`` the Laplacian of the weighted interaction graph. Fitting is
plain per-entry stochastic gradient descent over the observed entries.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

from .activity import SocialGraph
from .features import FeatureMatrix

logger = logging.getLogger(__name__)


@dataclass
class FeatureTensor:
    users: list[str]
    features: list[str]
    sources: list[str]
    index: np.ndarray  # (nnz, 3) int64 rows of (i, j, k)
    values: np.ndarray  # (nnz,)

    def __post_init__(self):
        self.index = np.asarray(self.index, dtype=np.int64).reshape(-1, 3)
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.index.shape[0] != self.values.size:
            raise ValueError("index/value length mismatch")
        dims = np.array(self.shape)
        if self.index.size and (self.index.min() < 0 or np.any(self.index.max(axis=0) >= dims)):
            raise ValueError("tensor index out of range")
        flat = np.ravel_multi_index(self.index.T, self.shape) if self.index.size else np.empty(0, dtype=np.int64)
        if np.unique(flat).size != flat.size:
            raise ValueError("duplicate tensor entries")

    @property
    def shape(self) -> tuple[int, int, int]:
        return len(self.users), len(self.features), len(self.sources)

    @property
    def nnz(self) -> int:
        return self.values.size

    def dense(self, fill: float = np.nan) -> np.ndarray:
        out = np.full(self.shape, fill)
        out[tuple(self.index.T)] = self.values
        return out

    def observed_mask(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=bool)
        out[tuple(self.index.T)] = True
        return out

    @classmethod
    def from_dense(cls, X: np.ndarray, mask: np.ndarray | None = None, users=None, features=None, sources=None):
        X = np.asarray(X, dtype=float)
        mask = ~np.isnan(X) if mask is None else np.asarray(mask, dtype=bool)
        idx = np.argwhere(mask)
        N, D, M = X.shape
        return cls(list(users or [str(i) for i in range(N)]), list(features or [str(j) for j in range(D)]),
                   list(sources or [str(k) for k in range(M)]), idx, X[mask])


def assemble_tensor(matrices: Sequence[FeatureMatrix], users: Sequence[str], impute: bool = False) -> FeatureTensor:
    """Stack per-source matrices into an N x D x M tensor.

    Masked cells are left out of the observation set, or, with ``impute``,
    filled with the (feature, source) mean of the observed cells.
    """
    if not matrices:
        raise ValueError("need at least one source")
    names = list(matrices[0].names)
    if any(list(m.names) != names for m in matrices):
        raise ValueError("sources disagree on the feature columns")
    aligned = [m.reindex(users) for m in matrices]
    present = np.any([m.mask.any(axis=1) for m in aligned], axis=0)
    if not present.all():
        missing = [u for u, p in zip(users, present) if not p]
        raise ValueError(f"users present in no source: {', '.join(missing)}")
    X = np.stack([m.values for m in aligned], axis=2)
    mask = np.stack([m.mask for m in aligned], axis=2)
    if impute:
        with np.errstate(invalid="ignore"):
            means = np.nanmean(np.where(mask, X, np.nan), axis=0)
        means = np.nan_to_num(means)
        X = np.where(mask, X, means[None, :, :])
        mask = np.ones_like(mask)
    return FeatureTensor.from_dense(X, mask, users, names, [m.source_id for m in matrices])


def concatenate_baseline(matrices: Sequence[FeatureMatrix], users: Sequence[str] | None = None) -> FeatureMatrix:
    """Side-by-side concatenation of the sources; masked cells become 0 (the z-scored mean)."""
    users = list(users or matrices[0].users)
    aligned = [m.reindex(users) for m in matrices]
    vals = np.hstack([m.filled(0.0) for m in aligned])
    names = [f"{m.source_id or k}:{n}" for k, m in enumerate(aligned) for n in m.names]
    return FeatureMatrix(users, vals, np.ones_like(vals, dtype=bool), "+".join(m.source_id for m in aligned), names)


@dataclass
class StmConfig:
    rank_user: int = 10
    rank_feature: int = 10
    rank_source: int | None = None  # min(M, 5) when unset
    lambda1: float = 0.1
    lambda2: float = 0.01
    eta: float = 0.003
    epsilon: float = 1e-5
    max_iter: int = 500
    init_scale: float = 0.5
    seed: int = 0

    def ranks(self, shape: tuple[int, int, int]) -> tuple[int, int, int]:
        N, D, M = shape
        R, S = self.rank_user, self.rank_feature
        T = min(M, 5) if self.rank_source is None else self.rank_source
        if not (1 <= R <= N and 1 <= S <= D and 1 <= T <= M):
            raise ValueError(f"ranks {(R, S, T)} incompatible with tensor shape {shape}")
        return R, S, T

    def validate(self) -> None:
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("regularization weights must be non-negative")
        if self.eta <= 0 or self.epsilon <= 0 or self.max_iter < 1:
            raise ValueError("eta, epsilon and max_iter must be positive")


@dataclass
class StmFactors:
    U: np.ndarray
    V: np.ndarray
    W: np.ndarray
    C: np.ndarray
    config: StmConfig = field(default_factory=StmConfig)
    loss_trace: list[float] = field(default_factory=list)

    def copy(self) -> "StmFactors":
        return StmFactors(self.U.copy(), self.V.copy(), self.W.copy(), self.C.copy(),
                          replace(self.config), list(self.loss_trace))

    def to_json(self, path: str | Path, shape: tuple[int, int, int] | None = None) -> None:
        payload = {
            "dims": list(shape or (self.U.shape[0], self.V.shape[0], self.W.shape[0])),
            "ranks": list(self.C.shape),
            "config": asdict(self.config),
            "U": self.U.ravel().tolist(),
            "V": self.V.ravel().tolist(),
            "W": self.W.ravel().tolist(),
            "C": self.C.ravel().tolist(),
            "loss_trace": list(self.loss_trace),
        }
        Path(path).write_text(json.dumps(payload))

    @classmethod
    def from_json(cls, path: str | Path) -> "StmFactors":
        raw = json.loads(Path(path).read_text())
        N, D, M = raw["dims"]
        R, S, T = raw["ranks"]
        return cls(np.array(raw["U"]).reshape(N, R), np.array(raw["V"]).reshape(D, S),
                   np.array(raw["W"]).reshape(M, T), np.array(raw["C"]).reshape(R, S, T),
                   StmConfig(**raw["config"]), list(raw.get("loss_trace", [])))


def write_loss_trace(trace: Sequence[float], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss"])
        for e, loss in enumerate(trace, 1):
            writer.writerow([e, repr(float(loss))])


def init_factors(shape: tuple[int, int, int], config: StmConfig) -> StmFactors:
    N, D, M = shape
    R, S, T = config.ranks(shape)
    rng = np.random.default_rng(config.seed)
    a = config.init_scale
    U = rng.uniform(-a, a, (N, R))
    V = rng.uniform(-a, a, (D, S))
    W = rng.uniform(-a, a, (M, T))
    C = rng.uniform(-a, a, (R, S, T))
    return StmFactors(U, V, W, C, replace(config))


# -- reconstruction and objective ------------------------------------------------

def reconstruct_entry(f: StmFactors, i: int, j: int, k: int) -> float:
    return float(np.einsum("rst,r,s,t->", f.C, f.U[i], f.V[j], f.W[k]))


def reconstruct(f: StmFactors) -> np.ndarray:
    """Dense C x1 U x2 V x3 W."""
    return np.einsum("rst,ir,js,kt->ijk", f.C, f.U, f.V, f.W, optimize=True)


def reconstruct_entries(f: StmFactors, index: np.ndarray) -> np.ndarray:
    G = np.einsum("rst,js,kt->rjk", f.C, f.V, f.W, optimize=True)
    i, j, k = index.T
    return np.einsum("nr,rn->n", f.U[i], G[:, j, k])


def laplacian(A: np.ndarray) -> np.ndarray:
    return np.diag(A.sum(axis=1)) - A


def smoothing_trace(U: np.ndarray, A: np.ndarray) -> float:
    """tr(U^T L U)."""
    return float(np.trace(U.T @ laplacian(A) @ U))


def smoothing_pairwise(U: np.ndarray, A: np.ndarray) -> float:
    """1/2 * sum_ij a_ij ||u_i - u_j||^2, summed pair by pair."""
    total = 0.0
    rows, cols = np.nonzero(A)
    for i, j in zip(rows, cols):
        d = U[i] - U[j]
        total += A[i, j] * float(d @ d)
    return 0.5 * total


def adjacency_for(graph: SocialGraph | np.ndarray | None, users: Sequence[str]) -> np.ndarray:
    """Weighted adjacency aligned with the tensor's user index."""
    n = len(users)
    if graph is None:
        return np.zeros((n, n))
    if isinstance(graph, SocialGraph):
        extra = set(graph.nodes) - set(users)
        if extra:
            raise ValueError(f"graph has {len(extra)} node(s) outside the tensor roster, e.g. {sorted(extra)[0]!r}")
        return graph.adjacency(users)
    A = np.asarray(graph, dtype=float)
    if A.shape != (n, n):
        raise ValueError(f"adjacency shape {A.shape} does not match {n} users")
    if not np.allclose(A, A.T) or np.any(np.diag(A) != 0):
        raise ValueError("adjacency must be symmetric with a zero diagonal")
    return A


def objective(f: StmFactors, tensor: FeatureTensor, graph=None, lambda1: float | None = None,
              lambda2: float | None = None) -> float:
    lambda1 = f.config.lambda1 if lambda1 is None else lambda1
    lambda2 = f.config.lambda2 if lambda2 is None else lambda2
    A = adjacency_for(graph, tensor.users)
    resid = reconstruct_entries(f, tensor.index) - tensor.values if tensor.nnz else np.zeros(0)
    fit = 0.5 * float(resid @ resid)
    smooth = 0.5 * lambda1 * _pairwise_fast(f.U, A) if lambda1 else 0.0
    return fit + smooth + 0.5 * lambda2 * float(np.sum(f.U ** 2))


def _pairwise_fast(U: np.ndarray, A: np.ndarray) -> float:
    sq = np.sum(U ** 2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2 * U @ U.T
    return 0.5 * float(np.sum(A * d2))


# -- gradients -----------------------------------------------------------------

def entry_gradients(f: StmFactors, i: int, j: int, k: int, value: float):
    """Reconstruction-term gradients of one observed entry w.r.t. u_i, v_j, w_k and C."""
    u, v, w, C = f.U[i], f.V[j], f.W[k], f.C
    resid = np.einsum("rst,r,s,t->", C, u, v, w) - value
    gu = resid * np.einsum("rst,s,t->r", C, v, w)
    gv = resid * np.einsum("rst,r,t->s", C, u, w)
    gw = resid * np.einsum("rst,r,s->t", C, u, v)
    gC = resid * np.einsum("r,s,t->rst", u, v, w)
    return gu, gv, gw, gC


def full_gradients(f: StmFactors, tensor: FeatureTensor, graph=None, lambda1=None, lambda2=None):
    """Batch gradient of the objective: per-entry terms summed plus the user regularizers."""
    lambda1 = f.config.lambda1 if lambda1 is None else lambda1
    lambda2 = f.config.lambda2 if lambda2 is None else lambda2
    A = adjacency_for(graph, tensor.users)
    gU, gV, gW, gC = (np.zeros_like(x) for x in (f.U, f.V, f.W, f.C))
    for (i, j, k), val in zip(tensor.index, tensor.values):
        gu, gv, gw, gc = entry_gradients(f, i, j, k, val)
        gU[i] += gu
        gV[j] += gv
        gW[k] += gw
        gC += gc
    gU += lambda1 * laplacian(A) @ f.U + lambda2 * f.U
    return gU, gV, gW, gC


def gradient_check(f: StmFactors, tensor: FeatureTensor, graph=None, h: float = 1e-5,
                   lambda1=None, lambda2=None) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error per coordinate is ``|g - g_fd| / max(|g|, |g_fd|, 1e-8)``.
    """
    analytic = full_gradients(f, tensor, graph, lambda1, lambda2)
    worst = 0.0
    for name, grad in zip("UVWC", analytic):
        param = getattr(f, name)
        it = np.nditer(param, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = param[idx]
            param[idx] = orig + h
            up = objective(f, tensor, graph, lambda1, lambda2)
            param[idx] = orig - h
            down = objective(f, tensor, graph, lambda1, lambda2)
            param[idx] = orig
            fd = (up - down) / (2 * h)
            err = abs(grad[idx] - fd) / max(abs(grad[idx]), abs(fd), 1e-8)
            worst = max(worst, err)
    return worst


# -- stochastic gradient descent ---------------------------------------------------

@njit(cache=True)
def _sgd_epoch(order, idx, vals, U, V, W, C, indptr, nbrs, wts, deg, reg_share, lam1, lam2, eta):
    R, S, T = C.shape
    Ak = np.empty((R, S))
    gu = np.empty(R)
    gv = np.empty(S)
    gw = np.empty(T)
    Av = np.empty(R)
    for e in order:
        i = idx[e, 0]
        j = idx[e, 1]
        k = idx[e, 2]
        # core contracted with w_k
        for r in range(R):
            for s in range(S):
                acc = 0.0
                for t in range(T):
                    acc += C[r, s, t] * W[k, t]
                Ak[r, s] = acc
        pred = 0.0
        for r in range(R):
            acc = 0.0
            for s in range(S):
                acc += Ak[r, s] * V[j, s]
            Av[r] = acc
            pred += U[i, r] * acc
        res = pred - vals[e]
        for s in range(S):
            acc = 0.0
            for r in range(R):
                acc += Ak[r, s] * U[i, r]
            gv[s] = res * acc
        for t in range(T):
            acc = 0.0
            for r in range(R):
                ur = U[i, r]
                for s in range(S):
                    acc += C[r, s, t] * ur * V[j, s]
            gw[t] = res * acc
        share = reg_share[i]
        for r in range(R):
            lap = deg[i] * U[i, r]
            for p in range(indptr[i], indptr[i + 1]):
                lap -= wts[p] * U[nbrs[p], r]
            gu[r] = res * Av[r] + share * (lam1 * lap + lam2 * U[i, r])
        step = eta * res
        for r in range(R):
            ur = U[i, r]
            for s in range(S):
                uv = step * ur * V[j, s]
                for t in range(T):
                    C[r, s, t] -= uv * W[k, t]
        for r in range(R):
            U[i, r] -= eta * gu[r]
        for s in range(S):
            V[j, s] -= eta * gv[s]
        for t in range(T):
            W[k, t] -= eta * gw[t]


def sgd_step(f: StmFactors, tensor: FeatureTensor, graph=None, order: np.ndarray | None = None) -> None:
    """One in-place pass over ``order`` (default: all entries in storage order)."""
    A = adjacency_for(graph, tensor.users)
    order = np.arange(tensor.nnz) if order is None else np.asarray(order, dtype=np.int64)
    _run_epoch(f, tensor, A, order)


def _graph_arrays(A: np.ndarray):
    indptr = np.zeros(A.shape[0] + 1, dtype=np.int64)
    rows, cols = np.nonzero(A)
    np.add.at(indptr, rows + 1, 1)
    return np.cumsum(indptr), cols.astype(np.int64), A[rows, cols].astype(float), A.sum(axis=1)


def _reg_share(tensor: FeatureTensor) -> np.ndarray:
    counts = np.bincount(tensor.index[:, 0], minlength=tensor.shape[0]).astype(float)
    return np.divide(1.0, counts, out=np.zeros_like(counts), where=counts > 0)


def _run_epoch(f: StmFactors, tensor: FeatureTensor, A: np.ndarray, order: np.ndarray) -> None:
    indptr, nbrs, wts, deg = _graph_arrays(A)
    cfg = f.config
    _sgd_epoch(order, tensor.index, tensor.values, f.U, f.V, f.W, f.C, indptr, nbrs, wts, deg,
               _reg_share(tensor), float(cfg.lambda1), float(cfg.lambda2), float(cfg.eta))


def sgd_fit(tensor: FeatureTensor, graph=None, config: StmConfig | None = None) -> StmFactors:
    """Fit factors by per-entry SGD over shuffled observed entries.

    Each user's regularizer gradient is spread evenly over that user's
    observed entries, so one epoch applies it once in total. Stops after
    ``max_iter`` epochs or when an epoch lowers the objective by less than
    ``epsilon``. Raises ``FloatingPointError`` if the objective diverges.
    """
    config = config or StmConfig()
    config.validate()
    A = adjacency_for(graph, tensor.users)
    f = init_factors(tensor.shape, config)
    rng = np.random.default_rng([config.seed, 1])
    indptr, nbrs, wts, deg = _graph_arrays(A)
    share = _reg_share(tensor)
    prev = objective(f, tensor, A)
    trace = []
    for epoch in range(config.max_iter):
        order = rng.permutation(tensor.nnz).astype(np.int64)
        _sgd_epoch(order, tensor.index, tensor.values, f.U, f.V, f.W, f.C, indptr, nbrs, wts, deg, share,
                   float(config.lambda1), float(config.lambda2), float(config.eta))
        loss = objective(f, tensor, A)
        if not np.isfinite(loss):
            raise FloatingPointError(
                f"step size too large: objective diverged at epoch {epoch + 1}; try eta={config.eta / 10:g}")
        trace.append(loss)
        if prev - loss < config.epsilon:
            break
        prev = loss
    f.loss_trace = trace
    logger.debug("sgd_fit: %d epochs, final loss %.6g", len(trace), trace[-1])
    return f


def relative_error(f: StmFactors, tensor: FeatureTensor) -> float:
    """||T - T_hat|| / ||T|| over the observed entries."""
    resid = reconstruct_entries(f, tensor.index) - tensor.values
    return float(np.linalg.norm(resid) / np.linalg.norm(tensor.values))
