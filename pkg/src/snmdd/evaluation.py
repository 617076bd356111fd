"""Multi-label metrics, stratified cross-validation and information-gain ranking."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .svm import CLASSES, LinearModel, predict, train_svm, train_tsvm

logger = logging.getLogger(__name__)

METRICS = ("acc", "auc", "micro_f1", "macro_f1")


def auc_score(scores: np.ndarray, truth: np.ndarray) -> float:
    """Mann-Whitney AUC with midranks for ties; NaN without both classes."""
    scores = np.asarray(scores, dtype=float)
    pos = np.asarray(truth) > 0
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


@dataclass
class Evaluation:
    acc: float
    auc: float
    micro_f1: float
    macro_f1: float
    per_class_acc: np.ndarray
    per_class_f1: np.ndarray
    per_class_auc: np.ndarray

    def as_dict(self) -> dict[str, float]:
        return {"acc": self.acc, "auc": self.auc, "micro_f1": self.micro_f1, "macro_f1": self.macro_f1}


def evaluate(pred: np.ndarray, truth: np.ndarray, scores: np.ndarray | None = None) -> Evaluation:
    """Exact-match accuracy, macro AUC, micro/macro F1 over n x K label matrices in {+1, -1}.

    Classes without a positive truth label get NaN AUC/F1 and are left out of
    the averages (with a warning). Absent averages are NaN.
    """
    pred = np.atleast_2d(np.asarray(pred))
    truth = np.atleast_2d(np.asarray(truth))
    if pred.shape != truth.shape:
        raise ValueError("prediction and truth shapes differ")
    scores = pred.astype(float) if scores is None else np.atleast_2d(np.asarray(scores, dtype=float))
    K = truth.shape[1]
    P, Y = pred > 0, truth > 0
    acc = float(np.mean(np.all(P == Y, axis=1)))
    per_acc = np.mean(P == Y, axis=0)
    tp = np.sum(P & Y, axis=0)
    fp = np.sum(P & ~Y, axis=0)
    fn = np.sum(~P & Y, axis=0)
    has_pos = Y.any(axis=0)
    f1 = np.where(has_pos, 2 * tp / np.maximum(2 * tp + fp + fn, 1), np.nan)
    aucs = np.array([auc_score(scores[:, k], truth[:, k]) if has_pos[k] else np.nan for k in range(K)])
    if not has_pos.all():
        warnings.warn(f"{int((~has_pos).sum())} class(es) without positive truth labels; F1/AUC absent",
                      RuntimeWarning, stacklevel=2)
    if has_pos.any():
        micro = float(2 * tp[has_pos].sum() / (2 * tp[has_pos].sum() + fp[has_pos].sum() + fn[has_pos].sum()))
        macro = float(np.mean(f1[has_pos]))
    else:
        micro = macro = float("nan")
    valid_auc = aucs[~np.isnan(aucs)]
    auc = float(valid_auc.mean()) if valid_auc.size else float("nan")
    return Evaluation(acc, auc, micro, macro, per_acc, f1, aucs)


# -- cross-validation -------------------------------------------------------------

def stratified_folds(truth: np.ndarray, labeled: np.ndarray, n_folds: int = 5, seed: int = 0) -> np.ndarray:
    """Fold id per sample.

    Labeled and unlabeled samples are dealt round-robin separately, the
    labeled ones grouped by label pattern so each pattern is spread evenly.
    Unlabeled samples are split without looking at their labels.
    """
    labeled = np.asarray(labeled, dtype=bool)
    n = labeled.size
    for name, count in (("labeled", labeled.sum()), ("unlabeled", (~labeled).sum())):
        if 0 < count < n_folds:
            raise ValueError(f"{name} stratum has {count} samples, fewer than {n_folds} folds")
    if labeled.sum() == 0:
        raise ValueError("labeled stratum is empty")
    rng = np.random.default_rng(seed)
    folds = np.empty(n, dtype=int)
    lab = np.flatnonzero(labeled)
    patterns = [tuple(row) for row in np.asarray(truth)[lab]]
    keys = sorted(set(patterns))
    ordered = []
    for key in keys:
        members = lab[[p == key for p in patterns]]
        ordered.extend(rng.permutation(members))
    folds[np.array(ordered, dtype=int)] = np.arange(len(ordered)) % n_folds
    unl = rng.permutation(np.flatnonzero(~labeled))
    folds[unl] = np.arange(unl.size) % n_folds
    return folds


@dataclass
class ClassifierConfig:
    method: str = "tsvm"  # or "svm"
    C: float = 1.0
    C_star: float = 0.5
    epochs: int = 300
    max_sweeps: int = 30


def train_classifiers(X: np.ndarray, truth: np.ndarray, labeled: np.ndarray, config: ClassifierConfig,
                      seed: int = 0, unlabeled_rows: np.ndarray | None = None) -> list[LinearModel]:
    """One binary model per class on the labeled rows (plus unlabeled rows for TSVM)."""
    labeled = np.asarray(labeled, dtype=bool)
    unl = np.flatnonzero(~labeled) if unlabeled_rows is None else np.asarray(unlabeled_rows)
    models = []
    for k, name in enumerate(CLASSES[: truth.shape[1]]):
        y = truth[labeled, k].astype(float)
        s = seed * 7919 + k
        if config.method == "svm":
            models.append(train_svm(X[labeled], y, config.C, s, config.epochs, name))
        elif config.method == "tsvm":
            res = train_tsvm(X[labeled], y, X[unl], config.C, config.C_star, s, config.epochs,
                             config.max_sweeps, name)
            models.append(res.model)
        else:
            raise ValueError(f"unknown classifier {config.method!r}")
    return models


@dataclass
class CrossValResult:
    folds: list[dict[str, float]]
    assignment: np.ndarray
    predictions: np.ndarray
    scores: np.ndarray
    pooled: Evaluation | None = None

    def mean(self) -> dict[str, float]:
        return {m: float(np.nanmean([f[m] for f in self.folds])) for m in METRICS}

    def sd(self) -> dict[str, float]:
        return {m: float(np.nanstd([f[m] for f in self.folds])) for m in METRICS}

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fold"] + list(METRICS))
            for i, f in enumerate(self.folds):
                writer.writerow([i] + [f"{f[m]:.6f}" for m in METRICS])
            mean, sd = self.mean(), self.sd()
            writer.writerow(["mean"] + [f"{mean[m]:.6f}" for m in METRICS])
            writer.writerow(["sd"] + [f"{sd[m]:.6f}" for m in METRICS])


def crossval(X: np.ndarray, truth: np.ndarray, labeled: np.ndarray, config: ClassifierConfig = ClassifierConfig(),
             seed: int = 0, n_folds: int = 5, has_truth: np.ndarray | None = None) -> CrossValResult:
    """K-fold CV: train on the other folds' labeled (and unlabeled) users, score every held-out user with truth."""
    truth = np.asarray(truth)
    labeled = np.asarray(labeled, dtype=bool)
    has_truth = labeled if has_truth is None else np.asarray(has_truth, dtype=bool)
    folds = stratified_folds(truth, labeled, n_folds, seed)
    preds = np.zeros_like(truth)
    scores = np.zeros(truth.shape, dtype=float)
    results = []
    for f in range(n_folds):
        train = folds != f
        test = (folds == f) & has_truth
        models = train_classifiers(X, truth, labeled & train, config, seed * 31 + f,
                                   unlabeled_rows=np.flatnonzero(~labeled & train))
        p, s = predict(models, X[folds == f])
        preds[folds == f], scores[folds == f] = p, s
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            results.append(evaluate(preds[test], truth[test], scores[test]).as_dict())
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        pooled = evaluate(preds[has_truth], truth[has_truth], scores[has_truth])
    return CrossValResult(results, folds, preds, scores, pooled)


crossval_5fold = crossval


def threshold_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, int]:
    """Best single threshold (and direction) on one feature by training accuracy.

    Predicts ``sign * (x > t)``; candidate thresholds are midpoints between
    sorted distinct values plus one below the minimum.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    v = np.unique(x)
    cand = np.concatenate([[v[0] - 1.0], (v[1:] + v[:-1]) / 2])
    best, best_t, best_sign = -1.0, cand[0], 1
    for t in cand:
        acc = float(np.mean(np.where(x > t, 1, -1) == y))
        for sign, a in ((1, acc), (-1, 1.0 - acc)):
            if a > best:
                best, best_t, best_sign = a, float(t), sign
    return best_t, best_sign


def single_feature_accuracy(x: np.ndarray, y: np.ndarray, n_folds: int = 5, seed: int = 0) -> float:
    """Cross-validated accuracy of a one-threshold classifier on a single feature."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    folds = np.arange(y.size) % n_folds
    np.random.default_rng(seed).shuffle(folds)
    accs = []
    for f in range(n_folds):
        tr = folds != f
        t, sign = threshold_fit(x[tr], y[tr])
        accs.append(np.mean(sign * np.where(x[~tr] > t, 1, -1) == y[~tr]))
    return float(np.mean(accs))


# -- information gain -------------------------------------------------------------

def entropy(labels: np.ndarray) -> float:
    _, counts = np.unique(labels, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum())


def equal_frequency_bins(values: np.ndarray, n_bins: int = 10) -> np.ndarray:
    """Bin index per value; equal values share a bin, NaN goes to bin ``n_bins``."""
    values = np.asarray(values, dtype=float)
    out = np.full(values.size, n_bins, dtype=int)
    obs = ~np.isnan(values)
    if obs.any():
        edges = np.unique(np.quantile(values[obs], np.linspace(0, 1, n_bins + 1)[1:-1]))
        out[obs] = np.searchsorted(edges, values[obs], side="right")
    return out


def information_gain(values: np.ndarray, labels: np.ndarray, n_bins: int = 10) -> float:
    labels = np.asarray(labels)
    bins = equal_frequency_bins(values, n_bins)
    cond = 0.0
    for b in np.unique(bins):
        sel = bins == b
        cond += sel.mean() * entropy(labels[sel])
    return max(entropy(labels) - cond, 0.0)


def information_gain_ranking(values: np.ndarray, labels: np.ndarray, names: Sequence[str] | None = None,
                             n_bins: int = 10) -> list[tuple[str, float]]:
    """Features by descending information gain; ties keep column order."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    names = list(names) if names is not None else [str(j) for j in range(values.shape[1])]
    gains = [information_gain(values[:, j], labels, n_bins) for j in range(values.shape[1])]
    order = sorted(range(len(gains)), key=lambda j: (-gains[j], j))
    return [(names[j], gains[j]) for j in order]


def write_predictions(users: Sequence[str], labels: np.ndarray, scores: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "cr", "nc", "io", "score_cr", "score_nc", "score_io"])
        for u, lab, sc in zip(users, labels, scores):
            writer.writerow([u] + [int(v) for v in lab] + [f"{v:.10g}" for v in sc])


def read_predictions(path: str | Path) -> tuple[list[str], np.ndarray, np.ndarray]:
    users, labels, scores = [], [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            users.append(row["user_id"])
            labels.append([int(row[c]) for c in CLASSES])
            scores.append([float(row[f"score_{c}"]) for c in CLASSES])
    return users, np.array(labels).reshape(-1, 3), np.array(scores, dtype=float).reshape(-1, 3)
