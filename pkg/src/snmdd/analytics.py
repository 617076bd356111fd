"""Network analyses over predicted labels, and the feature-ablation harness."""

from __future__ import annotations

import csv
from collections import Counter, defaultdict, deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .activity import SocialGraph

TYPES = ("CR", "NC", "IO", "NA")


def user_types(labels: np.ndarray) -> list[tuple[str, ...]]:
    """Positive types per row of an n x 3 {+1,-1} matrix; no positive -> ("NA",)."""
    out = []
    for row in np.atleast_2d(labels):
        t = tuple(TYPES[k] for k in range(3) if row[k] > 0)
        out.append(t or ("NA",))
    return out


def _types_by_user(users: Sequence[str], labels) -> dict[str, tuple[str, ...]]:
    if isinstance(labels, dict):
        return {u: tuple(labels[u]) for u in users}
    return dict(zip(users, user_types(labels)))


def friend_type_distribution(graph: SocialGraph, labels, users: Sequence[str] | None = None
                             ) -> dict[str, dict[str, float]]:
    """For each type, the share of each type among the friends of its users.

    A friend with several positive types counts once for each of them.
    """
    users = list(graph.nodes) if users is None else list(users)
    types = _types_by_user(users, labels)
    table: dict[str, dict[str, float]] = {}
    for t in TYPES:
        members = [u for u in users if t in types[u]]
        if not members:
            continue
        counts = Counter()
        for u in members:
            for v in graph.neighbors(u):
                for tv in types.get(v, ("NA",)):
                    counts[tv] += 1
        total = sum(counts.values())
        table[t] = {s: counts[s] / total if total else 0.0 for s in TYPES}
    return table


@dataclass
class HopResult:
    mean: float
    n_reached: int
    n_unreachable: int
    distances: list[int]


def _bfs_nearest(graph: SocialGraph, start: str, targets: set[str]) -> int | None:
    seen = {start}
    queue = deque([(start, 0)])
    while queue:
        u, d = queue.popleft()
        for v in sorted(graph.neighbors(u)):
            if v in seen:
                continue
            if v in targets:
                return d + 1
            seen.add(v)
            queue.append((v, d + 1))
    return None


def hop_distance_same_type(graph: SocialGraph, labels, users: Sequence[str] | None = None,
                           types: Iterable[str] = TYPES[:3]) -> dict[str, HopResult]:
    """Mean BFS distance from each typed user to the nearest other user of that type."""
    users = list(graph.nodes) if users is None else list(users)
    tmap = _types_by_user(users, labels)
    out = {}
    for t in types:
        members = [u for u in users if t in tmap[u]]
        if len(members) < 2:
            continue
        target = set(members)
        dists, missing = [], 0
        for u in members:
            d = _bfs_nearest(graph, u, target - {u})
            if d is None:
                missing += 1
            else:
                dists.append(d)
        mean = float(np.mean(dists)) if dists else float("nan")
        out[t] = HopResult(mean, len(dists), missing, dists)
    return out


def label_propagation(graph: SocialGraph, users: Sequence[str] | None = None, max_rounds: int = 100
                      ) -> tuple[np.ndarray, int]:
    """Synchronous label propagation; returns (community id per user, rounds used).

    Every node starts in its own community and adopts the label with the
    largest vote, a neighbour voting with its edge weight and the node itself
    with weight 1. Ties go to the smallest label. On an unweighted graph this is
    plain majority adoption.
    """
    users = list(graph.nodes) if users is None else list(users)
    pos = {u: i for i, u in enumerate(users)}
    nbrs = [[(pos[v], w) for v, w in sorted(graph.neighbors(u).items()) if v in pos] for u in users]
    lab = np.arange(len(users))
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        new = lab.copy()
        for i, ns in enumerate(nbrs):
            votes = defaultdict(float)
            votes[lab[i]] += 1.0
            for j, w in ns:
                votes[lab[j]] += w
            top = max(votes.values())
            new[i] = min(l for l, c in votes.items() if c == top)
        if np.array_equal(new, lab):
            break
        lab = new
    # renumber by first appearance
    _, first, inv = np.unique(lab, return_index=True, return_inverse=True)
    rank = np.argsort(np.argsort(first))
    return rank[inv], rounds


def community_ratios(graph: SocialGraph, labels: np.ndarray, scores: np.ndarray,
                     users: Sequence[str] | None = None, max_rounds: int = 100) -> list[tuple[int, str, float, float]]:
    """(community, type, mean score, fraction positive) for every community and SNMD type."""
    users = list(graph.nodes) if users is None else list(users)
    labels = np.atleast_2d(labels)
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    comm, _ = label_propagation(graph, users, max_rounds)
    rows = []
    for c in range(comm.max() + 1 if comm.size else 0):
        sel = comm == c
        for k, t in enumerate(TYPES[:3]):
            rows.append((c, t, float(scores[sel, k].mean()), float(np.mean(labels[sel, k] > 0))))
    return rows


# -- ablation -------------------------------------------------------------------

@dataclass
class PowerFit:
    a: float
    b: float
    r2: float


def fit_power_law(increments: Sequence[float], n: Sequence[float] | None = None) -> PowerFit | None:
    """Least squares of ln(delta) on ln(n) over positive increments; None with < 3 points."""
    d = np.asarray(increments, dtype=float)
    n = np.arange(1, d.size + 1, dtype=float) if n is None else np.asarray(n, dtype=float)
    keep = d > 0
    if keep.sum() < 3:
        return None
    x, y = np.log(n[keep]), np.log(d[keep])
    b, ln_a = np.polyfit(x, y, 1)
    resid = y - (ln_a + b * x)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return PowerFit(float(np.exp(ln_a)), float(b), r2)


@dataclass
class AblationResult:
    ranking: list[int]
    accuracy: np.ndarray  # Acc(top-0) .. Acc(top-D)
    increments: np.ndarray
    fit: PowerFit | None


def ablation_curve(X: np.ndarray, truth: np.ndarray, ranking: Sequence[int],
                   score: Callable[[np.ndarray], float], baseline: float | None = None) -> AblationResult:
    """Accuracy of every top-n prefix of ``ranking`` and the power fit of its increments.

    ``score(X_sub)`` retrains and returns accuracy. Prefix columns keep their
    original order, so the full prefix reproduces ``score(X)`` exactly.
    ``baseline`` is Acc(top-0); by default the accuracy of predicting all-negative.
    """
    truth = np.atleast_2d(truth)
    ranking = [int(j) for j in ranking]
    if baseline is None:
        baseline = float(np.mean(np.all(truth < 0, axis=1)))
    acc = [baseline]
    for n in range(1, len(ranking) + 1):
        cols = sorted(ranking[:n])
        acc.append(float(score(X[:, cols])))
    acc = np.array(acc)
    inc = np.diff(acc)
    return AblationResult(ranking, acc, inc, fit_power_law(inc))


def write_long_csv(rows: Iterable[tuple], path: str | Path) -> None:
    """Plot-ready ``series,x,y`` rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["series", "x", "y"])
        for series, x, y in rows:
            writer.writerow([series, _fmt(x), _fmt(y)])


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    return str(v)
