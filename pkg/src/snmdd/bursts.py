"""Two-state burst automaton over inter-event gaps.

The normal state emits gaps at rate ``alpha0`` (the inverse mean gap) and the
burst state at ``alpha1 = s * alpha0``. Switching state costs ``gamma * ln n``.
The cheapest state sequence is found by a two-state Viterbi recursion.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

STAT_NAMES = ("avg", "med", "sd", "max", "min")
CSV_HEADER = ["user_id"] + [f"bi_{s}" for s in STAT_NAMES] + [f"bl_{s}" for s in STAT_NAMES] + ["n_bursts"]

MIN_EVENTS = 3


@dataclass(frozen=True)
class BurstModel:
    alpha0: float
    alpha1: float
    gamma: float
    n: int

    def __post_init__(self):
        if not (self.alpha0 > 0 and self.alpha1 > self.alpha0):
            raise ValueError("need 0 < alpha0 < alpha1")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")

    @property
    def transition_cost(self) -> float:
        return self.gamma * np.log(self.n)


@dataclass
class Burst:
    start_index: int
    end_index: int
    intensity: int
    length: float


@dataclass
class BurstReport:
    states: np.ndarray
    bursts: list[Burst] = field(default_factory=list)
    intensity_stats: np.ndarray = field(default_factory=lambda: np.zeros(5))
    length_stats: np.ndarray = field(default_factory=lambda: np.zeros(5))

    @property
    def has_bursts(self) -> bool:
        return len(self.bursts) > 0

    def feature_vector(self) -> np.ndarray:
        return np.concatenate([self.intensity_stats, self.length_stats])


def as_gaps(x: Sequence[float]) -> np.ndarray:
    """Validate a gap sequence, clamping simultaneous events (gap 0) to 1 s."""
    gaps = np.asarray(x, dtype=float)
    if gaps.ndim != 1 or gaps.size == 0:
        raise ValueError("no gaps")
    if np.any(gaps < 0) or not np.all(np.isfinite(gaps)):
        raise ValueError("gaps must be finite and non-negative")
    return np.where(gaps <= 0, 1.0, gaps)


def gaps_from_timestamps(timestamps: Sequence[float]) -> np.ndarray:
    return as_gaps(np.diff(np.asarray(timestamps, dtype=float)))


def fit_model(gaps: Sequence[float], s: float = 2.0, gamma: float = 1.0) -> BurstModel:
    if len(gaps) == 0:
        raise ValueError("no gaps")
    if s <= 1:
        raise ValueError("scale s must exceed 1")
    x = as_gaps(gaps)
    alpha0 = 1.0 / x.mean()
    return BurstModel(alpha0, s * alpha0, gamma, x.size)


def emission_costs(gaps: np.ndarray, model: BurstModel) -> np.ndarray:
    """-ln f_i(x_t) for both states, shape (n, 2)."""
    alphas = np.array([model.alpha0, model.alpha1])
    return -np.log(alphas)[None, :] + gaps[:, None] * alphas[None, :]


def sequence_cost(gaps: Sequence[float], q: Sequence[int], model: BurstModel) -> float:
    """Evaluate c(q|x) for an explicit state sequence."""
    x = as_gaps(gaps)
    q = np.asarray(q, dtype=int)
    em = emission_costs(x, model)
    switches = int(np.count_nonzero(np.diff(q)))
    return float(em[np.arange(x.size), q].sum() + switches * model.transition_cost)


def min_cost_states(gaps: Sequence[float], model: BurstModel) -> tuple[np.ndarray, float]:
    """Global minimum-cost state sequence; ties resolve to the normal state."""
    x = as_gaps(gaps)
    if x.size != model.n:
        raise ValueError(f"model fitted for n={model.n}, got {x.size} gaps")
    em = emission_costs(x, model)
    tau = model.transition_cost
    n = x.size
    back = np.zeros((n, 2), dtype=np.int8)
    cost = em[0].copy()
    for t in range(1, n):
        c0, c1 = cost
        # predecessor for state 0 / state 1, preferring 0 on ties
        stay0, move0 = c0, c1 + tau
        stay1, move1 = c1, c0 + tau
        p0 = 0 if stay0 <= move0 else 1
        p1 = 0 if move1 <= stay1 else 1
        back[t, 0], back[t, 1] = p0, p1
        cost = np.array([min(stay0, move0), min(move1, stay1)]) + em[t]
    q = np.zeros(n, dtype=np.int8)
    q[-1] = 0 if cost[0] <= cost[1] else 1
    for t in range(n - 1, 0, -1):
        q[t - 1] = back[t, q[t]]
    return q, float(cost[q[-1]])


def _stats(values: np.ndarray) -> np.ndarray:
    return np.array([values.mean(), np.median(values), values.std(), values.max(), values.min()])


def summarize_bursts(timestamps: Sequence[float], q: Sequence[int]) -> BurstReport:
    """Turn maximal burst-state runs into (intensity, length) statistics.

    Gap ``t`` sits between events ``t`` and ``t + 1``, so a run over gaps
    ``a..b`` covers ``b - a + 2`` events.
    """
    ts = np.asarray(timestamps, dtype=float)
    q = np.asarray(q, dtype=np.int8)
    if q.size != max(ts.size - 1, 0):
        raise ValueError("state sequence must have one entry per gap")
    bursts = []
    t = 0
    while t < q.size:
        if q[t] == 1:
            a = t
            while t + 1 < q.size and q[t + 1] == 1:
                t += 1
            bursts.append(Burst(a, t, t - a + 2, float(ts[t + 1] - ts[a])))
        t += 1
    report = BurstReport(states=q, bursts=bursts)
    if bursts:
        report.intensity_stats = _stats(np.array([b.intensity for b in bursts], dtype=float))
        report.length_stats = _stats(np.array([b.length for b in bursts], dtype=float))
    return report


def detect_bursts(timestamps: Sequence[float], s: float = 2.0, gamma: float = 1.0) -> BurstReport | None:
    """Full detection for one stream; ``None`` when fewer than three events."""
    ts = np.sort(np.asarray(timestamps, dtype=float))
    if ts.size < MIN_EVENTS:
        return None
    gaps = gaps_from_timestamps(ts)
    model = fit_model(gaps, s, gamma)
    q, _ = min_cost_states(gaps, model)
    return summarize_bursts(ts, q)


def write_burst_csv(rows: dict[str, BurstReport | None], path: str | Path) -> None:
    """Per-user stats; users without a report or without bursts get empty stat cells."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for uid in sorted(rows):
            rep = rows[uid]
            if rep is None or not rep.has_bursts:
                n = 0 if rep is None else len(rep.bursts)
                writer.writerow([uid] + [""] * 10 + [n])
            else:
                writer.writerow([uid] + [f"{v:.10g}" for v in rep.feature_vector()] + [len(rep.bursts)])
