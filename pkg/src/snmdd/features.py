"""Per-user behavioural features for one social source.

Every user gets the same 24 columns in ``FEATURE_NAMES`` order. Cells that
cannot be computed are masked (``mask`` False, value NaN).
"""

from __future__ import annotations

import csv
import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .activity import (ONLINE_KINDS, ORDERED_KINDS, DEFAULT_GAP_THRESHOLD, ActivityEvent, Session,
                       SocialGraph, group_by_user, segment_sessions)
from .bursts import STAT_NAMES, detect_bursts

FEATURE_NAMES = (
    ["pr", "onoff", "sc_tie_ratio", "sc_interacted_ratio", "ssb",
     "emoticons_per_post", "stickers_per_post", "selfies_per_post"]
    + [f"bi_{s}" for s in STAT_NAMES]
    + [f"bl_{s}" for s in STAT_NAMES]
    + ["daily_duration", "daily_sessions", "clustering_coef", "age", "gender", "game_posts"]
)
N_FEATURES = len(FEATURE_NAMES)
FEATURE_INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}

# column groups, used by ablations and the acceptance checks
FEATURE_GROUPS = {
    "PR": ["pr"],
    "ONOFF": ["onoff"],
    "SC": ["sc_tie_ratio", "sc_interacted_ratio"],
    "SSB": ["ssb"],
    "SD": ["emoticons_per_post", "stickers_per_post", "selfies_per_post"],
    "TEMP": [f"bi_{s}" for s in STAT_NAMES] + [f"bl_{s}" for s in STAT_NAMES],
    "UT": ["daily_duration", "daily_sessions"],
    "DIS": ["clustering_coef"],
    "PROF": ["age", "gender", "game_posts"],
}

DAY = 86400
MISSING = np.nan


@dataclass(frozen=True)
class FeatureConfig:
    strong_tie_threshold: float = 5.0
    gap_threshold: float = DEFAULT_GAP_THRESHOLD
    burst_scale: float = 2.0
    burst_gamma: float = 1.0
    burst_kinds: tuple[str, ...] = ("like", "comment", "post")


@dataclass
class FeatureMatrix:
    users: list[str]
    values: np.ndarray
    mask: np.ndarray
    source_id: str = ""
    names: list[str] = field(default_factory=lambda: list(FEATURE_NAMES))

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.shape != (len(self.users), len(self.names)) or self.mask.shape != self.values.shape:
            raise ValueError("values/mask shape does not match users x features")
        if len(self.users) < 1:
            raise ValueError("feature matrix needs at least one user")
        self.values = np.where(self.mask, self.values, MISSING)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def row(self, user: str) -> np.ndarray:
        return self.values[self.users.index(user)]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def filled(self, fill: float = 0.0) -> np.ndarray:
        return np.where(self.mask, self.values, fill)

    def select(self, names: Sequence[str]) -> "FeatureMatrix":
        idx = [self.names.index(n) for n in names]
        return FeatureMatrix(list(self.users), self.values[:, idx], self.mask[:, idx], self.source_id, list(names))

    def reindex(self, users: Sequence[str]) -> "FeatureMatrix":
        """Rows in ``users`` order; users unknown to this matrix become fully masked."""
        pos = {u: i for i, u in enumerate(self.users)}
        vals = np.full((len(users), len(self.names)), MISSING)
        mask = np.zeros((len(users), len(self.names)), dtype=bool)
        for r, u in enumerate(users):
            if u in pos:
                vals[r] = self.values[pos[u]]
                mask[r] = self.mask[pos[u]]
        return FeatureMatrix(list(users), vals, mask, self.source_id, list(self.names))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["user_id"] + list(self.names))
            for u, vals, m in zip(self.users, self.values, self.mask):
                writer.writerow([u] + [f"{v:.12g}" if ok else "" for v, ok in zip(vals, m)])

    @classmethod
    def from_csv(cls, path: str | Path, source_id: str = "") -> "FeatureMatrix":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            users, rows = [], []
            for rec in reader:
                users.append(rec[0])
                rows.append([np.nan if c == "" else float(c) for c in rec[1:]])
        vals = np.array(rows, dtype=float).reshape(len(users), len(header) - 1)
        return cls(users, vals, ~np.isnan(vals), source_id, header[1:])


# -- individual features ------------------------------------------------------

def _ratio(num: float, den: float) -> float:
    return (num + 1.0) / (den + 1.0)


def parasociality(n_out: int, n_in: int) -> float:
    """Smoothed outbound/inbound action ratio."""
    return _ratio(n_out, n_in)


def action_counts(events: Iterable[ActivityEvent]) -> tuple[Counter, Counter]:
    """Outbound and inbound counts of targeted like/comment/post actions per user."""
    out, inbound = Counter(), Counter()
    for ev in events:
        t = ev.target_user_id
        if ev.kind in ONLINE_KINDS and t is not None and t != ev.user_id:
            out[ev.user_id] += 1
            inbound[t] += 1
    return out, inbound


def onoff_ratio(events: Sequence[ActivityEvent]) -> float:
    n_on = sum(1 for e in events if e.kind in ONLINE_KINDS)
    n_off = sum(1 for e in events if e.offline_flag)
    return _ratio(n_on, n_off)


def social_capital(user: str, graph: SocialGraph, strong_tie_threshold: float = 5.0) -> tuple[float, float]:
    """(strong/weak tie ratio, fraction of friends interacted with); NaN pair if friendless."""
    friends = graph.neighbors(user)
    if not friends:
        return MISSING, MISSING
    weights = np.fromiter(friends.values(), dtype=float)
    n_strong = int(np.count_nonzero(weights >= strong_tie_threshold))
    n_weak = weights.size - n_strong
    return _ratio(n_strong, n_weak), np.count_nonzero(weights > 0) / weights.size


def search_browse_ratio(events: Sequence[ActivityEvent]) -> float:
    """Smoothed ratio of first-actor to later-actor likes/comments."""
    first = later = 0
    for e in events:
        if e.kind in ORDERED_KINDS and e.like_order is not None:
            if e.like_order == 1:
                first += 1
            else:
                later += 1
    return _ratio(first, later)


def self_disclosure(events: Sequence[ActivityEvent]) -> tuple[float, float, float]:
    posts = [e for e in events if e.kind == "post"]
    if not posts:
        return MISSING, MISSING, MISSING
    n = len(posts)
    return (sum(e.emoticon_count for e in posts) / n,
            sum(e.sticker_count for e in posts) / n,
            sum(e.selfie_count for e in posts) / n)


def temporal_features(events: Sequence[ActivityEvent], config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Burst intensity and length statistics; all NaN without a burst."""
    kinds = set(config.burst_kinds)
    ts = sorted(e.timestamp for e in events if e.kind in kinds)
    report = detect_bursts(ts, config.burst_scale, config.burst_gamma)
    if report is None or not report.has_bursts:
        return np.full(10, MISSING)
    return report.feature_vector()


def usage_time(sessions: Sequence[Session], first_ts: int | None = None, last_ts: int | None = None) -> tuple[float, float]:
    """Mean daily online duration (s) and mean daily session count.

    The observation window runs from the day of the first to the day of the
    last event, inclusive; it defaults to the sessions' own span.
    """
    if not sessions:
        return 0.0, 0.0
    first_ts = sessions[0].start if first_ts is None else first_ts
    last_ts = sessions[-1].end if last_ts is None else last_ts
    days = max(int(last_ts // DAY) - int(first_ts // DAY) + 1, 1)
    total = sum(s.duration for s in sessions)
    return total / days, len(sessions) / days


def disinhibition(user: str, graph: SocialGraph) -> float:
    """Local clustering coefficient over declared or interacted friends."""
    friends = sorted(graph.neighbors(user))
    k = len(friends)
    if k < 2:
        return MISSING
    links = sum(1 for i in range(k) for j in range(i + 1, k) if graph.has_edge(friends[i], friends[j]))
    return 2.0 * links / (k * (k - 1))


def profile_features(profile: Mapping | None, events: Sequence[ActivityEvent]) -> tuple[float, float, float]:
    """(age, gender code with male=1/female=0, game-post count)."""
    games = float(sum(1 for e in events if e.kind == "game_post"))
    if not profile:
        return MISSING, MISSING, games
    age = profile.get("age")
    age = MISSING if age in (None, "") else float(age)
    gender = str(profile.get("gender") or "").strip().lower()
    code = {"male": 1.0, "m": 1.0, "1": 1.0, "female": 0.0, "f": 0.0, "0": 0.0}.get(gender, MISSING)
    return age, code, games


# -- assembly -----------------------------------------------------------------

def user_features(user: str, events: Sequence[ActivityEvent], graph: SocialGraph, n_out: int, n_in: int,
                  profile: Mapping | None, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """All 24 columns for one user; NaN marks masked cells."""
    row = np.full(N_FEATURES, MISSING)
    row[0] = parasociality(n_out, n_in)
    row[1] = onoff_ratio(events)
    row[2], row[3] = social_capital(user, graph, config.strong_tie_threshold)
    row[4] = search_browse_ratio(events)
    row[5:8] = self_disclosure(events)
    row[8:18] = temporal_features(events, config)
    if events:
        sessions = segment_sessions(events, config.gap_threshold, user)
        row[18:20] = usage_time(sessions, events[0].timestamp, events[-1].timestamp)
    else:
        row[18:20] = 0.0
    row[20] = disinhibition(user, graph)
    row[21:24] = profile_features(profile, events)
    return row


def extract_features(events: Sequence[ActivityEvent], graph: SocialGraph, users: Sequence[str],
                     profiles: Mapping[str, Mapping] | None = None, source_id: str = "",
                     config: FeatureConfig = FeatureConfig(), present: Iterable[str] | None = None) -> FeatureMatrix:
    """Feature matrix for one source.

    Users not in ``present`` (default: users who authored at least one event)
    did not take part in the source and get fully masked rows.
    """
    by_user = group_by_user(events)
    present = set(by_user) if present is None else set(present)
    n_out, n_in = action_counts(events)
    profiles = profiles or {}
    vals = np.full((len(users), N_FEATURES), MISSING)
    for r, u in enumerate(users):
        if u not in present:
            continue
        vals[r] = user_features(u, by_user.get(u, []), graph, n_out[u], n_in[u], profiles.get(u), config)
    return FeatureMatrix(list(users), vals, ~np.isnan(vals), source_id)


# -- normalization ------------------------------------------------------------

Norms = dict[str, "tuple[float, float] | None"]


def normalize(matrix: FeatureMatrix, training_rows: Sequence[int] | None = None) -> tuple[FeatureMatrix, Norms]:
    """Column z-scores using observed training cells (population sd).

    Zero-variance columns map to 0; columns with no observed training cell
    keep their values masked and get ``None`` statistics.
    """
    rows = np.arange(matrix.shape[0]) if training_rows is None else np.asarray(training_rows)
    norms: Norms = {}
    for j, name in enumerate(matrix.names):
        col = matrix.values[rows, j]
        obs = col[matrix.mask[rows, j]]
        norms[name] = None if obs.size == 0 else (float(obs.mean()), float(obs.std()))
    return apply_normalization(matrix, norms), norms


def apply_normalization(matrix: FeatureMatrix, norms: Norms) -> FeatureMatrix:
    vals = matrix.values.copy()
    mask = matrix.mask.copy()
    for j, name in enumerate(matrix.names):
        stat = norms.get(name)
        if stat is None:
            mask[:, j] = False
            continue
        mean, sd = stat
        vals[:, j] = 0.0 if sd == 0 else (vals[:, j] - mean) / sd
    return FeatureMatrix(list(matrix.users), vals, mask, matrix.source_id, list(matrix.names))


def save_norms(norms: Norms, path: str | Path) -> None:
    payload = {k: (None if v is None else {"mean": v[0], "sd": v[1]}) for k, v in norms.items()}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=False) + "\n")


def load_norms(path: str | Path) -> Norms:
    raw = json.loads(Path(path).read_text())
    return {k: (None if v is None else (float(v["mean"]), float(v["sd"]))) for k, v in raw.items()}
