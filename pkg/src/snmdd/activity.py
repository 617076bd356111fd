"""Event and interaction-graph data model, log ingestion and session segmentation."""

from __future__ import annotations

import csv
import json
import logging
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

EVENT_KINDS = ("like", "comment", "post", "checkin", "event_rsvp", "game_post")
ONLINE_KINDS = frozenset({"like", "comment", "post"})
ORDERED_KINDS = frozenset({"like", "comment"})

DEFAULT_GAP_THRESHOLD = 300


@dataclass(frozen=True)
class ActivityEvent:
    user_id: str
    timestamp: int
    kind: str
    target_user_id: str | None = None
    like_order: int | None = None
    emoticon_count: int = 0
    sticker_count: int = 0
    selfie_count: int = 0
    offline_flag: bool = False
    item_id: str | None = None

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.timestamp < 0:
            raise ValueError("timestamp must be non-negative")
        if self.like_order is not None:
            if self.kind not in ORDERED_KINDS:
                raise ValueError("like_order is only valid for like/comment events")
            if self.like_order < 1:
                raise ValueError("like_order must be a positive integer")
        if self.kind != "post" and (self.emoticon_count or self.sticker_count or self.selfie_count):
            raise ValueError("emoticon/sticker/selfie counts are only valid for posts")
        if min(self.emoticon_count, self.sticker_count, self.selfie_count) < 0:
            raise ValueError("counts must be non-negative")

    def to_record(self) -> dict:
        rec = {"user_id": self.user_id, "timestamp": self.timestamp, "kind": self.kind}
        if self.target_user_id is not None:
            rec["target_user_id"] = self.target_user_id
        if self.like_order is not None:
            rec["like_order"] = self.like_order
        if self.item_id is not None:
            rec["item_id"] = self.item_id
        if self.kind == "post":
            rec["emoticon_count"] = self.emoticon_count
            rec["sticker_count"] = self.sticker_count
            rec["selfie_count"] = self.selfie_count
        if self.offline_flag:
            rec["offline_flag"] = True
        return rec


@dataclass(frozen=True)
class Session:
    user_id: str
    start: int
    end: int
    event_count: int

    @property
    def duration(self) -> int:
        return self.end - self.start


@dataclass
class IngestResult:
    events: list[ActivityEvent]
    malformed: int
    malformed_lines: list[int]


class SocialGraph:
    """Weighted undirected interaction graph.

    ``weights[(a, b)]`` with ``a < b`` holds the interaction count. Declared
    friendships without interactions are kept as zero-weight edges so that
    friend counts and clustering coefficients see them.
    """

    def __init__(self, nodes: Iterable[str] = (), weights: dict[tuple[str, str], float] | None = None):
        self._nodes = set(nodes)
        self._weights: dict[tuple[str, str], float] = {}
        self._adj: dict[str, dict[str, float]] = defaultdict(dict)
        for (a, b), w in (weights or {}).items():
            self._set(a, b, w)
        for n in self._nodes:
            self._adj.setdefault(n, {})

    def _set(self, a: str, b: str, w: float) -> None:
        if a == b:
            return
        if w < 0:
            raise ValueError("edge weights must be non-negative")
        key = (a, b) if a < b else (b, a)
        self._weights[key] = float(w)
        self._nodes.update(key)
        self._adj[a][b] = float(w)
        self._adj[b][a] = float(w)

    @property
    def nodes(self) -> list[str]:
        return sorted(self._nodes)

    @property
    def edges(self) -> dict[tuple[str, str], float]:
        return dict(self._weights)

    def __len__(self) -> int:
        return len(self._nodes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SocialGraph):
            return NotImplemented
        return self._nodes == other._nodes and self._weights == other._weights

    def weight(self, a: str, b: str) -> float:
        return self._adj.get(a, {}).get(b, 0.0)

    def has_edge(self, a: str, b: str) -> bool:
        return b in self._adj.get(a, {})

    def neighbors(self, u: str) -> dict[str, float]:
        """Friends of ``u`` (declared or interacted) mapped to edge weight."""
        return dict(self._adj.get(u, {}))

    def degree(self, u: str) -> float:
        """Weighted degree d_uu = sum_j a_uj."""
        return float(sum(self._adj.get(u, {}).values()))

    def adjacency(self, order: Sequence[str]) -> np.ndarray:
        """Dense weighted adjacency aligned to ``order``; nodes outside the graph get empty rows."""
        index = {u: i for i, u in enumerate(order)}
        if len(index) != len(order):
            raise ValueError("duplicate user ids in roster")
        A = np.zeros((len(order), len(order)))
        for (a, b), w in self._weights.items():
            if a in index and b in index:
                A[index[a], index[b]] = w
                A[index[b], index[a]] = w
        return A

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["user_a", "user_b", "weight"])
            for (a, b), w in sorted(self._weights.items()):
                writer.writerow([a, b, _fmt_weight(w)])

    @classmethod
    def from_csv(cls, path: str | Path) -> "SocialGraph":
        weights = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                weights[(row["user_a"], row["user_b"])] = float(row["weight"])
        return cls(weights=weights)


def _fmt_weight(w: float) -> str:
    return str(int(w)) if float(w).is_integer() else repr(w)


def _parse_record(rec: dict) -> ActivityEvent:
    for key in ("user_id", "timestamp", "kind"):
        if key not in rec or rec[key] is None:
            raise KeyError(key)
    target = rec.get("target_user_id")
    order = rec.get("like_order")
    item = rec.get("item_id")
    return ActivityEvent(
        user_id=str(rec["user_id"]),
        timestamp=int(rec["timestamp"]),
        kind=str(rec["kind"]),
        target_user_id=None if target is None else str(target),
        like_order=None if order is None else int(order),
        emoticon_count=int(rec.get("emoticon_count", 0) or 0),
        sticker_count=int(rec.get("sticker_count", 0) or 0),
        selfie_count=int(rec.get("selfie_count", 0) or 0),
        offline_flag=bool(rec.get("offline_flag", False)),
        item_id=None if item is None else str(item),
    )


def ingest_events(path: str | Path, source: str | None = None) -> IngestResult:
    """Read a line-delimited JSON event log.

    Lines that are not valid JSON objects, lack ``user_id``/``timestamp``/``kind``
    or violate the event invariants are skipped and counted as malformed.
    Unknown keys are ignored. Raises ``OSError`` if the file cannot be read.
    """
    events: list[ActivityEvent] = []
    bad: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if not isinstance(rec, dict):
                    raise TypeError("record is not an object")
                events.append(_parse_record(rec))
            except (ValueError, KeyError, TypeError):
                bad.append(lineno)
    if bad:
        logger.warning("%s: skipped %d malformed line(s)", source or path, len(bad))
    events = fill_like_order(events)
    events.sort(key=lambda e: (e.user_id, e.timestamp))
    return IngestResult(events, len(bad), bad)


def write_events(events: Iterable[ActivityEvent], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps(ev.to_record(), sort_keys=True) + "\n")


def fill_like_order(events: list[ActivityEvent]) -> list[ActivityEvent]:
    """Reconstruct missing ``like_order`` from timestamps of actions on the same item."""
    by_item: dict[str, list[int]] = defaultdict(list)
    for idx, ev in enumerate(events):
        if ev.kind in ORDERED_KINDS and ev.item_id is not None:
            by_item[ev.item_id].append(idx)
    out = list(events)
    for idxs in by_item.values():
        if all(events[i].like_order is not None for i in idxs):
            continue
        ranked = sorted(idxs, key=lambda i: (events[i].timestamp, events[i].user_id))
        for rank, i in enumerate(ranked, 1):
            if events[i].like_order is None:
                ev = events[i]
                out[i] = ActivityEvent(**{**ev.__dict__, "like_order": rank})
    return out


def read_friend_list(path: str | Path) -> list[tuple[str, str]]:
    with open(path, newline="") as fh:
        return [(row["user_a"], row["user_b"]) for row in csv.DictReader(fh)]


def write_friend_list(pairs: Iterable[tuple[str, str]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_a", "user_b"])
        writer.writerows(pairs)


def build_graph(events: Iterable[ActivityEvent], declared_friend_list: Iterable[tuple[str, str]] | None = None) -> SocialGraph:
    """Undirected interaction graph; each targeted action adds 1 to its edge.

    Self-directed actions are ignored. Declared friendships without any
    interaction appear as zero-weight edges.
    """
    counts: dict[tuple[str, str], float] = defaultdict(float)
    nodes: set[str] = set()
    for ev in events:
        nodes.add(ev.user_id)
        t = ev.target_user_id
        if t is None:
            continue
        nodes.add(t)
        if t == ev.user_id:
            continue
        key = (ev.user_id, t) if ev.user_id < t else (t, ev.user_id)
        counts[key] += 1
    for a, b in declared_friend_list or ():
        if a == b:
            continue
        key = (a, b) if a < b else (b, a)
        counts.setdefault(key, 0.0)
    return SocialGraph(nodes, counts)


def segment_sessions(events: Sequence[ActivityEvent] | Sequence[int], gap_threshold: float = DEFAULT_GAP_THRESHOLD,
                     user_id: str | None = None) -> list[Session]:
    """Split one user's time-sorted events into maximal runs with gaps <= ``gap_threshold``.

    Accepts events or bare timestamps.
    """
    if gap_threshold <= 0:
        raise ValueError("gap_threshold must be positive")
    if len(events) == 0:
        return []
    if isinstance(events[0], ActivityEvent):
        user_id = user_id if user_id is not None else events[0].user_id
        ts = [e.timestamp for e in events]
    else:
        ts = [int(t) for t in events]
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise ValueError("events must be sorted by timestamp")
    user_id = user_id or ""
    sessions = []
    start = prev = ts[0]
    count = 1
    for t in ts[1:]:
        if t - prev > gap_threshold:
            sessions.append(Session(user_id, start, prev, count))
            start, count = t, 0
        count += 1
        prev = t
    sessions.append(Session(user_id, start, prev, count))
    return sessions


def group_by_user(events: Iterable[ActivityEvent]) -> dict[str, list[ActivityEvent]]:
    out: dict[str, list[ActivityEvent]] = defaultdict(list)
    for ev in events:
        out[ev.user_id].append(ev)
    for evs in out.values():
        evs.sort(key=lambda e: e.timestamp)
    return dict(out)
