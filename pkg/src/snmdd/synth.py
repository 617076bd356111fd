"""Seeded synthetic multi-source cohorts with planted behavioural archetypes.

Five archetypes are planted: three disorder types (CR, NC, IO) with bursty
activity streams and two control types (heavy users with a high constant
rate, normal users with a sparse constant rate). Friendships come from a
degree-corrected planted-partition model whose same-archetype edge
probability is ``1 + 9h`` times the cross-archetype one.

Every random draw flows from ``SeedSequence`` children keyed by
(seed, purpose, user, source), so output does not depend on iteration order.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .activity import ActivityEvent, read_friend_list, write_events, write_friend_list, ingest_events

ARCHETYPES = ("CR", "NC", "IO", "heavy", "normal")
DISORDERS = ("CR", "NC", "IO")
EPOCH = 1_600_000_000  # first second of every synthetic window
SOURCE_NAMES = ("fb", "ig", "tw", "sc", "wb")

STANDARD_SIZES = {"CR": 90, "NC": 90, "IO": 90, "heavy": 115, "normal": 115}

_NUMERIC_MIX = ("online_per_day", "post_share", "comment_share", "wall_post_prob", "attractiveness",
                "tie_sharpness", "first_actor_prob", "offline_per_day", "game_per_day", "emoticons_per_post",
                "stickers_per_post", "selfies_per_post", "closure_prob")
_PROBS = ("post_share", "comment_share", "wall_post_prob", "first_actor_prob", "closure_prob")


def load_params(path: str | Path | None = None) -> dict:
    """Archetype fixture file; defaults to the packaged ``data/archetypes.json``."""
    if path is None:
        text = resources.files("snmdd").joinpath("data/archetypes.json").read_text()
    else:
        text = Path(path).read_text()
    return json.loads(text)


def _rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *keys]))


@dataclass
class SyntheticCohort:
    users: list[str]
    archetypes: list[str]
    friends: list[tuple[str, str]]
    events: dict[str, list[ActivityEvent]]
    profiles: dict[str, dict]
    seed: int = 0
    homophily: float = 0.0
    sizes: dict[str, int] = field(default_factory=dict)
    block_edges: list[tuple[str, str]] = field(default_factory=list)

    @property
    def sources(self) -> list[str]:
        return list(self.events)

    def labels(self) -> np.ndarray:
        return oracle_labels(self.archetypes)

    def archetype_of(self) -> dict[str, str]:
        return dict(zip(self.users, self.archetypes))

    def write(self, out: str | Path) -> Path:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        for src, evs in self.events.items():
            write_events(evs, out / f"events_{src}.jsonl")
        write_friend_list(self.friends, out / "friends.csv")
        with open(out / "profiles.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["user_id", "age", "gender"])
            for u in self.users:
                p = self.profiles.get(u, {})
                writer.writerow([u, p.get("age", ""), p.get("gender", "")])
        write_truth(self.users, self.archetypes, out / "truth.csv")
        meta = {"seed": self.seed, "homophily": self.homophily, "sizes": self.sizes, "sources": self.sources}
        (out / "cohort.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return out


def oracle_labels(archetypes: Sequence[str]) -> np.ndarray:
    """+1/-1 label vectors (CR, NC, IO); heavy and normal users are all -1."""
    out = -np.ones((len(archetypes), 3), dtype=int)
    for i, a in enumerate(archetypes):
        if a in DISORDERS:
            out[i, DISORDERS.index(a)] = 1
    return out


def write_truth(users: Sequence[str], archetypes: Sequence[str], path: str | Path) -> None:
    labels = oracle_labels(archetypes)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "cr", "nc", "io", "archetype"])
        for u, lab, a in zip(users, labels, archetypes):
            writer.writerow([u, *[int(v) for v in lab], a])


def read_truth(path: str | Path) -> tuple[list[str], np.ndarray, list[str]]:
    users, labels, arch = [], [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            users.append(row["user_id"])
            labels.append([int(row["cr"]), int(row["nc"]), int(row["io"])])
            arch.append(row.get("archetype", ""))
    return users, np.array(labels, dtype=int).reshape(-1, 3), arch


def read_profiles(path: str | Path) -> dict[str, dict]:
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rec = {}
            if row.get("age"):
                rec["age"] = float(row["age"])
            if row.get("gender"):
                rec["gender"] = row["gender"]
            out[row["user_id"]] = rec
    return out


# -- graph ------------------------------------------------------------------------

def block_probabilities(archetypes: Sequence[str], propensity: np.ndarray, homophily: float,
                        mean_degree: float) -> np.ndarray:
    """Edge probability matrix of the degree-corrected planted-partition model."""
    arch = np.asarray(archetypes)
    same = arch[:, None] == arch[None, :]
    factor = np.where(same, 1.0 + 9.0 * homophily, 1.0)
    raw = np.outer(propensity, propensity) * factor
    np.fill_diagonal(raw, 0.0)
    base = mean_degree * len(arch) / raw.sum()
    return np.minimum(raw * base, 1.0)


def planted_partition_graph(archetypes: Sequence[str], homophily: float, mean_degree: float, seed: int,
                            propensity: np.ndarray | None = None) -> tuple[list[tuple[int, int]], np.ndarray]:
    """Sample the block-model stage; returns (edge list as index pairs, probability matrix)."""
    n = len(archetypes)
    propensity = np.ones(n) if propensity is None else np.asarray(propensity, dtype=float)
    P = block_probabilities(archetypes, propensity, homophily, mean_degree)
    iu, ju = np.triu_indices(n, k=1)
    draws = _rng(seed, 1).random(iu.size)
    keep = draws < P[iu, ju]
    return list(zip(iu[keep].tolist(), ju[keep].tolist())), P


def _close_triangles(adj: list[set[int]], closure: np.ndarray, seed: int) -> None:
    snapshot = [sorted(a) for a in adj]
    for u, nbrs in enumerate(snapshot):
        k = len(nbrs)
        if k < 2 or closure[u] <= 0:
            continue
        rng = _rng(seed, 2, u)
        p = min(1.0, closure[u] * 2.0 / (k - 1))
        for a in range(k):
            hits = np.flatnonzero(rng.random(k - a - 1) < p)
            for off in hits:
                x, y = nbrs[a], nbrs[a + 1 + off]
                adj[x].add(y)
                adj[y].add(x)


# -- streams ----------------------------------------------------------------------

def poisson_times(rate_per_day: float, days: float, rng: np.random.Generator) -> np.ndarray:
    n = rng.poisson(max(rate_per_day, 0.0) * days)
    return np.sort(rng.uniform(0.0, days * 86400.0, n))


def bursty_times(p: Mapping, days: float, rng: np.random.Generator) -> np.ndarray:
    """Alternating quiet/burst renewal process.

    Burst durations grow over the window (tolerance); some quiet spells are
    long abstinences followed by a doubled burst (relapse).
    """
    b = p["burst"]
    horizon = days * 86400.0
    quiet_rate = b["quiet_rate_per_day"] / 86400.0
    burst_rate = b["burst_rate_per_hour"] / 3600.0
    mean_burst_events = b["burst_rate_per_hour"] * b["burst_minutes"] * (1 + b["burst_growth"] / 2) / 60.0
    bursts_per_day = max(p["online_per_day"] - b["quiet_rate_per_day"], 0.5) / mean_burst_events
    mean_quiet = 86400.0 / bursts_per_day
    times = []
    t = rng.exponential(mean_quiet / 2)
    if quiet_rate > 0:
        times.extend(rng.uniform(0, min(t, horizon), rng.poisson(quiet_rate * min(t, horizon))))
    while t < horizon:
        relapse = rng.random() < b["relapse_prob"]
        scale = b["burst_minutes"] * 60.0 * (1 + b["burst_growth"] * t / horizon)
        length = scale * rng.lognormal(-0.5 * b["burst_minutes_sd"] ** 2, b["burst_minutes_sd"])
        if relapse:
            length *= 2.0
        end = min(t + length, horizon)
        times.extend(rng.uniform(t, end, rng.poisson(burst_rate * (end - t))))
        gap = rng.exponential(mean_quiet)
        if relapse:
            gap += rng.exponential(b["abstinence_hours"] * 3600.0)
        nxt = min(end + gap, horizon)
        times.extend(rng.uniform(end, nxt, rng.poisson(quiet_rate * (nxt - end))))
        t = nxt
    return np.sort(np.asarray(times))


# -- generation -------------------------------------------------------------------

def _user_params(arch: str, params: dict, rng: np.random.Generator) -> dict:
    spec = params["archetypes"]
    base = spec["normal"]
    own = spec[arch]
    het = params["heterogeneity_sd"]
    sev = 1.0
    if arch in DISORDERS:
        sev = rng.beta(params["severity"]["a"], params["severity"]["b"])
    out = dict(own)
    for key in _NUMERIC_MIX:
        val = base[key] + sev * (own[key] - base[key])
        val *= rng.lognormal(-0.5 * het ** 2, het)
        out[key] = min(val, 1.0) if key in _PROBS else val
    out["severity"] = sev
    return out


def generate(sizes: Mapping[str, int] | None = None, homophily: float = 0.7, n_sources: int = 2, seed: int = 0,
             missingness: float | None = None, params: dict | None = None) -> SyntheticCohort:
    """Draw a cohort.

    ``missingness`` overrides every archetype's per-source participation
    probability with ``1 - missingness``. Users drawn into no source are
    assigned one source at random.
    """
    sizes = dict(STANDARD_SIZES if sizes is None else sizes)
    params = params or load_params()
    if any(v < 0 for v in sizes.values()):
        raise ValueError("archetype sizes must be non-negative")
    if sum(1 for v in sizes.values() if v > 0) < 2:
        raise ValueError("need at least two archetypes present")
    if not 0.0 <= homophily <= 1.0:
        raise ValueError("homophily must lie in [0, 1]")
    if not 1 <= n_sources <= len(SOURCE_NAMES):
        raise ValueError(f"n_sources must be between 1 and {len(SOURCE_NAMES)}")
    spec = params["archetypes"]
    days = float(params["window_days"])

    roster = [a for a in ARCHETYPES for _ in range(sizes.get(a, 0))]
    archetypes = [roster[i] for i in _rng(seed, 0).permutation(len(roster))]
    n = len(archetypes)
    users = [f"u{i:04d}" for i in range(n)]
    up = [_user_params(a, params, _rng(seed, 3, i)) for i, a in enumerate(archetypes)]

    propensity = np.array([spec[a]["degree_propensity"] for a in archetypes])
    propensity *= _rng(seed, 4).lognormal(-0.045, 0.3, n)
    pairs, _ = planted_partition_graph(archetypes, homophily, params["mean_degree"], seed, propensity)
    adj: list[set[int]] = [set() for _ in range(n)]
    for a, b in pairs:
        adj[a].add(b)
        adj[b].add(a)
    _close_triangles(adj, np.array([p["closure_prob"] for p in up]), seed)
    friends = sorted((users[a], users[b]) for a in range(n) for b in adj[a] if a < b)

    # symmetric tie affinities, boosted between same-archetype friends
    affinity: dict[tuple[int, int], float] = {}
    boost = params["tie_same_type_boost"]
    for a in range(n):
        for b in sorted(adj[a]):
            if a < b:
                g = _rng(seed, 5, a, b).gamma(1.0)
                affinity[(a, b)] = g * (boost if archetypes[a] == archetypes[b] else 1.0)

    sources = list(SOURCE_NAMES[:n_sources])
    participate = np.zeros((n, n_sources), dtype=bool)
    for i, p in enumerate(up):
        prob = p["participation"] if missingness is None else 1.0 - missingness
        r = _rng(seed, 6, i)
        participate[i] = r.random(n_sources) < prob
        if not participate[i].any():
            participate[i, r.integers(n_sources)] = True

    events: dict[str, list[ActivityEvent]] = {}
    for m, src in enumerate(sources):
        evs: list[ActivityEvent] = []
        for i in range(n):
            if participate[i, m]:
                evs.extend(_user_events(i, m, users, up, adj, affinity, participate[:, m], days, seed))
        evs.sort(key=lambda e: (e.user_id, e.timestamp, e.kind, e.target_user_id or ""))
        events[src] = evs

    profiles = {}
    for i, u in enumerate(users):
        r = _rng(seed, 8, i)
        rec = {}
        if r.random() >= params.get("profile_missing_prob", 0.1):
            rec["age"] = int(np.clip(round(r.normal(up[i]["age_mean"], 6.0)), 13, 80))
            rec["gender"] = "male" if r.random() < up[i]["male_prob"] else "female"
        profiles[u] = rec
    block_edges = [(users[a], users[b]) for a, b in pairs]
    return SyntheticCohort(users, archetypes, friends, events, profiles, seed, homophily, sizes, block_edges)


def _user_events(i, m, users, up, adj, affinity, present, days, seed) -> list[ActivityEvent]:
    p = up[i]
    rng = _rng(seed, 7, i, m)
    u = users[i]
    times = bursty_times(p, days, rng) if p["stream"] == "bursty" else poisson_times(p["online_per_day"], days, rng)
    nbrs = [j for j in sorted(adj[i]) if present[j]]
    if nbrs:
        w = np.array([affinity[(min(i, j), max(i, j))] * up[j]["attractiveness"] for j in nbrs])
        w = w ** p["tie_sharpness"]
        w = w / w.sum()
    out = []
    post_cut = p["post_share"]
    comment_cut = post_cut + p["comment_share"]
    for t in times.astype(np.int64):
        r = rng.random()
        kind = "post" if r < post_cut else ("comment" if r < comment_cut else "like")
        target = None
        if nbrs and (kind != "post" or rng.random() < p["wall_post_prob"]):
            target = users[nbrs[rng.choice(len(nbrs), p=w)]]
        if kind == "post":
            out.append(ActivityEvent(u, int(EPOCH + t), "post", target,
                                     emoticon_count=int(rng.poisson(p["emoticons_per_post"])),
                                     sticker_count=int(rng.poisson(p["stickers_per_post"])),
                                     selfie_count=int(rng.poisson(p["selfies_per_post"]))))
        else:
            order = 1 if rng.random() < p["first_actor_prob"] else 1 + int(rng.geometric(0.5))
            out.append(ActivityEvent(u, int(EPOCH + t), kind, target, like_order=order))
    for t in poisson_times(p["offline_per_day"], days, rng).astype(np.int64):
        kind = "checkin" if rng.random() < 0.5 else "event_rsvp"
        out.append(ActivityEvent(u, int(EPOCH + t), kind, offline_flag=True))
    for t in poisson_times(p["game_per_day"], days, rng).astype(np.int64):
        out.append(ActivityEvent(u, int(EPOCH + t), "game_post"))
    return out


def load_cohort(path: str | Path) -> SyntheticCohort:
    """Read a cohort directory written by :meth:`SyntheticCohort.write`."""
    path = Path(path)
    meta = json.loads((path / "cohort.json").read_text())
    users, _, arch = read_truth(path / "truth.csv")
    events = {src: ingest_events(path / f"events_{src}.jsonl", src).events for src in meta["sources"]}
    return SyntheticCohort(users, arch, read_friend_list(path / "friends.csv"), events,
                           read_profiles(path / "profiles.csv"), meta["seed"], meta["homophily"], meta["sizes"])
