"""End-to-end glue: cohort -> per-source features -> representations -> cross-validated metrics.

Feature normalization and tensor factorization never see labels, so they are
fitted once over the full roster; only the classifiers are cross-validated.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .activity import ActivityEvent, SocialGraph, build_graph
from .evaluation import ClassifierConfig, CrossValResult, crossval
from .features import FeatureConfig, FeatureMatrix, extract_features, normalize
from .stm import StmConfig, StmFactors, assemble_tensor, concatenate_baseline, sgd_fit
from .synth import SyntheticCohort

logger = logging.getLogger(__name__)

METHODS = ("stm", "tucker", "cf")


@dataclass
class PipelineConfig:
    features: FeatureConfig = field(default_factory=FeatureConfig)
    stm: StmConfig = field(default_factory=StmConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    labeled_fraction: float = 0.2
    impute: bool = False


def source_features(events: Mapping[str, Sequence[ActivityEvent]], friends: Sequence[tuple[str, str]],
                    profiles: Mapping[str, Mapping], users: Sequence[str],
                    config: FeatureConfig = FeatureConfig()) -> list[FeatureMatrix]:
    """Raw (unnormalized) feature matrix per source, each over the full roster."""
    out = []
    for src, evs in events.items():
        graph = build_graph(evs, friends)
        out.append(extract_features(evs, graph, users, profiles, src, config))
    return out


def interaction_graph(events: Mapping[str, Sequence[ActivityEvent]], users: Sequence[str]) -> SocialGraph:
    """Interaction counts pooled over all sources, restricted to the roster."""
    allowed = set(users)
    pooled = [e for evs in events.values() for e in evs
              if e.user_id in allowed and (e.target_user_id is None or e.target_user_id in allowed)]
    g = build_graph(pooled)
    return SocialGraph(users, {k: w for k, w in g.edges.items() if w > 0})


def standardize(X: np.ndarray) -> np.ndarray:
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    return (X - mu) / np.where(sd > 0, sd, 1.0)


def select_labeled(groups: Sequence, fraction: float, seed: int = 0) -> np.ndarray:
    """Labeled mask holding ``fraction`` of every group (rounded), chosen at random."""
    groups = np.asarray(groups)
    rng = np.random.default_rng([seed, 11])
    mask = np.zeros(groups.size, dtype=bool)
    for g in sorted(set(groups.tolist())):
        idx = np.flatnonzero(groups == g)
        take = int(round(fraction * idx.size))
        mask[rng.permutation(idx)[:take]] = True
    return mask


@dataclass
class Representations:
    users: list[str]
    matrices: list[FeatureMatrix]
    graph: SocialGraph
    X: dict[str, np.ndarray]
    factors: dict[str, StmFactors] = field(default_factory=dict)


def build_representations(cohort: SyntheticCohort, config: PipelineConfig = PipelineConfig(),
                          methods: Sequence[str] = METHODS) -> Representations:
    users = list(cohort.users)
    raw = source_features(cohort.events, cohort.friends, cohort.profiles, users, config.features)
    matrices = [normalize(m)[0] for m in raw]
    graph = interaction_graph(cohort.events, users)
    reps = Representations(users, matrices, graph, {})
    tensor = None
    for method in methods:
        if method == "cf":
            reps.X["cf"] = standardize(concatenate_baseline(matrices, users).values)
            continue
        if method not in ("stm", "tucker"):
            raise ValueError(f"unknown representation {method!r}")
        tensor = tensor or assemble_tensor(matrices, users, impute=config.impute)
        cfg = config.stm if method == "stm" else replace(config.stm, lambda1=0.0)
        f = sgd_fit(tensor, graph if method == "stm" else None, cfg)
        logger.info("%s: %d epochs, loss %.4g", method, len(f.loss_trace), f.loss_trace[-1])
        reps.factors[method] = f
        reps.X[method] = standardize(f.U)
    return reps


def compare_methods(cohort: SyntheticCohort, config: PipelineConfig = PipelineConfig(), seed: int = 0,
                    methods: Sequence[str] = METHODS) -> dict[str, CrossValResult]:
    """5-fold CV of every representation on the same folds and labeled set."""
    config = replace(config, stm=replace(config.stm, seed=seed))
    reps = build_representations(cohort, config, methods)
    truth = cohort.labels()
    labeled = select_labeled(cohort.archetypes, config.labeled_fraction, seed)
    everyone = np.ones(len(truth), dtype=bool)
    return {m: crossval(reps.X[m], truth, labeled, config.classifier, seed, has_truth=everyone) for m in methods}
