"""Command-line driver.

Every subcommand writes its outputs plus ``manifest_<subcommand>.json`` into
``--out``. Settings come from built-in defaults, then an optional key=value
``--config`` file, then ``--<key>`` flags (e.g. ``--stm.lambda1 0.5``).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .activity import SocialGraph, build_graph, ingest_events, read_friend_list, write_events
from .analytics import (ablation_curve, community_ratios, friend_type_distribution, hop_distance_same_type,
                        write_long_csv, TYPES)
from .bursts import detect_bursts, write_burst_csv
from .evaluation import (ClassifierConfig, crossval, evaluate, information_gain_ranking, read_predictions,
                         train_classifiers, write_predictions)
from .features import FeatureConfig, FeatureMatrix, normalize, save_norms
from .pipeline import interaction_graph, select_labeled, source_features, standardize
from .stm import StmConfig, assemble_tensor, concatenate_baseline, sgd_fit, write_loss_trace
from .svm import load_models, predict, save_models
from .synth import STANDARD_SIZES, generate, read_profiles, read_truth

logger = logging.getLogger("snmdd")

COMMANDS = ("ingest", "bursts", "features", "tensor", "train", "predict", "evaluate", "synth", "analyze", "ablate")

# key -> (default, type, help)
SETTINGS: dict[str, tuple[object, type, str]] = {
    "seed": (0, int, "root seed for every random draw"),
    "burst.scale": (2.0, float, "burst-state rate multiplier s"),
    "burst.gamma": (1.0, float, "state-transition cost weight"),
    "features.strong_tie": (5.0, float, "interaction count at which a friendship is a strong tie"),
    "features.gap": (300.0, float, "session gap threshold in seconds"),
    "stm.method": ("stm", str, "representation: stm, tucker (no graph term) or cf (concatenation)"),
    "stm.rank_user": (10, int, "user rank R"),
    "stm.rank_feature": (10, int, "feature rank S"),
    "stm.rank_source": (0, int, "source rank T (0 = min(M, 5))"),
    "stm.lambda1": (0.1, float, "graph smoothing weight"),
    "stm.lambda2": (0.01, float, "user-factor norm weight"),
    "stm.eta": (0.003, float, "SGD step size"),
    "stm.epsilon": (1e-5, float, "stop when an epoch lowers the loss by less than this"),
    "stm.max_iter": (500, int, "maximum epochs"),
    "stm.init_scale": (0.5, float, "factors start uniform in [-a, a]"),
    "stm.impute": (False, bool, "fill missing cells with per-(feature, source) means"),
    "tsvm.method": ("tsvm", str, "classifier: tsvm or svm"),
    "tsvm.c": (1.0, float, "labeled hinge weight C"),
    "tsvm.cstar": (0.5, float, "unlabeled hinge weight C*"),
    "tsvm.epochs": (300, int, "SGD epochs per solve"),
    "tsvm.max_sweeps": (30, int, "label-switch sweeps per C* level"),
    "cv.folds": (5, int, "cross-validation folds"),
    "cv.labeled_fraction": (0.2, float, "fraction of users whose labels are visible"),
    "synth.homophily": (0.7, float, "planted homophily h in [0, 1]"),
    "synth.sources": (2, int, "number of sources"),
    "synth.missingness": (0.3, float, "per-source probability a user is absent"),
    "synth.sizes": (",".join(f"{k}={v}" for k, v in STANDARD_SIZES.items()), str, "users per archetype"),
    "analyze.max_rounds": (100, int, "label propagation round cap"),
    "ablate.bins": (10, int, "equal-frequency bins for information gain"),
}


class UsageError(Exception):
    pass


class MissingInput(Exception):
    pass


def _parse_bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(key: str, raw) -> object:
    default, typ, _ = SETTINGS[key]
    try:
        return _parse_bool(raw) if typ is bool else typ(raw)
    except ValueError:
        raise UsageError(f"bad value for {key}: {raw!r}") from None


def read_config(path: str | Path) -> dict[str, object]:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    p = Path(path)
    if not p.is_file():
        raise MissingInput(f"config file not found: {path}")
    for n, line in enumerate(p.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SETTINGS:
            raise UsageError(f"{path}:{n}: unknown config key {key!r}")
        out[key] = _convert(key, val)
    return out


def resolve_settings(args: argparse.Namespace) -> dict[str, object]:
    settings = {k: v[0] for k, v in SETTINGS.items()}
    if args.config:
        settings.update(read_config(args.config))
    for key in SETTINGS:
        val = getattr(args, key, None)
        if val is not None:
            settings[key] = _convert(key, val)
    return settings


def config_hash(settings: dict) -> str:
    return hashlib.sha256(json.dumps(settings, sort_keys=True).encode()).hexdigest()


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> dict[str, str]:
    import numba
    import scipy
    return {"snmdd": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def write_manifest(out: Path, command: str, settings: dict, inputs: list[Path], outputs: list[str],
                   extra: dict | None = None) -> None:
    files = []
    for p in inputs:
        if p.is_dir():
            files.extend(sorted(q for q in p.iterdir() if q.is_file() and not q.name.startswith("manifest_")))
        else:
            files.append(p)
    manifest = {
        "command": command,
        "inputs": [{"name": p.name, "sha256": _sha256(p)} for p in files],
        "outputs": sorted(outputs),
        "seed": settings["seed"],
        "config": settings,
        "config_hash": config_hash(settings),
        "versions": _versions(),
    }
    if extra:
        manifest.update(extra)
    (out / f"manifest_{command}.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _need(path: str | None, what: str) -> Path:
    if path is None:
        raise UsageError(f"--{what} is required")
    p = Path(path)
    if not p.exists():
        raise MissingInput(f"missing input: {p}")
    return p


def _feature_config(s: dict) -> FeatureConfig:
    return FeatureConfig(strong_tie_threshold=s["features.strong_tie"], gap_threshold=s["features.gap"],
                         burst_scale=s["burst.scale"], burst_gamma=s["burst.gamma"])


def _stm_config(s: dict) -> StmConfig:
    return StmConfig(rank_user=s["stm.rank_user"], rank_feature=s["stm.rank_feature"],
                     rank_source=s["stm.rank_source"] or None, lambda1=s["stm.lambda1"],
                     lambda2=s["stm.lambda2"], eta=s["stm.eta"], epsilon=s["stm.epsilon"],
                     max_iter=s["stm.max_iter"], init_scale=s["stm.init_scale"], seed=s["seed"])


def _classifier_config(s: dict) -> ClassifierConfig:
    return ClassifierConfig(method=s["tsvm.method"], C=s["tsvm.c"], C_star=s["tsvm.cstar"],
                            epochs=s["tsvm.epochs"], max_sweeps=s["tsvm.max_sweeps"])


def _parse_sizes(text: str) -> dict[str, int]:
    sizes = {}
    for part in text.split(","):
        if part.strip():
            k, _, v = part.partition("=")
            try:
                sizes[k.strip()] = int(v)
            except ValueError:
                raise UsageError(f"bad archetype size {part!r}") from None
    return sizes


def _cohort_sources(cohort: Path) -> list[str]:
    meta = cohort / "cohort.json"
    if meta.is_file():
        return list(json.loads(meta.read_text())["sources"])
    srcs = sorted(p.name[len("events_"):-len(".jsonl")] for p in cohort.glob("events_*.jsonl"))
    if not srcs:
        raise MissingInput(f"missing input: no events_<source>.jsonl in {cohort}")
    return srcs


def _load_cohort_inputs(cohort: Path):
    sources = _cohort_sources(cohort)
    events = {}
    for src in sources:
        events[src] = ingest_events(_need(str(cohort / f"events_{src}.jsonl"), "cohort")).events
    friends = read_friend_list(cohort / "friends.csv") if (cohort / "friends.csv").is_file() else []
    profiles = read_profiles(cohort / "profiles.csv") if (cohort / "profiles.csv").is_file() else {}
    users = sorted(profiles) if profiles else sorted({e.user_id for evs in events.values() for e in evs})
    return sources, events, friends, profiles, users


def _align_truth(users: list[str], truth_path: Path) -> tuple[np.ndarray, list[str]]:
    t_users, labels, arch = read_truth(truth_path)
    pos = {u: i for i, u in enumerate(t_users)}
    missing = [u for u in users if u not in pos]
    if missing:
        raise ValueError(f"{len(missing)} user(s) without truth rows, e.g. {missing[0]}")
    idx = [pos[u] for u in users]
    return labels[idx], [arch[i] for i in idx]


def _labeled_mask(users: list[str], truth: np.ndarray, groups: list[str], s: dict, path: str | None) -> np.ndarray:
    if path:
        p = _need(path, "labeled")
        flags = {}
        with open(p, newline="") as fh:
            for row in csv.DictReader(fh):
                flags[row["user_id"]] = row["labeled"] == "1"
        return np.array([flags.get(u, False) for u in users])
    keys = groups if any(groups) else ["".join(map(str, r)) for r in truth]
    return select_labeled(keys, s["cv.labeled_fraction"], s["seed"])


# -- subcommands -----------------------------------------------------------------

def cmd_synth(args, s, out):
    cohort = generate(_parse_sizes(s["synth.sizes"]), s["synth.homophily"], s["synth.sources"], s["seed"],
                      s["synth.missingness"])
    cohort.write(out)
    return [], sorted(p.name for p in out.iterdir() if not p.name.startswith("manifest_")), {}


def cmd_ingest(args, s, out):
    ev_path = _need(args.events, "events")
    res = ingest_events(ev_path)
    inputs = [ev_path]
    friends = None
    if args.friends:
        fp = _need(args.friends, "friends")
        friends = read_friend_list(fp)
        inputs.append(fp)
    graph = build_graph(res.events, friends)
    write_events(res.events, out / "events.jsonl")
    graph.to_csv(out / "graph.csv")
    print(f"{len(res.events)} events, {res.malformed} malformed line(s), {len(graph.edges)} edges")
    return inputs, ["events.jsonl", "graph.csv"], {"events": len(res.events), "malformed": res.malformed}


def cmd_bursts(args, s, out):
    ev_path = _need(args.events, "events")
    kinds = set(FeatureConfig().burst_kinds)
    stamps: dict[str, list[int]] = {}
    for e in ingest_events(ev_path).events:
        stamps.setdefault(e.user_id, [])
        if e.kind in kinds:
            stamps[e.user_id].append(e.timestamp)
    rows = {u: detect_bursts(ts, s["burst.scale"], s["burst.gamma"]) for u, ts in stamps.items()}
    write_burst_csv(rows, out / "bursts.csv")
    return [ev_path], ["bursts.csv"], {}


def cmd_features(args, s, out):
    cohort = _need(args.cohort, "cohort")
    sources, events, friends, profiles, users = _load_cohort_inputs(cohort)
    outputs = []
    for m in source_features(events, friends, profiles, users, _feature_config(s)):
        m.to_csv(out / f"features_{m.source_id}.csv")
        z, norms = normalize(m)
        z.to_csv(out / f"features_{m.source_id}_z.csv")
        save_norms(norms, out / f"norms_{m.source_id}.json")
        outputs += [f"features_{m.source_id}.csv", f"features_{m.source_id}_z.csv", f"norms_{m.source_id}.json"]
    return [cohort], outputs, {"sources": sources, "users": len(users)}


def _latent_csv(users, X, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id"] + [f"z{j}" for j in range(X.shape[1])])
        for u, row in zip(users, X):
            w.writerow([u] + [repr(float(v)) for v in row])


def _read_latent(path: Path) -> tuple[list[str], np.ndarray]:
    m = FeatureMatrix.from_csv(path)
    return m.users, m.filled(0.0)


def cmd_tensor(args, s, out):
    feats = _need(args.features, "features")
    cohort = _need(args.cohort, "cohort")
    sources, events, _, _, _ = _load_cohort_inputs(cohort)
    mats = []
    for src in sources:
        mats.append(FeatureMatrix.from_csv(_need(str(feats / f"features_{src}_z.csv"), "features"), src))
    users = mats[0].users
    method = s["stm.method"]
    outputs = ["latent.csv"]
    extra = {}
    if method == "cf":
        X = standardize(concatenate_baseline(mats, users).values)
    elif method in ("stm", "tucker"):
        graph = interaction_graph(events, users)
        cfg = _stm_config(s)
        if method == "tucker":
            cfg = replace(cfg, lambda1=0.0)
        tensor = assemble_tensor(mats, users, impute=s["stm.impute"])
        f = sgd_fit(tensor, graph if method == "stm" else None, cfg)
        f.to_json(out / "factors.json", tensor.shape)
        write_loss_trace(f.loss_trace, out / "loss.csv")
        graph.to_csv(out / "graph.csv")
        X = standardize(f.U)
        outputs += ["factors.json", "loss.csv", "graph.csv"]
        extra = {"epochs": len(f.loss_trace)}
    else:
        raise UsageError(f"unknown stm.method {method!r}")
    _latent_csv(users, X, out / "latent.csv")
    return [feats, cohort], outputs, extra


def cmd_train(args, s, out):
    lat = _need(args.latent, "latent")
    tp = _need(args.truth, "truth")
    users, X = _read_latent(lat)
    truth, groups = _align_truth(users, tp)
    labeled = _labeled_mask(users, truth, groups, s, args.labeled)
    models = train_classifiers(X, truth, labeled, _classifier_config(s), s["seed"])
    save_models(models, out / "models.json")
    with open(out / "labeled.csv", "w") as fh:
        fh.write("user_id,labeled\n")
        fh.writelines(f"{u},{int(l)}\n" for u, l in zip(users, labeled))
    return [lat, tp], ["models.json", "labeled.csv"], {"labeled": int(labeled.sum())}


def cmd_predict(args, s, out):
    mp = _need(args.models, "models")
    lat = _need(args.latent, "latent")
    users, X = _read_latent(lat)
    labels, scores = predict(load_models(mp), X)
    write_predictions(users, labels, scores, out / "predictions.csv")
    return [mp, lat], ["predictions.csv"], {}


def _json_metrics(d: dict) -> dict:
    return {k: (None if v is None or not np.isfinite(v) else round(float(v), 12)) for k, v in d.items()}


def cmd_evaluate(args, s, out):
    tp = _need(args.truth, "truth")
    if args.predictions:
        pp = _need(args.predictions, "predictions")
        users, labels, scores = read_predictions(pp)
        truth, _ = _align_truth(users, tp)
        ev = evaluate(labels, truth, scores)
        payload = {"metrics": _json_metrics(ev.as_dict())}
        inputs = [pp, tp]
        outputs = ["metrics.json"]
    else:
        lat = _need(args.latent, "latent")
        users, X = _read_latent(lat)
        truth, groups = _align_truth(users, tp)
        labeled = _labeled_mask(users, truth, groups, s, args.labeled)
        res = crossval(X, truth, labeled, _classifier_config(s), s["seed"], s["cv.folds"],
                       has_truth=np.ones(len(users), dtype=bool))
        res.to_csv(out / "folds.csv")
        write_predictions(users, res.predictions, res.scores, out / "cv_predictions.csv")
        payload = {"metrics": _json_metrics(res.mean()), "sd": _json_metrics(res.sd()),
                   "folds": [_json_metrics(f) for f in res.folds]}
        inputs = [lat, tp]
        outputs = ["metrics.json", "folds.csv", "cv_predictions.csv"]
    (out / "metrics.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    m = payload["metrics"]
    print(" ".join(f"{k}={m[k]}" for k in ("acc", "auc", "micro_f1", "macro_f1")))
    return inputs, outputs, {}


def cmd_analyze(args, s, out):
    cohort = _need(args.cohort, "cohort")
    pp = _need(args.predictions, "predictions")
    _, events, friends, _, _ = _load_cohort_inputs(cohort)
    users, labels, scores = read_predictions(pp)
    pooled = [e for evs in events.values() for e in evs]
    g = build_graph(pooled, friends)
    graph = SocialGraph(users, {k: w for k, w in g.edges.items() if k[0] in set(users) and k[1] in set(users)})
    dist = friend_type_distribution(graph, labels, users)
    write_long_csv([(t, ft, row[ft]) for t, row in dist.items() for ft in TYPES], out / "friend_types.csv")
    hops = hop_distance_same_type(graph, labels, users)
    write_long_csv([("mean_hops", t, h.mean) for t, h in hops.items()]
                   + [("unreachable", t, h.n_unreachable) for t, h in hops.items()], out / "hops.csv")
    comm = community_ratios(graph, labels, scores, users, s["analyze.max_rounds"])
    write_long_csv([(t, score, ratio) for _, t, score, ratio in comm], out / "communities.csv")
    return [cohort, pp], ["friend_types.csv", "hops.csv", "communities.csv"], {}


def cmd_ablate(args, s, out):
    fp = _need(args.features_csv, "features-csv")
    tp = _need(args.truth, "truth")
    m = FeatureMatrix.from_csv(fp)
    truth, groups = _align_truth(m.users, tp)
    labeled = _labeled_mask(m.users, truth, groups, s, args.labeled)
    X = m.filled(0.0)
    pattern = np.array(["".join("1" if v > 0 else "0" for v in r) for r in truth])
    ranked = information_gain_ranking(m.values, pattern, m.names, s["ablate.bins"])
    ranking = [m.names.index(name) for name, _ in ranked]
    cfg = _classifier_config(s)
    everyone = np.ones(len(m.users), dtype=bool)

    def score(Xs):
        return crossval(Xs, truth, labeled, cfg, s["seed"], s["cv.folds"], has_truth=everyone).mean()["acc"]

    res = ablation_curve(X, truth, ranking, score)
    rows = [("accuracy", n, a) for n, a in enumerate(res.accuracy)]
    rows += [("increment", n, d) for n, d in enumerate(res.increments, 1)]
    rows += [("information_gain", name, g) for name, g in ranked]
    write_long_csv(rows, out / "ablation.csv")
    fit = None if res.fit is None else {"a": res.fit.a, "b": res.fit.b, "r2": res.fit.r2}
    (out / "fit.json").write_text(json.dumps({"fit": fit, "ranking": [n for n, _ in ranked]}, indent=2) + "\n")
    return [fp, tp], ["ablation.csv", "fit.json"], {}


HANDLERS = {"ingest": cmd_ingest, "bursts": cmd_bursts, "features": cmd_features, "tensor": cmd_tensor,
            "train": cmd_train, "predict": cmd_predict, "evaluate": cmd_evaluate, "synth": cmd_synth,
            "analyze": cmd_analyze, "ablate": cmd_ablate}

HELP = {
    "ingest": "validate an event log and export the interaction graph",
    "bursts": "per-user burst statistics for an event log",
    "features": "per-source feature matrices (raw and z-scored) for a cohort directory",
    "tensor": "fit the factor model and export the user representation",
    "train": "train one classifier per disorder class",
    "predict": "score users with trained models",
    "evaluate": "cross-validate on a representation, or score a prediction file",
    "synth": "generate a synthetic cohort",
    "analyze": "friend-type, hop-distance and community tables",
    "ablate": "information-gain feature ablation curve and power fit",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snmdd", description="Social-network mental disorder detection pipeline.")
    parser.add_argument("--version", action="version", version=f"snmdd {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)
    settings_help = "\n".join(f"  {k} (default {v[0]}): {v[2]}" for k, v in SETTINGS.items())
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name], description=HELP[name],
                           formatter_class=argparse.RawDescriptionHelpFormatter,
                           epilog="configuration keys (config file or --<key> flag):\n" + settings_help)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", help="key = value settings file")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("ingest", "bursts"):
            p.add_argument("--events", help="line-delimited JSON event file")
        if name == "ingest":
            p.add_argument("--friends", help="friend list CSV (user_a,user_b)")
        if name in ("features", "tensor", "analyze"):
            p.add_argument("--cohort", help="directory with events_<source>.jsonl, friends.csv, profiles.csv")
        if name == "tensor":
            p.add_argument("--features", help="directory written by `features`")
        if name in ("train", "predict", "evaluate"):
            p.add_argument("--latent", help="user representation CSV written by `tensor`")
        if name in ("train", "evaluate", "ablate"):
            p.add_argument("--truth", help="truth.csv (user_id,cr,nc,io,archetype)")
            p.add_argument("--labeled", help="CSV user_id,labeled selecting visible labels")
        if name == "predict":
            p.add_argument("--models", help="models.json written by `train`")
        if name in ("evaluate", "analyze"):
            p.add_argument("--predictions", help="predictions CSV")
        if name == "ablate":
            p.add_argument("--features-csv", dest="features_csv", help="feature or representation CSV")
        for key, (default, typ, text) in SETTINGS.items():
            p.add_argument(f"--{key}", dest=key, metavar=typ.__name__.upper(),
                           help=f"{text} (default: {default})")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = resolve_settings(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        inputs, outputs, extra = HANDLERS[args.command](args, settings, out)
        write_manifest(out, args.command, settings, inputs, outputs, extra)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"snmdd {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except MissingInput as exc:
        print(f"snmdd {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, FloatingPointError, KeyError) as exc:
        print(f"snmdd {args.command}: error: {exc}".replace("\n", " "), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
