"""``shadowmarket`` command-line entry point.

Every subcommand writes its artifacts under ``--out DIR`` and finishes by
writing ``run_manifest.json`` there. Exit codes: 0 success, 2 usage error,
3 data validation failure, 4 computation error; failures print one JSON line
``{"exit": N, "kind": ..., "reason": ...}`` on stderr.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
import time
import warnings
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, market, metrics
from .detection import features as feat
from .detection.evaluation import evaluate as evaluate_model, roc_curve
from .detection.protocol import (ProtocolConfig, feature_importance, labeled_data,
                                 run_protocol)
from .detection.svm import BACKEND, SvmParams, TrainedModel
from .model import (LEGITIMATE, SUSPICIOUS, Dataset, InsufficientDataError,
                    daily_unfollow_counts, format_ts, parse_dataset)

log = logging.getLogger("shadowmarket")

EXIT_USAGE, EXIT_DATA, EXIT_COMPUTE = 2, 3, 4
MANIFEST = "run_manifest.json"


class CliError(Exception):
    def __init__(self, code: int, kind: str, reason: str):
        super().__init__(reason)
        self.code, self.kind, self.reason = code, kind, reason


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_USAGE, "usage", message)


# -- output helpers -------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(round(v, 10))
    return str(v)


class _Out:
    """Collects artifacts under one directory; every write is atomic."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def text(self, name: str, content: str) -> Path:
        path = self.root / name
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=f".{name}.")
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(content)
        os.replace(tmp, path)
        if name not in self.files:
            self.files.append(name)
        return path

    def json(self, name: str, obj) -> Path:
        return self.text(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def table(self, stem: str, header: list[str], rows, fmt: str = "csv") -> Path:
        rows = [list(r) for r in rows]
        if fmt == "json":
            return self.json(f"{stem}.json", [dict(zip(header, r)) for r in rows])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        return self.text(f"{stem}.csv", buf.getvalue())


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _input_digests(args) -> dict[str, str]:
    paths: list[Path] = []
    for attr in ("data", "config", "model"):
        p = getattr(args, attr, None)
        if not p:
            continue
        p = Path(p)
        if p.is_dir():
            paths += sorted(q for q in p.rglob("*") if q.is_file() and q.name != MANIFEST)
        elif p.is_file():
            paths.append(p)
    return {str(p): _sha256(p) for p in paths}


def _write_manifest(out: _Out, args, started: float, wall_start: datetime) -> None:
    config = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    out.json(MANIFEST, {
        "tool": "shadowmarket",
        "tool_version": __version__,
        "smo_backend": BACKEND,
        "command": args.command,
        "argv": sys.argv[1:],
        "config": config,
        "inputs": _input_digests(args),
        "seed": getattr(args, "seed", None),
        "started_at": format_ts(wall_start),
        "elapsed_seconds": round(time.perf_counter() - started, 3),
        "outputs": {name: _sha256(out.root / name) for name in out.files if name != MANIFEST},
    })


# -- data loading ---------------------------------------------------------------

# ``report`` parses once and every analysis it runs reuses the result
_load_cache: dict[str, Dataset] = {}


def _load(path) -> Dataset:
    if path in _load_cache:
        return _load_cache[path]
    if not path:
        raise CliError(EXIT_USAGE, "usage", "--data DIR is required")
    if not Path(path).is_dir():
        raise CliError(EXIT_DATA, "validation", f"dataset directory not found: {path}")
    ds = parse_dataset(path)
    if ds.errors:
        first = ds.errors[0]
        raise CliError(EXIT_DATA, "validation",
                       f"{len(ds.errors)} issue(s); first {first}")
    return ds


def _protocol_config(args, schedule=None) -> ProtocolConfig:
    try:
        params = SvmParams(C=args.C, gamma=args.gamma, tolerance=args.tolerance)
        return ProtocolConfig(n_negative_subsets=args.subsets, cv_folds=args.folds,
                              schedule=schedule or feat.schedule_for(args.sets),
                              params=params, seed=args.seed, jobs=args.jobs)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, "usage", str(exc)) from exc


# -- subcommands ---------------------------------------------------------------

def cmd_validate(args, out: _Out | None) -> None:
    ds = parse_dataset(args.data) if Path(args.data).is_dir() else None
    if ds is None:
        raise CliError(EXIT_DATA, "validation", f"dataset directory not found: {args.data}")
    summary = {
        "accounts": len(ds.accounts),
        "merchants": len(ds.merchants),
        "series": len(ds.series),
        "labels": {k: sum(1 for v in ds.labels.values() if v == k)
                   for k in (SUSPICIOUS, LEGITIMATE)},
        "issues": [{"file": i.file, "line": i.line, "reason": i.reason} for i in ds.errors],
    }
    if out is not None:
        out.json("validation.json", summary)
    for i in ds.errors:
        print(f"{i.file}:{i.line}: {i.reason}")
    if ds.errors:
        raise CliError(EXIT_DATA, "validation",
                       f"{len(ds.errors)} issue(s); first {ds.errors[0]}")
    print(f"ok: {summary['accounts']} accounts, {summary['merchants']} merchants, "
          f"{summary['series']} snapshot series")


def cmd_simulate(args, out: _Out) -> None:
    from .model import write_dataset
    from .simgen import InfeasibleConfigError, SimConfig, build_market, perturb_labels

    try:
        cfg = SimConfig.from_json(args.config) if args.config else SimConfig.preset()
    except InfeasibleConfigError as exc:
        raise CliError(EXIT_DATA, "config", str(exc)) from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_DATA, "config", f"cannot read config: {exc}") from exc
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    ds, truth = build_market(cfg)
    if args.flip_rate:
        try:
            ds, flipped = perturb_labels(ds, args.flip_rate, cfg.seed)
        except ValueError as exc:
            raise CliError(EXIT_USAGE, "usage", str(exc)) from exc
        truth["flipped_labels"] = flipped
        truth["flip_rate"] = args.flip_rate
    write_dataset(ds, out.root)
    out.files += sorted(str(q.relative_to(out.root)) for q in out.root.rglob("*")
                        if q.is_file() and q.name != MANIFEST)
    out.json("ground_truth.json", truth)
    print(f"wrote {len(ds.accounts)} accounts, {len(ds.merchants)} merchants to {out.root}")


def cmd_qos(args, out: _Out) -> None:
    ds = _load(args.data)
    rows, by_scheme = [], {}
    for mid in sorted(ds.merchants):
        m = ds.merchants[mid]
        try:
            r = market.merchant_qos(m)
        except InsufficientDataError:
            log.warning("%s: no measured promises, skipped", mid)
            continue
        rows.append([mid, "+".join(sorted(m.schemes)), len(r.per_promise_terms), r.qos])
        for s in m.schemes:
            by_scheme.setdefault(s, []).append(r.qos)
    if not rows:
        raise CliError(EXIT_COMPUTE, "computation", "no merchant has measured promises")
    out.table("qos", ["merchant_id", "schemes", "n_promises", "qos"], rows, args.format)
    knees = {}
    for scheme, qs in sorted(by_scheme.items()):
        qs = sorted(qs, reverse=True)
        curve = [((i + 1) / len(qs), q) for i, q in enumerate(qs)]
        out.table(f"qos_curve_{scheme}", ["merchant_fraction", "qos"], curve, args.format)
        k = market.knee_point(curve) if len(curve) >= 3 else None
        knees[scheme] = None if k is None else {"x": k.x, "y": k.y, "index": k.index}
    out.json("qos_knees.json", knees)


def cmd_popularity(args, out: _Out) -> None:
    ds = _load(args.data)
    ms = list(ds.merchants.values())
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", market.AllZeroWarning)
        pops = market.popularity_of(ms)
    out.table("popularity", ["merchant_id", "alexa_norm", "osn_popularity", "popularity"],
              [[m, p.alexa_norm, p.osn_popularity, p.popularity] for m, p in sorted(pops.items())],
              args.format)
    rep = market.rank_leaders(pops, top_k=args.top_k)
    out.json("leaders.json", {"leaders": list(rep.leaders), "gap": rep.gap,
                              "oligopoly": rep.oligopoly, "leader_share": rep.leader_share,
                              "threshold": market.LEADER_THRESHOLD if args.top_k is None else None,
                              "ranking": [[m, p] for m, p in rep.ranking]})
    qos = {}
    for m in ms:
        try:
            qos[m.merchant_id] = market.merchant_qos(m)
        except InsufficientDataError:
            pass
    if len(qos) >= 2:
        qp = market.qos_popularity_report(qos, pops)
        out.table("qos_vs_popularity", ["merchant_id", "qos", "popularity"], qp.rows, args.format)
        out.json("qos_vs_popularity_summary.json", {
            "pcc": qp.pcc, "most_popular": list(qp.most_popular),
            "highest_qos": list(qp.highest_qos)})


def cmd_retention(args, out: _Out) -> None:
    ds = _load(args.data)
    ids = [m.dummy_account_id for m in ds.merchants.values() if m.dummy_account_id]
    if args.account:
        ids = args.account
    ids = sorted(set(ids))
    if not ids:
        raise CliError(EXIT_COMPUTE, "computation", "no retention accounts in dataset")
    summary = {}
    for sid in ids:
        if sid not in ds.series:
            raise CliError(EXIT_DATA, "validation", f"no snapshot series for {sid}")
        try:
            r = market.retention_report(ds.series[sid])
        except InsufficientDataError as exc:
            raise CliError(EXIT_COMPUTE, "computation", str(exc)) from exc
        out.table(f"retention_{sid}", ["timestamp", "hour", "followers"],
                  [[format_ts(t), h, c] for t, h, c in r.rows], args.format)
        summary[sid] = {"n_dips": len(r.dips), "followers_lost_in_dips": sum(d for _, d in r.dips),
                        "pcc_vs_hour": r.pcc_vs_hour}
    out.json("retention_summary.json", summary)


def _customer_ids(ds: Dataset) -> list[str]:
    ids = {c for m in ds.merchants.values() for c in m.customer_ids}
    return sorted(c for c in ids if c in ds.accounts)


def cmd_customers(args, out: _Out) -> None:
    ds = _load(args.data)
    ids = _customer_ids(ds)
    if not ids:
        raise CliError(EXIT_COMPUTE, "computation", "dataset lists no merchant customers")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", market.AllZeroWarning)
        leaders = market.rank_leaders(market.popularity_of(ds.merchants.values())).leaders
    r = market.customer_profile_report([ds.accounts[c] for c in ids], ds.url_blacklist,
                                       merchants=ds.merchants.values(), leaders=leaders,
                                       use_proxy=args.reputation_proxy)
    d = dict(vars(r))
    d["top_bio_terms"] = [list(t) for t in r.top_bio_terms]
    d["leaders"] = list(leaders)
    out.json("customers.json", d)


def cmd_metrics(args, out: _Out) -> None:
    ds = _load(args.data)
    now, window = ds.reference_time(), ds.window_seconds()
    ids = sorted(a for a in ds.labels if a in ds.accounts)
    rows, ratios, ent_rep = [], {SUSPICIOUS: [], LEGITIMATE: []}, []
    for aid in ids:
        acc = ds.accounts[aid]
        s = ds.series.get(aid)
        ent = (metrics.unfollow_entropy(daily_unfollow_counts(s))
               if s is not None and len(s.snapshots) >= 2 else None)
        ratio = metrics.follower_friend_ratio(acc)
        cs = metrics.content_stats(acc, ds.spam_words, now, window)
        rows.append([aid, ds.labels[aid], ent, ratio, acc.reputation_score,
                     metrics.retweet_engagement(acc).value, metrics.mention_engagement(acc).value,
                     cs.num_languages, cs.tweets_per_day])
        if ratio > 0 and ratio != float("inf"):
            ratios[ds.labels[aid]].append(ratio)
        if ds.labels[aid] == SUSPICIOUS and ent is not None and acc.reputation_score is not None:
            ent_rep.append((ent, acc.reputation_score))
    out.table("account_metrics", ["account_id", "label", "unfollow_entropy",
                                  "follower_friend_ratio", "reputation", "rt_engagement",
                                  "mention_engagement", "num_languages", "tweets_per_day"],
              rows, args.format)
    summary = {}
    for label, vals in ratios.items():
        try:
            fit = metrics.fit_power_law(vals)
            summary[f"power_law_{label}"] = {"alpha": fit.alpha, "sigma": fit.sigma,
                                             "x_min": fit.x_min, "n": fit.n}
        except (InsufficientDataError, ValueError) as exc:
            summary[f"power_law_{label}"] = {"error": str(exc)}
    if len(ent_rep) >= 2:
        try:
            summary["entropy_reputation_pcc"] = metrics.pearson(*zip(*ent_rep))
        except metrics.UndefinedCorrelationError:
            summary["entropy_reputation_pcc"] = None
        ents = [e for e, _ in ent_rep]
        out.table("entropy_cdf", ["entropy", "cdf"], market.cdf_curve(ents), args.format)
        out.table("reputation_cdf", ["reputation", "cdf"],
                  market.cdf_curve(r for _, r in ent_rep), args.format)
        summary["suspicious_entropy_ge_0_76"] = sum(e >= 0.76 for e in ents) / len(ents)
    out.json("metrics_summary.json", summary)


def cmd_features(args, out: _Out) -> None:
    ds = _load(args.data)
    mask = feat.parse_mask(args.sets)
    data = labeled_data(ds, mask)
    names = list(feat.mask_names(mask))
    rows = [[aid, ds.labels[aid], int(flag)] + list(x)
            for aid, x, flag in zip(data.ids, data.X.tolist(), data.flags.tolist())]
    out.table(f"features_{mask}", ["account_id", "label", "ratio_infinite"] + names, rows,
              args.format)


def _train(args, out: _Out, ds: Dataset):
    cfg = _protocol_config(args)
    try:
        result = run_protocol(ds, cfg)
    except ValueError as exc:
        raise CliError(EXIT_COMPUTE, "computation", str(exc)) from exc
    out.text("protocol_report.json", result.report_json())
    out.text("ablation.csv", result.ablation_csv())
    for mask in cfg.schedule:
        out.text(f"roc_{mask}.csv", result.roc_csv(mask))
    result.final_model().save(out.root / "model.json")
    out.files.append("model.json")
    return cfg, result


def cmd_train(args, out: _Out) -> None:
    _, result = _train(args, out, _load(args.data))
    for row in result.report["masks"]:
        print(f"{row['mask']:>5}  accuracy {row['accuracy']['mean']:.4f} "
              f"+/- {row['accuracy']['std']:.4f}")


def cmd_evaluate(args, out: _Out) -> None:
    ds = _load(args.data)
    if not args.model:
        raise CliError(EXIT_USAGE, "usage", "--model FILE is required")
    try:
        model = TrainedModel.load(args.model)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(EXIT_DATA, "validation", f"cannot load model: {exc}") from exc
    data = labeled_data(ds, model.set_mask or "ABCD")
    if data.y.size == 0:
        raise CliError(EXIT_COMPUTE, "computation", "no labeled accounts")
    X = data.X.copy()
    col = data.ratio_col
    if col is not None and data.flags.any():
        X[data.flags, col] = model.ratio_cap if model.ratio_cap is not None else 0.0
    met = evaluate_model(model, X, data.y)
    out.json("evaluation.json", {"set_mask": model.set_mask, "n": int(data.y.size),
                                 **met.as_dict()})
    fpr, tpr, thr = roc_curve(data.y, model.decision_function(X))
    out.table("roc", ["fpr", "tpr", "threshold"],
              [[a, b, "inf" if c == float("inf") else c] for a, b, c in zip(fpr, tpr, thr)],
              args.format)
    print(f"accuracy {met.accuracy:.4f}  f1 {met.f1:.4f}  auc {met.auc}")


def cmd_importance(args, out: _Out) -> None:
    ds = _load(args.data)
    cfg = _protocol_config(args, schedule=(feat.parse_mask(args.sets),))
    try:
        ranking = feature_importance(ds, cfg)
    except ValueError as exc:
        raise CliError(EXIT_COMPUTE, "computation", str(exc)) from exc
    out.table("importance", ["rank", "feature", "importance", "std"],
              [[r["rank"], r["feature"], r["importance"], r["std"]] for r in ranking], args.format)


def cmd_report(args, out: _Out) -> None:
    """Every analysis in one pass; the protocol result is reused for importance."""
    ds = _load_cache[args.data] = _load(args.data)
    for fn in (cmd_qos, cmd_popularity, cmd_metrics):
        fn(args, out)
    if any(m.dummy_account_id for m in ds.merchants.values()):
        cmd_retention(args, out)
    if _customer_ids(ds):
        cmd_customers(args, out)
    cfg, result = _train(args, out, ds)
    ranking = feature_importance(ds, cfg, result)
    out.table("importance", ["rank", "feature", "importance", "std"],
              [[r["rank"], r["feature"], r["importance"], r["std"]] for r in ranking], args.format)


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--data", metavar="DIR", help="dataset directory")
    common.add_argument("--out", metavar="DIR", help="output directory (required)")
    common.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="format for tabular outputs (default csv)")

    learn = _Parser(add_help=False)
    learn.add_argument("--seed", type=int, default=0, help="protocol seed (default 0)")
    learn.add_argument("--sets", default="ABCD", choices=("A", "AB", "ABC", "ABCD"),
                       help="feature sets; train runs every prefix up to this mask")
    learn.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    learn.add_argument("--subsets", type=int, default=10, help="negative subsets (default 10)")
    learn.add_argument("--folds", type=int, default=10, help="CV folds, 0 disables (default 10)")
    learn.add_argument("--C", type=float, default=SvmParams.C, help="SVM box constraint")
    learn.add_argument("--gamma", type=float, default=SvmParams.gamma,
                       help="RBF kernel coefficient in exp(-gamma*|u-v|^2)")
    learn.add_argument("--tolerance", type=float, default=SvmParams.tolerance,
                       help="SMO stopping tolerance")

    p = _Parser(prog="shadowmarket", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"shadowmarket {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def add(name, func, help_, parents=(common,)):
        sp = sub.add_parser(name, help=help_, description=help_, parents=list(parents))
        sp.set_defaults(func=func)
        return sp

    v = sub.add_parser("validate", help="parse a dataset and report validation issues",
                       description="parse a dataset and report validation issues")
    v.add_argument("data", nargs="?", metavar="DIR")
    v.add_argument("--data", dest="data_opt", metavar="DIR")
    v.add_argument("--out", metavar="DIR")
    v.set_defaults(func=cmd_validate)

    s = add("simulate", cmd_simulate, "generate a synthetic market dataset", parents=())
    s.add_argument("--config", metavar="FILE", help="generator config JSON (default: preset)")
    s.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    s.add_argument("--out", metavar="DIR", help="output dataset directory (required)")
    s.add_argument("--flip-rate", type=float, default=0.0,
                   help="fraction of labels to flip after generation")

    add("qos", cmd_qos, "per-merchant quality of service and QoS curves")
    pp = add("popularity", cmd_popularity, "merchant popularity and market leaders")
    pp.add_argument("--top-k", type=int, default=None,
                    help="take the top K merchants as leaders instead of the threshold")
    r = add("retention", cmd_retention, "hourly follower counts of retention accounts")
    r.add_argument("--account", action="append", help="series id (repeatable)")
    c = add("customers", cmd_customers, "customer profile analysis")
    c.add_argument("--reputation-proxy", action="store_true",
                   help="estimate missing reputation scores from follower counts")
    add("metrics", cmd_metrics, "per-account metrics, power-law fits and CDFs")
    f = add("features", cmd_features, "feature matrix for labeled accounts")
    f.add_argument("--sets", default="ABCD", choices=("A", "AB", "ABC", "ABCD"))
    add("train", cmd_train, "run the detection protocol and save the full-mask model",
        parents=(common, learn))
    e = add("evaluate", cmd_evaluate, "score a saved model on a labeled dataset")
    e.add_argument("--model", metavar="FILE", help="model.json written by train")
    add("importance", cmd_importance, "permutation feature importance",
        parents=(common, learn))
    rp = add("report", cmd_report, "run every analysis into one directory",
             parents=(common, learn))
    rp.add_argument("--top-k", type=int, default=None)
    rp.add_argument("--reputation-proxy", action="store_true")
    rp.set_defaults(account=None)
    return p


def _setup_logging() -> None:
    level = os.environ.get("SHADOWMARKET_LOG", "error").lower()
    if level not in ("error", "info", "debug"):
        level = "error"
    logging.basicConfig(level=getattr(logging, level.upper()), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if level == "error":
        warnings.simplefilter("ignore")


def _fail(err: CliError) -> int:
    reason = " ".join(err.reason.split())
    print(json.dumps({"exit": err.code, "kind": err.kind, "reason": reason}), file=sys.stderr)
    return err.code


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    started, wall = time.perf_counter(), datetime.now(timezone.utc)
    try:
        args = build_parser().parse_args(argv)
        if args.command == "validate":
            args.data = args.data or args.data_opt
            del args.data_opt
            if not args.data:
                raise CliError(EXIT_USAGE, "usage", "validate needs a dataset directory")
        elif not getattr(args, "out", None):
            raise CliError(EXIT_USAGE, "usage", f"{args.command} requires --out DIR")
        if getattr(args, "jobs", 1) < 1:
            raise CliError(EXIT_USAGE, "usage", "--jobs must be >= 1")
        out = _Out(args.out) if args.out else None
        args.func(args, out)
        if out is not None:
            _write_manifest(out, args, started, wall)
        return 0
    except CliError as err:
        return _fail(err)
    except (InsufficientDataError, ValueError, ArithmeticError) as exc:
        log.debug("computation failed", exc_info=True)
        return _fail(CliError(EXIT_COMPUTE, "computation", f"{type(exc).__name__}: {exc}"))
    finally:
        _load_cache.clear()


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
