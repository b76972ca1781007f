"""Under-sampling / split / cross-validation / ablation protocol and permutation importance."""
from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..model import LEGITIMATE, SUSPICIOUS, Dataset
from .evaluation import metrics_from_scores, roc_curve
from .features import (DEFAULT_SCHEDULE, FEATURE_NAMES, extract_dataset, feature_matrix,
                       mask_names, parse_mask)
from .svm import SvmParams, TrainedModel, fit_model

log = logging.getLogger(__name__)

REPORT_VERSION = 1


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class ProtocolConfig:
    n_negative_subsets: int = 10
    train_fraction: float = 0.7
    cv_folds: int = 10
    schedule: tuple[str, ...] = DEFAULT_SCHEDULE
    params: SvmParams = SvmParams()
    seed: int = 0
    importance_repeats: int = 5
    jobs: int = 1

    def __post_init__(self):
        if self.n_negative_subsets < 1 or self.cv_folds < 0 or self.cv_folds == 1:
            raise ValueError("need >= 1 negative subset and 0 or >= 2 CV folds")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if not self.schedule:
            raise ValueError("empty mask schedule")
        object.__setattr__(self, "schedule", tuple(parse_mask(m) for m in self.schedule))

    @property
    def union_mask(self) -> str:
        return parse_mask("".join(self.schedule))

    def as_dict(self) -> dict:
        d = asdict(self)
        d["schedule"] = list(self.schedule)
        d.pop("jobs")
        return d


@dataclass
class LabeledData:
    """Raw feature rows for labeled accounts; +1 = suspicious, -1 = legitimate."""
    ids: list[str]
    X: np.ndarray
    flags: np.ndarray
    y: np.ndarray
    mask: str

    def columns(self, mask: str) -> list[int]:
        names = mask_names(self.mask)
        return [names.index(n) for n in mask_names(mask)]

    @property
    def ratio_col(self) -> int | None:
        names = mask_names(self.mask)
        return names.index("follower_friend_ratio") if "follower_friend_ratio" in names else None


def labeled_data(ds: Dataset, mask: str = "ABCD") -> LabeledData:
    mask = parse_mask(mask)
    ids = sorted(a for a in ds.labels if a in ds.accounts)
    vecs = extract_dataset(ds, ids, mask)
    X, flags = feature_matrix(vecs)
    if not ids:
        X = np.zeros((0, len(mask_names(mask))))
    y = np.array([1 if ds.labels[a] == SUSPICIOUS else -1 for a in ids], dtype=float)
    return LabeledData(ids, X, flags, y, mask)


def _capped(data: LabeledData, rows: np.ndarray, cap: float | None) -> np.ndarray:
    X = data.X[rows]
    col = data.ratio_col
    if col is None or not data.flags[rows].any():
        return X
    X = X.copy()
    X[data.flags[rows], col] = cap if cap is not None else 0.0
    return X


def _train_cap(data: LabeledData, rows: np.ndarray) -> float | None:
    col = data.ratio_col
    if col is None:
        return None
    finite = data.X[rows][~data.flags[rows], col]
    return float(np.percentile(finite, 99)) if finite.size else None


def _fit(data: LabeledData, rows: np.ndarray, mask: str, params: SvmParams,
         seed: int) -> TrainedModel:
    cap = _train_cap(data, rows)
    cols = data.columns(mask)
    X = _capped(data, rows, cap)[:, cols]
    return fit_model(X, data.y[rows], params, seed, set_mask=mask,
                     feature_names=mask_names(mask), ratio_cap=cap)


def _scores(model: TrainedModel, data: LabeledData, rows: np.ndarray) -> np.ndarray:
    cols = data.columns(model.set_mask)
    return model.decision_function(_capped(data, rows, model.ratio_cap)[:, cols])


def stratified_split(y: np.ndarray, fraction: float, rng: np.random.Generator
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Indices (train, test) with each class split at ``fraction``."""
    train, test = [], []
    for cls in (1.0, -1.0):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        k = int(round(fraction * idx.size))
        train.append(idx[:k])
        test.append(idx[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def stratified_folds(y: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Fold id per row; each class is dealt round-robin over a random order."""
    fold = np.empty(y.size, dtype=int)
    for cls in (1.0, -1.0):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        fold[idx] = np.arange(idx.size) % k
    return fold


@dataclass
class MaskRun:
    mask: str
    cv_accuracy: list[float]
    test_y: np.ndarray
    test_scores: np.ndarray
    metrics: dict
    n_support: int
    n_iter: int
    model: TrainedModel | None = None


@dataclass
class SubsetRun:
    index: int
    rows: np.ndarray  # indices into LabeledData
    train: np.ndarray
    test: np.ndarray
    masks: list[MaskRun] = field(default_factory=list)


def _run_subset(data: LabeledData, config: ProtocolConfig, index: int,
                keep_models: bool) -> SubsetRun:
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(index,)))
    pos = np.flatnonzero(data.y > 0)
    neg = np.flatnonzero(data.y < 0)
    chosen = np.sort(rng.choice(neg, size=pos.size, replace=False))
    rows = np.sort(np.concatenate([pos, chosen]))
    y = data.y[rows]
    tr, te = stratified_split(y, config.train_fraction, rng)
    train, test = rows[tr], rows[te]
    folds = stratified_folds(data.y[train], config.cv_folds, rng) if config.cv_folds else None
    run = SubsetRun(index, rows, train, test)
    model_seed = int(np.random.SeedSequence(config.seed, spawn_key=(index,)).generate_state(1)[0])
    for mask in config.schedule:
        cv_acc = []
        if folds is not None:
            for f in range(config.cv_folds):
                fit_rows, val_rows = train[folds != f], train[folds == f]
                m = _fit(data, fit_rows, mask, config.params, model_seed)
                cv_acc.append(metrics_from_scores(data.y[val_rows],
                                                  _scores(m, data, val_rows)).accuracy)
        model = _fit(data, train, mask, config.params, model_seed)
        s = _scores(model, data, test)
        met = metrics_from_scores(data.y[test], s)
        run.masks.append(MaskRun(mask, cv_acc, data.y[test], s, met.as_dict(),
                                 int(model.dual_coef.size), model.n_iter,
                                 model if keep_models else None))
        log.info("subset %d mask %s: acc=%.4f cv=%.4f sv=%d", index, mask, met.accuracy,
                 float(np.mean(cv_acc)) if cv_acc else float("nan"), model.dual_coef.size)
    return run


def _run_subset_star(args):
    return _run_subset(*args)


@dataclass
class ProtocolResult:
    report: dict
    runs: list[SubsetRun]
    data: LabeledData
    config: ProtocolConfig

    def report_json(self) -> str:
        return json.dumps(self.report, indent=2, sort_keys=True) + "\n"

    def ablation_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["accuracy", "f1", "auc", "cv_accuracy"]
        w.writerow(["mask", "n_features"] + [f"{c}_{s}" for c in cols for s in ("mean", "std")])
        for row in self.report["masks"]:
            w.writerow([row["mask"], row["n_features"]]
                       + [_fmt(row[c][s]) for c in cols for s in ("mean", "std")])
        return buf.getvalue()

    def roc_csv(self, mask: str) -> str:
        ys = np.concatenate([m.test_y for r in self.runs for m in r.masks if m.mask == mask])
        ss = np.concatenate([m.test_scores for r in self.runs for m in r.masks if m.mask == mask])
        fpr, tpr, thr = roc_curve(ys, ss)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fpr", "tpr", "threshold"])
        for a, b, c in zip(fpr, tpr, thr):
            w.writerow([_fmt(a), _fmt(b), "inf" if np.isinf(c) else _fmt(c)])
        return buf.getvalue()

    def final_model(self, mask: str | None = None, subset: int = 0) -> TrainedModel:
        mask = parse_mask(mask) if mask else self.config.schedule[-1]
        for m in self.runs[subset].masks:
            if m.mask == mask and m.model is not None:
                return m.model
        raise KeyError(f"no stored model for mask {mask} in subset {subset}")


def _fmt(v) -> str:
    return "" if v is None else repr(round(float(v), 10))


def _stat(values) -> dict:
    v = [x for x in values if x is not None]
    if not v:
        return {"mean": None, "std": None}
    return {"mean": round(float(np.mean(v)), 10), "std": round(float(np.std(v)), 10)}


def run_protocol(data: Dataset | LabeledData, config: ProtocolConfig = ProtocolConfig(),
                 keep_models: bool = True) -> ProtocolResult:
    """Repeat (undersample, split, CV, fit, test) for each negative subset and mask.

    Every negative subset is drawn without replacement and sized to the
    positive class. Scalers and the infinite-ratio cap are fit on training
    rows only.
    """
    if isinstance(data, Dataset):
        data = labeled_data(data, config.union_mask)
    n_pos = int(np.sum(data.y > 0))
    n_neg = int(np.sum(data.y < 0))
    if n_pos == 0 or n_neg == 0:
        raise ProtocolError("protocol needs both suspicious and legitimate accounts")
    if n_pos > n_neg:
        raise ProtocolError(f"cannot undersample: {n_pos} suspicious > {n_neg} legitimate")
    if config.cv_folds and 0 < round(config.train_fraction * n_pos) < config.cv_folds:
        raise ProtocolError("too few training rows per class for the requested CV folds")
    jobs = [(data, config, i, keep_models) for i in range(config.n_negative_subsets)]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as ex:
            runs = list(ex.map(_run_subset_star, jobs))
    else:
        runs = [_run_subset(*j) for j in jobs]

    rows = []
    for mask in config.schedule:
        mrs = [m for r in runs for m in r.masks if m.mask == mask]
        rows.append({
            "mask": mask,
            "n_features": len(mask_names(mask)),
            "features": list(mask_names(mask)),
            "accuracy": _stat(m.metrics["accuracy"] for m in mrs),
            "f1": _stat(m.metrics["f1"] for m in mrs),
            "auc": _stat(m.metrics["auc"] for m in mrs),
            "cv_accuracy": _stat(float(np.mean(m.cv_accuracy)) if m.cv_accuracy else None
                                 for m in mrs),
            "runs": [{
                "subset": r.index,
                "accuracy": round(m.metrics["accuracy"], 10),
                "f1": round(m.metrics["f1"], 10),
                "auc": None if m.metrics["auc"] is None else round(m.metrics["auc"], 10),
                "cv_accuracy": [round(a, 10) for a in m.cv_accuracy],
                "n_support": m.n_support,
                "smo_iterations": m.n_iter,
            } for r in runs for m in r.masks if m.mask == mask],
        })
    full = config.schedule[-1]
    pooled = np.zeros((2, 2), dtype=int)
    for r in runs:
        for m in r.masks:
            if m.mask == full:
                pooled += np.asarray(m.metrics["confusion_counts"])
    pct = [[round(100.0 * c / row.sum(), 6) if row.sum() else 0.0 for c in row] for row in pooled]
    report = {
        "report_version": REPORT_VERSION,
        "config": config.as_dict(),
        "n_suspicious": n_pos,
        "n_legitimate_pool": n_neg,
        "subset_size": 2 * n_pos,
        "n_train": int(runs[0].train.size),
        "n_test": int(runs[0].test.size),
        "masks": rows,
        "pooled_confusion": {
            "mask": full,
            "rows": ["suspicious", "legitimate"],
            "columns": ["suspicious", "legitimate"],
            "percent": pct,
            "counts": pooled.tolist(),
        },
    }
    return ProtocolResult(report, runs, data, config)


def permuted_accuracy(model: TrainedModel, X: np.ndarray, y: np.ndarray, columns,
                      rng: np.random.Generator) -> float:
    """Accuracy after independently shuffling each listed column of ``X``."""
    Xp = X.copy()
    for c in columns:
        Xp[:, c] = Xp[rng.permutation(X.shape[0]), c]
    return metrics_from_scores(y, model.decision_function(Xp)).accuracy


def feature_importance(data: Dataset | LabeledData, config: ProtocolConfig = ProtocolConfig(),
                       result: ProtocolResult | None = None) -> list[dict]:
    """Permutation importance of each full-mask feature on the held-out rows.

    Importance is the mean accuracy drop over ``importance_repeats`` shuffles
    per subset model, averaged over subsets. Sorted by importance, ties in
    feature-table order.
    """
    if result is None:
        cfg = replace(config, schedule=(config.schedule[-1],), cv_folds=0)
        result = run_protocol(data, cfg, keep_models=True)
    full = result.config.schedule[-1]
    names = mask_names(full)
    drops = np.zeros((len(result.runs), len(names)))
    for r in result.runs:
        model = result.final_model(full, r.index)
        cols = result.data.columns(full)
        X = _capped(result.data, r.test, model.ratio_cap)[:, cols]
        y = result.data.y[r.test]
        base = metrics_from_scores(y, model.decision_function(X)).accuracy
        for j in range(len(names)):
            rng = np.random.default_rng(
                np.random.SeedSequence(result.config.seed, spawn_key=(10_000 + r.index, j)))
            accs = [permuted_accuracy(model, X, y, [j], rng)
                    for _ in range(result.config.importance_repeats)]
            drops[r.index, j] = base - float(np.mean(accs))
    mean = drops.mean(axis=0)
    std = drops.std(axis=0)
    order = sorted(range(len(names)), key=lambda j: (-round(mean[j], 12),
                                                      FEATURE_NAMES.index(names[j])))
    return [{"rank": k + 1, "feature": names[j], "importance": round(float(mean[j]), 10),
             "std": round(float(std[j]), 10)} for k, j in enumerate(order)]
