"""RBF-kernel SVM trained by sequential minimal optimization.

The SMO inner loop lives in a compiled extension (``_smo_ext``) when it has
been built; otherwise the numpy implementation in ``_smo_py`` is used.
Set ``SHADOWMARKET_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import json
import logging
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _smo_py

log = logging.getLogger(__name__)

if os.environ.get("SHADOWMARKET_PURE_PYTHON"):
    _smo_solve = _smo_py.smo_solve
    BACKEND = "python"
else:
    try:
        from ._smo_ext import smo_solve as _smo_solve
        BACKEND = "compiled"
    except ImportError:  # extension not built
        _smo_solve = _smo_py.smo_solve
        BACKEND = "python"

MODEL_FORMAT_VERSION = 1


class ZeroVarianceWarning(UserWarning):
    pass


class NotConvergedWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SvmParams:
    C: float = 1000.0
    gamma: float = 20.0
    tolerance: float = 1e-3
    max_iter: int = 5_000_000

    def __post_init__(self):
        if not (self.C > 0 and self.gamma > 0 and self.tolerance > 0 and self.max_iter > 0):
            raise ValueError("SVM parameters must all be positive")


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    scale: np.ndarray

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    @classmethod
    def identity(cls, n_features: int) -> "Scaler":
        return cls(np.zeros(n_features), np.ones(n_features))


def standardize(matrix) -> tuple[np.ndarray, Scaler]:
    """Column z-scores with the population std; constant columns keep scale 1."""
    X = np.asarray(matrix, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("standardize needs a 2-D matrix with >= 2 rows")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    flat = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    if flat.any():
        warnings.warn(f"zero-variance columns {np.flatnonzero(flat).tolist()} left unscaled",
                      ZeroVarianceWarning, stacklevel=2)
        mean = np.where(flat, 0.0, mean)
        std = np.where(flat, 1.0, std)
    scaler = Scaler(mean, std)
    return scaler.transform(X), scaler


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    sq = (np.einsum("ij,ij->i", A, A)[:, None] + np.einsum("ij,ij->i", B, B)[None, :]
          - 2.0 * A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


@dataclass
class TrainedModel:
    support_vectors: np.ndarray  # standardized rows
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    scaler: Scaler
    params: SvmParams
    set_mask: str = ""
    seed: int = 0
    ratio_cap: float | None = None
    feature_names: tuple[str, ...] = ()
    # diagnostics of the solve; not needed for prediction
    n_iter: int = 0
    converged: bool = True
    kkt_gap: float = 0.0
    dual_objective: float = 0.0
    alpha: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_features(self) -> int:
        return int(self.scaler.mean.shape[0])

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features "
                             f"(mask {self.set_mask or '?'}), got {X.shape[1]}")
        Z = self.scaler.transform(X)
        if self.support_vectors.shape[0] == 0:
            return np.full(Z.shape[0], self.bias)
        return rbf_kernel(Z, self.support_vectors, self.params.gamma) @ self.dual_coef + self.bias

    def to_json(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "kernel": "rbf",
            "params": {"C": self.params.C, "gamma": self.params.gamma,
                       "tolerance": self.params.tolerance, "max_iter": self.params.max_iter},
            "set_mask": self.set_mask,
            "seed": self.seed,
            "feature_names": list(self.feature_names),
            "ratio_cap": self.ratio_cap,
            "scaler": {"mean": self.scaler.mean.tolist(), "scale": self.scaler.scale.tolist()},
            "support_vectors": self.support_vectors.tolist(),
            "dual_coef": self.dual_coef.tolist(),
            "bias": self.bias,
        }

    @classmethod
    def from_json(cls, d: dict) -> "TrainedModel":
        if d.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format {d.get('format_version')!r}")
        p = d["params"]
        n_feat = len(d["scaler"]["mean"])
        sv = np.asarray(d["support_vectors"], dtype=float).reshape(-1, n_feat)
        return cls(
            support_vectors=sv,
            dual_coef=np.asarray(d["dual_coef"], dtype=float),
            bias=float(d["bias"]),
            scaler=Scaler(np.asarray(d["scaler"]["mean"], dtype=float),
                          np.asarray(d["scaler"]["scale"], dtype=float)),
            params=SvmParams(C=p["C"], gamma=p["gamma"], tolerance=p["tolerance"],
                             max_iter=p["max_iter"]),
            set_mask=d.get("set_mask", ""),
            seed=int(d.get("seed", 0)),
            ratio_cap=d.get("ratio_cap"),
            feature_names=tuple(d.get("feature_names", ())),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TrainedModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def dual_objective(alpha, y, K) -> float:
    """sum(alpha) - 0.5 * sum_ij alpha_i alpha_j y_i y_j K_ij (to be maximized)."""
    ay = np.asarray(alpha) * np.asarray(y)
    return float(np.sum(alpha) - 0.5 * ay @ K @ ay)


def _bias(alpha, G, y, C) -> float:
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(yG[free].mean())
    else:
        at_up = alpha >= C
        at_low = alpha <= 0
        ub_mask = (at_up & (y < 0)) | (at_low & (y > 0))
        lb_mask = (at_up & (y > 0)) | (at_low & (y < 0))
        ub = float(yG[ub_mask].min()) if ub_mask.any() else np.inf
        lb = float(yG[lb_mask].max()) if lb_mask.any() else -np.inf
        rho = (ub + lb) / 2.0 if np.isfinite(ub) and np.isfinite(lb) else (
            ub if np.isfinite(ub) else lb)
    return -rho


def kkt_gap(alpha, G, y, C) -> float:
    """max violation m(alpha) - M(alpha); <= tolerance at an SMO stopping point."""
    yG = -y * G
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    if not up.any() or not low.any():
        return 0.0
    return float(max(yG[up].max() - yG[low].min(), 0.0))


def train_svm(X, y, params: SvmParams = SvmParams(), seed: int = 0, *,
              scaler: Scaler | None = None, set_mask: str = "",
              feature_names: tuple[str, ...] = (), ratio_cap: float | None = None,
              solver=None) -> TrainedModel:
    """Fit the dual of the soft-margin RBF SVM on already-standardized ``X``.

    ``y`` holds +1/-1 labels. ``scaler`` is stored in the model so that
    :func:`predict` can take raw feature rows. ``seed`` is recorded only;
    the maximal-violating-pair solver is deterministic.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be 2-D with one row per label")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite feature values")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be +1 or -1")
    if np.all(y > 0) or np.all(y < 0):
        raise ValueError("training data contains a single class")
    K = rbf_kernel(X, X, params.gamma)
    solve = solver or _smo_solve
    alpha, G, n_iter, converged = solve(K, y, float(params.C), float(params.tolerance),
                                        int(params.max_iter))
    if not converged:
        warnings.warn(f"SMO stopped after {n_iter} iterations without converging",
                      NotConvergedWarning, stacklevel=2)
    alpha = np.clip(alpha, 0.0, params.C)
    b = _bias(alpha, G, y, params.C)
    sv = alpha > 0
    log.debug("SMO: n=%d iter=%d sv=%d", X.shape[0], n_iter, int(sv.sum()))
    return TrainedModel(
        support_vectors=X[sv].copy(),
        dual_coef=(alpha * y)[sv],
        bias=b,
        scaler=scaler if scaler is not None else Scaler.identity(X.shape[1]),
        params=params,
        set_mask=set_mask,
        seed=seed,
        ratio_cap=ratio_cap,
        feature_names=feature_names,
        n_iter=int(n_iter),
        converged=bool(converged),
        kkt_gap=kkt_gap(alpha, G, y, params.C),
        dual_objective=dual_objective(alpha, y, K),
        alpha=alpha,
    )


def fit_model(X_raw, y, params: SvmParams = SvmParams(), seed: int = 0, **kw) -> TrainedModel:
    """Standardize raw features, then train; the scaler travels with the model."""
    Z, scaler = standardize(X_raw)
    return train_svm(Z, y, params, seed, scaler=scaler, **kw)


def predict(model: TrainedModel, x) -> tuple[float, int]:
    """Decision score and label (+1 when the score is >= 0) for one raw feature row."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("predict takes a single feature row")
    score = float(model.decision_function(x[None, :])[0])
    return score, (1 if score >= 0 else -1)
