"""Independent reference computations used as test oracles."""
from __future__ import annotations

import numpy as np


def project_box_hyperplane(v: np.ndarray, y: np.ndarray, C: float) -> np.ndarray:
    """Euclidean projection of v onto {0 <= a <= C, y'a = 0}, y in {-1, +1}.

    g(lam) = sum y_i clip(v_i - lam y_i, 0, C) is non-increasing and piecewise
    linear with breakpoints at y_i v_i and y_i (v_i - C); the root is found
    exactly by scanning the sorted breakpoints and interpolating.
    """
    def g(lam):
        return np.sum(y * np.clip(v - np.multiply.outer(lam, y), 0.0, C), axis=-1)

    bps = np.unique(np.concatenate([y * v, y * (v - C)]))
    vals = g(bps)
    if vals[0] <= 0:  # whole range non-positive -> root at or below first breakpoint
        lam = bps[0]
    elif vals[-1] >= 0:
        lam = bps[-1]
    else:
        k = int(np.flatnonzero(vals <= 0)[0])
        l0, l1, g0, g1 = bps[k - 1], bps[k], vals[k - 1], vals[k]
        lam = l0 if g0 == g1 else l0 + (l1 - l0) * g0 / (g0 - g1)
    return np.clip(v - lam * y, 0.0, C)


def qp_dual(K: np.ndarray, y: np.ndarray, C: float, iters: int = 20_000,
            tol: float = 1e-12) -> tuple[np.ndarray, float]:
    """Maximise sum(a) - a'Qa/2 over the SVM dual feasible set by accelerated
    projected gradient (FISTA with adaptive restart). Returns (alpha, objective)."""
    Q = np.outer(y, y) * K
    L = float(np.linalg.eigvalsh(Q)[-1]) or 1.0
    a = np.zeros_like(y)
    z, t = a.copy(), 1.0

    def obj(x):
        return float(x.sum() - 0.5 * x @ Q @ x)

    prev = obj(a)
    for _ in range(iters):
        a_new = project_box_hyperplane(z - (Q @ z - 1.0) / L, y, C)
        cur = obj(a_new)
        if cur < prev:
            if t == 1.0:  # a plain projected step no longer improves: converged
                break
            t, z = 1.0, a.copy()  # restart momentum
            continue
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        z = a_new + ((t - 1) / t_new) * (a_new - a)
        step = np.max(np.abs(a_new - a))
        a, t, prev = a_new, t_new, cur
        if step < tol:
            break
    return a, obj(a)


def mann_whitney_auc(y, scores) -> float:
    """U / (n+ n-) by brute force over all positive/negative pairs, ties = 1/2."""
    y = np.asarray(y) > 0
    s = np.asarray(scores, dtype=float)
    pos, neg = s[y], s[~y]
    diff = pos[:, None] - neg[None, :]
    u = np.sum(diff > 0) + 0.5 * np.sum(diff == 0)
    return float(u / (pos.size * neg.size))


def pareto_samples(alpha: float, x_min: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws from p(x) ~ x^-alpha, x >= x_min."""
    u = rng.random(n)
    return x_min * (1.0 - u) ** (-1.0 / (alpha - 1.0))


def qos_by_hand(pairs) -> float:
    """Mean of 1 - (expect - perform) / perform written out term by term."""
    total = 0.0
    for e, p in pairs:
        total += 1.0 - (e - p) / p
    return total / len(pairs)
