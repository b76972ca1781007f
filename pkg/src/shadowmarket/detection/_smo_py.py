"""Reference SMO solver in numpy; used when the compiled kernel is unavailable."""
import numpy as np

TAU = 1e-12


def smo_solve(K, y, C, tol, max_iter):
    """Solve min 0.5 a'Qa - e'a, 0 <= a <= C, y'a = 0 with Q = yy' * K.

    Working set: maximal violating pair, lowest index on ties.
    Returns (alpha, grad, n_iter, converged).
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    QD = np.diag(K).copy()
    pos = y > 0
    neg = ~pos
    it = 0
    converged = False
    while it < max_iter:
        yG = -y * G
        up = (pos & (alpha < C)) | (neg & (alpha > 0))
        low = (pos & (alpha > 0)) | (neg & (alpha < C))
        if not up.any() or not low.any():
            converged = True
            break
        cand = np.where(up, yG, -np.inf)
        i = int(np.argmax(cand))
        cand = np.where(low, yG, np.inf)
        j = int(np.argmin(cand))
        if yG[i] - yG[j] < tol:
            converged = True
            break
        it += 1
        ai, aj = alpha[i], alpha[j]
        yi, yj = y[i], y[j]
        kij = K[i, j]
        if yi != yj:
            quad = QD[i] + QD[j] + 2.0 * kij
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > 0:
                if ni > C:
                    ni, nj = C, C - diff
            elif nj > C:
                nj, ni = C, C + diff
        else:
            quad = QD[i] + QD[j] - 2.0 * kij
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            s = ai + aj
            ni, nj = ai - delta, aj + delta
            if s > C:
                if ni > C:
                    ni, nj = C, s - C
            elif nj < 0:
                nj, ni = 0.0, s
            if s > C:
                if nj > C:
                    nj, ni = C, s - C
            elif ni < 0:
                ni, nj = 0.0, s
        di, dj = ni - ai, nj - aj
        alpha[i], alpha[j] = ni, nj
        G += y * (yi * di * K[i] + yj * dj * K[j])
    return alpha, G, it, converged
