"""Soft-margin SVM trained by sequential minimal optimization.

Working-set selection uses second-order information (maximal violating pair
refined by the largest objective decrease), as in LIBSVM. The full kernel
matrix is cached, which is fine at a few thousand training points.
"""

from __future__ import annotations

import numpy as np

from .base import Classifier, Standardizer, sigmoid

TAU = 1e-12


def linear_kernel(A, B, gamma=None):
    return A @ B.T


def rbf_kernel(A, B, gamma):
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def smo(K, y, C, tol=1e-3, max_iter=100_000):
    """Solve the SVM dual for kernel matrix ``K`` and labels ``y`` in {-1, +1}.

    Returns ``(alpha, b, n_iter)`` so that ``f(x) = sum_i alpha_i y_i K(x_i, x) + b``.
    """
    n = y.size
    y = y.astype(np.float64)
    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient of 0.5 a'Qa - e'a with Q_ij = y_i y_j K_ij
    diag = np.diag(K).copy()
    it = 0
    for it in range(1, max_iter + 1):
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        score = -y * G
        if not up.any() or not low.any():
            break
        i = int(np.argmax(np.where(up, score, -np.inf)))
        m_up = score[i]
        m_low = np.min(np.where(low, score, np.inf))
        if m_up - m_low < tol:
            break
        b_it = m_up - score
        cand = low & (b_it > 0)
        a_it = diag[i] + diag - 2.0 * K[i]
        a_it = np.where(a_it > 0, a_it, TAU)
        obj = np.where(cand, -(b_it ** 2) / a_it, np.inf)
        j = int(np.argmin(obj))
        yi, yj = y[i], y[j]
        a = max(K[i, i] + K[j, j] - 2.0 * K[i, j], TAU)
        old_i, old_j = alpha[i], alpha[j]
        if yi != yj:
            delta = (-G[i] - G[j]) / a
            diff = old_i - old_j
            ai, aj = old_i + delta, old_j + delta
            if diff > 0 and aj < 0:
                aj, ai = 0.0, diff
            elif diff <= 0 and ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0 and ai > C:
                ai, aj = C, C - diff
            elif diff <= 0 and aj > C:
                aj, ai = C, C + diff
        else:
            delta = (G[i] - G[j]) / a
            s = old_i + old_j
            ai, aj = old_i - delta, old_j + delta
            if s > C and ai > C:
                ai, aj = C, s - C
            elif s <= C and aj < 0:
                aj, ai = 0.0, s
            if s > C and aj > C:
                aj, ai = C, s - C
            elif s <= C and ai < 0:
                ai, aj = 0.0, s
        alpha[i], alpha[j] = ai, aj
        G += y * (K[:, i] * yi * (ai - old_i) + K[:, j] * yj * (aj - old_j))
    free = (alpha > 0) & (alpha < C)
    yG = y * G
    if free.any():
        b = -float(np.mean(yG[free]))
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        hi = np.max(-yG[up]) if up.any() else 0.0
        lo = np.min(-yG[low]) if low.any() else 0.0
        b = float((hi + lo) / 2)
    return alpha, b, it


class SVM(Classifier):
    """Kernel SVM on standardized features.

    ``predict_proba`` is the logistic squash of the decision value, so the
    0.5 threshold coincides with the sign of the margin.
    """

    def __init__(self, kernel="rbf", C=1.0, gamma="scale", tol=1e-3, max_iter=100_000):
        self.kernel, self.C, self.gamma, self.tol, self.max_iter = kernel, C, gamma, tol, max_iter

    @property
    def name(self):
        return f"svm_{self.kernel}"

    def _kfun(self, A, B):
        return (rbf_kernel if self.kernel == "rbf" else linear_kernel)(A, B, self.gamma_)

    def _fit(self, X, y):
        self.scaler = Standardizer().fit(X)
        Z = self.scaler.transform(X)
        if self.gamma == "scale":
            v = Z.var()
            self.gamma_ = 1.0 / (Z.shape[1] * v) if v > 0 else 1.0
        else:
            self.gamma_ = float(self.gamma)
        t = 2 * y - 1
        K = self._kfun(Z, Z)
        alpha, b, self.n_iter_ = smo(K, t, self.C, self.tol, self.max_iter)
        sv = alpha > 1e-10
        self.support_ = Z[sv]
        self.dual_coef_ = alpha[sv] * t[sv]
        self.intercept = b
        if self.kernel == "linear":
            self.coef = self.dual_coef_ @ self.support_

    def decision_function(self, X):
        Z = self.scaler.transform(np.asarray(X, dtype=np.float64))
        if self.kernel == "linear":
            return Z @ self.coef + self.intercept
        out = np.empty(Z.shape[0])
        for s in range(0, Z.shape[0], 2048):
            out[s:s + 2048] = self._kfun(Z[s:s + 2048], self.support_) @ self.dual_coef_
        return out + self.intercept

    def _proba(self, X):
        return sigmoid(self.decision_function(X))
