"""Gaussian naive Bayes, LDA and L2 logistic regression."""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .base import Classifier, Standardizer, sigmoid


class NaiveBayes(Classifier):
    """Gaussian class-conditional densities with independent features."""

    name = "naive_bayes"

    def __init__(self, var_smoothing=1e-9):
        self.var_smoothing = var_smoothing

    def _fit(self, X, y):
        eps = self.var_smoothing * max(X.var(axis=0).max(), 1e-12)
        self.means = np.stack([X[y == c].mean(axis=0) for c in (0, 1)])
        self.vars = np.stack([X[y == c].var(axis=0) for c in (0, 1)]) + eps
        self.log_prior = np.log(np.bincount(y, minlength=2) / y.size)

    def joint_log_likelihood(self, X):
        out = np.empty((X.shape[0], 2))
        for c in (0, 1):
            ll = -0.5 * np.sum(np.log(2 * np.pi * self.vars[c]))
            ll = ll - 0.5 * np.sum((X - self.means[c]) ** 2 / self.vars[c], axis=1)
            out[:, c] = self.log_prior[c] + ll
        return out

    def _proba(self, X):
        jll = self.joint_log_likelihood(X)
        return np.exp(jll[:, 1] - logsumexp(jll, axis=1))


def ledoit_wolf(Xc):
    """Ledoit-Wolf shrunk covariance of already-centred data."""
    n, d = Xc.shape
    S = Xc.T @ Xc / n
    mu = np.trace(S) / d
    delta = S.copy()
    delta[np.diag_indices(d)] -= mu
    delta2 = np.sum(delta ** 2) / d
    X2 = Xc ** 2
    beta2 = (np.sum(X2.T @ X2) / n - np.sum(S ** 2)) / (d * n)
    shrink = 0.0 if delta2 == 0 else min(beta2, delta2) / delta2
    out = (1 - shrink) * S
    out[np.diag_indices(d)] += shrink * mu
    return out


class LDA(Classifier):
    """Two-class LDA with a shared, Ledoit-Wolf shrunk covariance.

    The score is the model's posterior P(malicious | x).
    """

    name = "lda"

    def __init__(self, priors=None):
        self.priors = priors

    def _fit(self, X, y):
        mu = np.stack([X[y == c].mean(axis=0) for c in (0, 1)])
        Xc = X - mu[y]
        cov = ledoit_wolf(Xc)
        cov[np.diag_indices_from(cov)] += 1e-10 * max(np.trace(cov) / cov.shape[0], 1e-12)
        pri = np.bincount(y, minlength=2) / y.size if self.priors is None else np.asarray(self.priors)
        self.coef = np.linalg.solve(cov, mu[1] - mu[0])
        self.intercept = -0.5 * (mu[1] + mu[0]) @ self.coef + np.log(pri[1] / pri[0])

    def decision_function(self, X):
        return X @ self.coef + self.intercept

    def _proba(self, X):
        return sigmoid(self.decision_function(X))


class LogisticRegression(Classifier):
    """L2-penalized logistic regression on standardized features, fit by L-BFGS."""

    name = "logistic_regression"

    def __init__(self, C=1.0, max_iter=500):
        self.C, self.max_iter = C, max_iter

    def _fit(self, X, y):
        self.scaler = Standardizer().fit(X)
        Z = self.scaler.transform(X)
        n, d = Z.shape
        t = 2.0 * y - 1.0

        def objective(wb):
            w, b = wb[:-1], wb[-1]
            m = t * (Z @ w + b)
            loss = np.sum(np.logaddexp(0.0, -m)) + 0.5 / self.C * w @ w
            g = -t * sigmoid(-m)
            return loss, np.r_[Z.T @ g + w / self.C, g.sum()]

        res = minimize(objective, np.zeros(d + 1), jac=True, method="L-BFGS-B",
                       options={"maxiter": self.max_iter})
        self.coef, self.intercept = res.x[:-1], res.x[-1]

    def decision_function(self, X):
        return self.scaler.transform(X) @ self.coef + self.intercept

    def _proba(self, X):
        return sigmoid(self.decision_function(X))
