"""Central finite-difference checks for layer and loss gradients."""

from __future__ import annotations

import copy

import numpy as np


def relative_error(analytic, numeric) -> float:
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(1e-8, np.abs(a) + np.abs(n))))


def numeric_grad(f, x, eps=1e-5):
    """Central differences of the scalar function ``f`` at ``x`` (not modified)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + eps
        fp = f(x)
        x[idx] = old - eps
        fm = f(x)
        x[idx] = old
        g[idx] = (fp - fm) / (2 * eps)
    return g


def check_scalar_grad(fn, x, eps=1e-5) -> float:
    """``fn(x) -> (value, grad)``; compares ``grad`` with finite differences."""
    _, g = fn(np.array(x, dtype=np.float64))
    num = numeric_grad(lambda z: fn(z)[0], x, eps)
    return relative_error(g, num)


def finite_diff_check(layer, x, training=False, eps=1e-5, seed=0) -> float:
    """Max relative error between ``layer.backward`` and central differences.

    The scalar probed is ``sum(R * layer(x))`` for a fixed random ``R``. Every
    evaluation runs on a fresh deep copy of the layer, so stochastic layers
    (dropout) reuse the same mask and batch statistics stay consistent.
    Integer inputs (embedding codes) are only checked through the parameters.
    """
    x = np.asarray(x)
    probe = copy.deepcopy(layer)
    y = probe.forward(x, training)
    R = np.random.default_rng(seed).normal(size=y.shape)
    dx = probe.backward(R)
    errs = []

    def value(lay, inp):
        return float(np.sum(R * copy.deepcopy(lay).forward(inp, training)))

    if np.issubdtype(x.dtype, np.floating) and dx is not None:
        num = numeric_grad(lambda z: value(layer, z), x, eps)
        errs.append(relative_error(dx, num))
    for name, p in layer.params.items():
        def f(pv, name=name):
            lay = copy.deepcopy(layer)
            lay.params[name][...] = pv
            return value(lay, x)
        num = numeric_grad(f, p, eps)
        errs.append(relative_error(probe.grads[name], num))
    return max(errs) if errs else 0.0
