"""Adam optimizer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_update(params, grads, state: AdamState):
    """One Adam step, updating ``params`` and ``state`` in place (both are also returned)."""
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    b1, b2, t = state.beta1, state.beta2, state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ShapeError(p.shape, g.shape, "gradient")
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        p -= state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return params, state


class Adam:
    """Adam over a fixed list of ``(name, array)`` parameters of a model."""

    def __init__(self, named_params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.names = [n for n, _ in named_params]
        self.params = [p for _, p in named_params]
        self.state = AdamState(lr, beta1, beta2, eps)

    def step(self, named_grads):
        grads = dict(named_grads)
        adam_update(self.params, [grads[n] for n in self.names], self.state)
