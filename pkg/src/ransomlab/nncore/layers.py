"""Layers with explicit forward/backward passes (float64, NumPy only).

Conventions: dense inputs are ``(N, features)``; sequence inputs are
``(N, time, channels)``; image inputs are ``(N, channels, height, width)``.
``forward`` caches what ``backward`` needs, so a backward call always refers
to the most recent forward call on that layer.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError


class Layer:
    kind = "Layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def config(self) -> dict:
        return {}

    def spec(self) -> dict:
        return {"kind": self.kind, **self.config()}

    def __call__(self, x, training=False):
        return self.forward(x, training)

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.config().items())
        return f"{self.kind}({args})"


def _glorot(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _expect_ndim(x, ndim, what):
    if x.ndim != ndim:
        raise ShapeError(f"{ndim}-d input", x.shape, what)


class Dense(Layer):
    kind = "Dense"

    def __init__(self, n_in, n_out, rng=None, weight=None, bias=None):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        if weight is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            weight = _glorot(rng, n_in, n_out, (n_in, n_out))
        self.params["W"] = np.array(weight, dtype=np.float64).reshape(n_in, n_out)
        self.params["b"] = (np.zeros(n_out) if bias is None
                            else np.array(bias, dtype=np.float64).reshape(n_out))

    def config(self):
        return {"n_in": self.n_in, "n_out": self.n_out}

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(("N", self.n_in), x.shape, "Dense")
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, grad):
        self.grads["W"] = self._x.T @ grad
        self.grads["b"] = grad.sum(axis=0)
        return grad @ self.params["W"].T


class Embedding(Layer):
    """Lookup table for integer codes. Integer inputs have no gradient."""

    kind = "Embedding"

    def __init__(self, vocab, dim, rng=None, weight=None):
        super().__init__()
        self.vocab, self.dim = vocab, dim
        if weight is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            weight = rng.normal(0.0, 1.0, size=(vocab, dim))
        self.params["W"] = np.array(weight, dtype=np.float64).reshape(vocab, dim)

    def config(self):
        return {"vocab": self.vocab, "dim": self.dim}

    def forward(self, x, training=False):
        x = np.asarray(x)
        if not np.issubdtype(x.dtype, np.integer):
            raise TypeError("Embedding expects integer codes; use forward_soft for reals")
        if x.size and (x.min() < 0 or x.max() >= self.vocab):
            raise ValueError(f"codes outside 0..{self.vocab - 1}")
        self._x = x
        self._soft = None
        return self.params["W"][x]

    def forward_soft(self, x):
        """Piecewise-linear interpolation between neighbouring rows for real codes."""
        x = np.clip(np.asarray(x, dtype=np.float64), 0, self.vocab - 1)
        lo = np.minimum(np.floor(x).astype(np.int64), self.vocab - 2)
        frac = (x - lo)[..., None]
        W = self.params["W"]
        self._soft = (lo, frac)
        return W[lo] * (1 - frac) + W[lo + 1] * frac

    def backward(self, grad):
        W = self.params["W"]
        dW = np.zeros_like(W)
        if self._soft is not None:
            lo, frac = self._soft
            g2 = grad.reshape(-1, self.dim)
            f2 = frac.reshape(-1, 1)
            np.add.at(dW, lo.reshape(-1), g2 * (1 - f2))
            np.add.at(dW, lo.reshape(-1) + 1, g2 * f2)
            self.grads["W"] = dW
            # d/dx of the interpolation: slope between the two rows
            return np.sum(grad * (W[lo + 1] - W[lo]), axis=-1)
        flat = self._x.reshape(-1)
        g2 = grad.reshape(-1, self.dim)
        for v in range(self.vocab):
            m = flat == v
            if m.any():
                dW[v] = g2[m].sum(axis=0)
        self.grads["W"] = dW
        return None


class Conv1D(Layer):
    """Valid 1-d convolution over ``(N, T, C)`` producing ``(N, T - width + 1, F)``."""

    kind = "Conv1D"

    def __init__(self, in_ch, out_ch, width, rng=None, weight=None, bias=None):
        super().__init__()
        self.in_ch, self.out_ch, self.width = in_ch, out_ch, width
        if weight is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            weight = _glorot(rng, in_ch * width, out_ch, (width, in_ch, out_ch))
        self.params["W"] = np.array(weight, dtype=np.float64).reshape(width, in_ch, out_ch)
        self.params["b"] = np.zeros(out_ch) if bias is None else np.array(bias, dtype=np.float64)

    def config(self):
        return {"in_ch": self.in_ch, "out_ch": self.out_ch, "width": self.width}

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=np.float64)
        _expect_ndim(x, 3, "Conv1D")
        if x.shape[2] != self.in_ch or x.shape[1] < self.width:
            raise ShapeError(("N", f">={self.width}", self.in_ch), x.shape, "Conv1D")
        N, T, C = x.shape
        win = sliding_window_view(x, self.width, axis=1)  # N, T', C, w
        cols = win.transpose(0, 1, 3, 2).reshape(-1, self.width * C)
        self._cols, self._shape = cols, x.shape
        out = cols @ self.params["W"].reshape(-1, self.out_ch) + self.params["b"]
        return out.reshape(N, T - self.width + 1, self.out_ch)

    def backward(self, grad):
        N, T, C = self._shape
        g2 = grad.reshape(-1, self.out_ch)
        self.grads["W"] = (self._cols.T @ g2).reshape(self.params["W"].shape)
        self.grads["b"] = g2.sum(axis=0)
        dcols = (g2 @ self.params["W"].reshape(-1, self.out_ch).T)
        dcols = dcols.reshape(N, T - self.width + 1, self.width, C)
        dx = np.zeros(self._shape)
        Tp = T - self.width + 1
        for k in range(self.width):
            dx[:, k:k + Tp, :] += dcols[:, :, k, :]
        return dx


class MaxOverTime(Layer):
    """``(N, T, C) -> (N, C)``; the gradient flows to the first maximal position."""

    kind = "MaxOverTime"

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=np.float64)
        _expect_ndim(x, 3, "MaxOverTime")
        self._shape = x.shape
        self._idx = np.argmax(x, axis=1)
        return np.take_along_axis(x, self._idx[:, None, :], axis=1)[:, 0, :]

    def backward(self, grad):
        dx = np.zeros(self._shape)
        np.put_along_axis(dx, self._idx[:, None, :], grad[:, None, :], axis=1)
        return dx


def _pad2d(x, p):
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def _im2col(xp, k, s):
    """Padded ``(N, C, H, W)`` -> ``(N, Ho, Wo, C, k, k)`` patch tensor (a copy)."""
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))


def _col2im(cols, shape, k, s):
    """Scatter-add ``(N, Ho, Wo, C, k, k)`` patches into a zero array of ``shape``."""
    out = np.zeros(shape)
    _, Ho, Wo = cols.shape[:3]
    c = np.ascontiguousarray(cols.transpose(4, 5, 0, 3, 1, 2))  # k, k, N, C, Ho, Wo
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + s * (Ho - 1) + 1:s, j:j + s * (Wo - 1) + 1:s] += c[i, j]
    return out


class Conv2D(Layer):
    kind = "Conv2D"

    def __init__(self, in_ch, out_ch, kernel, stride=1, pad=0, rng=None, weight=None, bias=None):
        super().__init__()
        self.in_ch, self.out_ch, self.kernel, self.stride, self.pad = in_ch, out_ch, kernel, stride, pad
        if weight is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            fan = in_ch * kernel * kernel
            weight = _glorot(rng, fan, out_ch * kernel * kernel, (out_ch, in_ch, kernel, kernel))
        self.params["W"] = np.array(weight, dtype=np.float64).reshape(out_ch, in_ch, kernel, kernel)
        self.params["b"] = np.zeros(out_ch) if bias is None else np.array(bias, dtype=np.float64)

    def config(self):
        return {"in_ch": self.in_ch, "out_ch": self.out_ch, "kernel": self.kernel,
                "stride": self.stride, "pad": self.pad}

    def out_size(self, h):
        return (h + 2 * self.pad - self.kernel) // self.stride + 1

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=np.float64)
        _expect_ndim(x, 4, "Conv2D")
        if x.shape[1] != self.in_ch:
            raise ShapeError(("N", self.in_ch, "H", "W"), x.shape, "Conv2D")
        xp = _pad2d(x, self.pad)
        patches = _im2col(xp, self.kernel, self.stride)
        N, Ho, Wo = patches.shape[:3]
        cols = patches.reshape(N * Ho * Wo, -1)
        self._cols, self._xp_shape, self._patch_shape = cols, xp.shape, patches.shape
        out = cols @ self.params["W"].reshape(self.out_ch, -1).T + self.params["b"]
        return out.reshape(N, Ho, Wo, self.out_ch).transpose(0, 3, 1, 2)

    def backward(self, grad):
        g2 = grad.transpose(0, 2, 3, 1).reshape(-1, self.out_ch)
        Wm = self.params["W"].reshape(self.out_ch, -1)
        self.grads["W"] = (g2.T @ self._cols).reshape(self.params["W"].shape)
        self.grads["b"] = g2.sum(axis=0)
        dcols = (g2 @ Wm).reshape(self._patch_shape)
        dxp = _col2im(dcols, self._xp_shape, self.kernel, self.stride)
        p = self.pad
        return dxp[:, :, p:dxp.shape[2] - p, p:dxp.shape[3] - p] if p else dxp


class TransposedConv2D(Layer):
    """Adjoint of :class:`Conv2D`: output side ``(H - 1) * stride + kernel - 2 * pad``."""

    kind = "TransposedConv2D"

    def __init__(self, in_ch, out_ch, kernel, stride=1, pad=0, rng=None, weight=None, bias=None):
        super().__init__()
        self.in_ch, self.out_ch, self.kernel, self.stride, self.pad = in_ch, out_ch, kernel, stride, pad
        if weight is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            fan = in_ch * kernel * kernel // max(stride * stride, 1)
            weight = _glorot(rng, fan, out_ch * kernel * kernel // max(stride * stride, 1),
                             (in_ch, out_ch, kernel, kernel))
        self.params["W"] = np.array(weight, dtype=np.float64).reshape(in_ch, out_ch, kernel, kernel)
        self.params["b"] = np.zeros(out_ch) if bias is None else np.array(bias, dtype=np.float64)

    def config(self):
        return {"in_ch": self.in_ch, "out_ch": self.out_ch, "kernel": self.kernel,
                "stride": self.stride, "pad": self.pad}

    def out_size(self, h):
        return (h - 1) * self.stride + self.kernel - 2 * self.pad

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=np.float64)
        _expect_ndim(x, 4, "TransposedConv2D")
        if x.shape[1] != self.in_ch:
            raise ShapeError(("N", self.in_ch, "H", "W"), x.shape, "TransposedConv2D")
        N, _, H, W = x.shape
        k, s, p = self.kernel, self.stride, self.pad
        xf = x.transpose(0, 2, 3, 1).reshape(-1, self.in_ch)
        self._xf, self._xshape = xf, x.shape
        cols = (xf @ self.params["W"].reshape(self.in_ch, -1)).reshape(N, H, W, self.out_ch, k, k)
        full = _col2im(cols, (N, self.out_ch, (H - 1) * s + k, (W - 1) * s + k), k, s)
        if p:
            full = full[:, :, p:full.shape[2] - p, p:full.shape[3] - p]
        return full + self.params["b"][None, :, None, None]

    def backward(self, grad):
        N, _, H, W = self._xshape
        k, s = self.kernel, self.stride
        gp = _pad2d(grad, self.pad)
        gcols = _im2col(gp, k, s)[:, :H, :W].reshape(N * H * W, -1)
        Wm = self.params["W"].reshape(self.in_ch, -1)
        self.grads["W"] = (self._xf.T @ gcols).reshape(self.params["W"].shape)
        self.grads["b"] = grad.sum(axis=(0, 2, 3))
        dx = gcols @ Wm.T
        return dx.reshape(N, H, W, self.in_ch).transpose(0, 3, 1, 2)


class LeakyReLU(Layer):
    kind = "LeakyReLU"

    def __init__(self, alpha=0.2):
        super().__init__()
        self.alpha = alpha

    def config(self):
        return {"alpha": self.alpha}

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=np.float64)
        self._pos = x > 0
        return np.where(self._pos, x, self.alpha * x)

    def backward(self, grad):
        return np.where(self._pos, grad, self.alpha * grad)


class ReLU(LeakyReLU):
    kind = "ReLU"

    def __init__(self):
        super().__init__(0.0)

    def config(self):
        return {}


class Tanh(Layer):
    kind = "Tanh"

    def forward(self, x, training=False):
        self._y = np.tanh(np.asarray(x, dtype=np.float64))
        return self._y

    def backward(self, grad):
        return grad * (1.0 - self._y ** 2)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


class Sigmoid(Layer):
    kind = "Sigmoid"

    def forward(self, x, training=False):
        self._y = sigmoid(x)
        return self._y

    def backward(self, grad):
        return grad * self._y * (1.0 - self._y)


def softmax(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(x - x.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


class Softmax(Layer):
    kind = "Softmax"

    def forward(self, x, training=False):
        self._y = softmax(x)
        return self._y

    def backward(self, grad):
        y = self._y
        return y * (grad - np.sum(grad * y, axis=-1, keepdims=True))


class BatchNorm(Layer):
    """Normalizes over every axis except axis 1 (features or channels)."""

    kind = "BatchNorm"

    def __init__(self, n_features, momentum=0.9, eps=1e-5):
        super().__init__()
        self.n_features, self.momentum, self.eps = n_features, momentum, eps
        self.params["gamma"] = np.ones(n_features)
        self.params["beta"] = np.zeros(n_features)
        self.running_mean = np.zeros(n_features)
        self.running_var = np.ones(n_features)

    def config(self):
        return {"n_features": self.n_features, "momentum": self.momentum, "eps": self.eps}

    def _bshape(self, x):
        return (1, self.n_features) + (1,) * (x.ndim - 2)

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim < 2 or x.shape[1] != self.n_features:
            raise ShapeError(("N", self.n_features, "..."), x.shape, "BatchNorm")
        axes = (0,) + tuple(range(2, x.ndim))
        bs = self._bshape(x)
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            self.running_mean *= m
            self.running_mean += (1 - m) * mean
            self.running_var *= m
            self.running_var += (1 - m) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean.reshape(bs)) * inv.reshape(bs)
        self._cache = (xhat, inv, axes, bs, training)
        return self.params["gamma"].reshape(bs) * xhat + self.params["beta"].reshape(bs)

    def backward(self, grad):
        xhat, inv, axes, bs, training = self._cache
        self.grads["gamma"] = np.sum(grad * xhat, axis=axes)
        self.grads["beta"] = np.sum(grad, axis=axes)
        dxhat = grad * self.params["gamma"].reshape(bs)
        if not training:
            return dxhat * inv.reshape(bs)
        m = grad.size // self.n_features
        s1 = dxhat.sum(axis=axes).reshape(bs)
        s2 = (dxhat * xhat).sum(axis=axes).reshape(bs)
        return inv.reshape(bs) / m * (m * dxhat - s1 - xhat * s2)


class Dropout(Layer):
    """Inverted dropout; the mask comes from the generator handed in at construction."""

    kind = "Dropout"

    def __init__(self, rate, rng=None):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = rate
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def config(self):
        return {"rate": self.rate}

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=np.float64)
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        self._mask = (self.rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, grad):
        return grad if self._mask is None else grad * self._mask


class Reshape(Layer):
    kind = "Reshape"

    def __init__(self, shape):
        super().__init__()
        self.shape = tuple(shape)

    def config(self):
        return {"shape": list(self.shape)}

    def forward(self, x, training=False):
        self._in = x.shape
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, grad):
        return grad.reshape(self._in)


class Flatten(Layer):
    kind = "Flatten"

    def forward(self, x, training=False):
        self._in = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._in)


class Sequential(Layer):
    kind = "Sequential"

    def __init__(self, layers):
        super().__init__()
        self.layers = list(layers)

    def config(self):
        return {"layers": [l.spec() for l in self.layers]}

    def forward(self, x, training=False):
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def named_parameters(self, prefix=""):
        return named_parameters(self.layers, prefix)

    def named_grads(self, prefix=""):
        return named_grads(self.layers, prefix)


def named_parameters(layers, prefix=""):
    out = []
    for i, layer in enumerate(layers):
        if isinstance(layer, Sequential):
            out.extend(layer.named_parameters(f"{prefix}{i}."))
        else:
            out.extend((f"{prefix}{i}.{k}", v) for k, v in layer.params.items())
    return out


def named_grads(layers, prefix=""):
    out = []
    for i, layer in enumerate(layers):
        if isinstance(layer, Sequential):
            out.extend(layer.named_grads(f"{prefix}{i}."))
        else:
            out.extend((f"{prefix}{i}.{k}", layer.grads[k]) for k in layer.params)
    return out


def buffers(layers, prefix=""):
    """Non-trainable state (BatchNorm running statistics) keyed like parameters."""
    out = []
    for i, layer in enumerate(layers):
        if isinstance(layer, Sequential):
            out.extend(buffers(layer.layers, f"{prefix}{i}."))
        elif isinstance(layer, BatchNorm):
            out.append((f"{prefix}{i}.running_mean", layer.running_mean))
            out.append((f"{prefix}{i}.running_var", layer.running_var))
    return out
