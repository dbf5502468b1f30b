"""Numpy layers with explicit backward passes. Tensors are NHWC."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _same_pad(size, kernel, stride):
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return out, total // 2, total - total // 2


class Layer:
    kind = "layer"
    params: dict
    grads: dict

    def __init__(self):
        self.params = {}
        self.grads = {}
        self.needs_input_grad = True

    def output_shape(self, in_shape):
        return in_shape

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


def _relu_backward(dout, out):
    return dout * (out > 0)


class Conv2D(Layer):
    kind = "conv"

    def __init__(self, in_ch, out_ch, kernel, stride=1, activation="relu", name="conv"):
        super().__init__()
        self.in_ch, self.out_ch, self.k, self.stride = in_ch, out_ch, kernel, stride
        self.activation = activation
        self.name = name
        self.params["W"] = np.zeros((kernel, kernel, in_ch, out_ch))
        self.params["b"] = np.zeros(out_ch)

    def output_shape(self, in_shape):
        h, w, c = in_shape
        if c != self.in_ch:
            raise ValueError(f"{self.name}: expected {self.in_ch} input channels, got {c}")
        ho, _, _ = _same_pad(h, self.k, self.stride)
        wo, _, _ = _same_pad(w, self.k, self.stride)
        return (ho, wo, self.out_ch)

    def forward(self, x, training=False):
        B, H, W, C = x.shape
        s, k = self.stride, self.k
        ho, ph0, ph1 = _same_pad(H, k, s)
        wo, pw0, pw1 = _same_pad(W, k, s)
        xp = np.pad(x, ((0, 0), (ph0, ph1), (pw0, pw1), (0, 0)))
        win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::s, ::s][:, :ho, :wo]
        # (kh, kw, C) column order keeps k*C-long contiguous runs in the copy
        cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(B * ho * wo, k * k * C)
        out = cols @ self.params["W"].reshape(k * k * C, self.out_ch) + self.params["b"]
        out = out.reshape(B, ho, wo, self.out_ch)
        if self.activation == "relu":
            out = np.maximum(out, 0)
        self._cache = (cols, xp.shape, out, (ph0, pw0), (H, W))
        return out

    def backward(self, dout):
        cols, xp_shape, out, (ph0, pw0), (H, W) = self._cache
        if self.activation == "relu":
            dout = _relu_backward(dout, out)
        B, ho, wo, co = dout.shape
        d2 = dout.reshape(-1, co)
        C, k, s = self.in_ch, self.k, self.stride
        self.grads["W"] = (cols.T @ d2).reshape(self.params["W"].shape)
        self.grads["b"] = d2.sum(axis=0)
        self._cache = None
        if not self.needs_input_grad:
            return None
        dcols = (d2 @ self.params["W"].reshape(k * k * C, co).T).reshape(B, ho, wo, k, k, C)
        dxp = np.zeros(xp_shape, dtype=dout.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i:i + s * ho:s, j:j + s * wo:s, :] += dcols[:, :, :, i, j, :]
        return dxp[:, ph0:ph0 + H, pw0:pw0 + W, :]


class MaxPool2D(Layer):
    kind = "pool"

    def __init__(self, pool=2, name="pool"):
        super().__init__()
        self.pool = pool
        self.name = name

    def output_shape(self, in_shape):
        h, w, c = in_shape
        if h % self.pool or w % self.pool:
            raise ValueError(f"{self.name}: input {h}x{w} not divisible by pool {self.pool}")
        return (h // self.pool, w // self.pool, c)

    def forward(self, x, training=False):
        B, H, W, C = x.shape
        p = self.pool
        blocks = x.reshape(B, H // p, p, W // p, p, C).transpose(0, 1, 3, 5, 2, 4)
        blocks = blocks.reshape(B, H // p, W // p, C, p * p)
        arg = blocks.argmax(axis=-1)
        self._cache = (arg, x.shape)
        return np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(self, dout):
        arg, shape = self._cache
        B, H, W, C = shape
        p = self.pool
        d = np.zeros(dout.shape + (p * p,), dtype=dout.dtype)
        np.put_along_axis(d, arg[..., None], dout[..., None], axis=-1)
        d = d.reshape(B, H // p, W // p, C, p, p).transpose(0, 1, 4, 2, 5, 3)
        return d.reshape(shape)


class Flatten(Layer):
    kind = "flatten"

    def __init__(self, name="flatten"):
        super().__init__()
        self.name = name

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in, n_out, activation="relu", name="dense"):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        self.activation = activation
        self.name = name
        self.params["W"] = np.zeros((n_in, n_out))
        self.params["b"] = np.zeros(n_out)

    def output_shape(self, in_shape):
        if in_shape != (self.n_in,):
            raise ValueError(f"{self.name}: expected input ({self.n_in},), got {in_shape}")
        return (self.n_out,)

    def forward(self, x, training=False):
        out = x @ self.params["W"] + self.params["b"]
        if self.activation == "relu":
            out = np.maximum(out, 0)
        self._cache = (x, out)
        return out

    def backward(self, dout):
        x, out = self._cache
        if self.activation == "relu":
            dout = _relu_backward(dout, out)
        self.grads["W"] = x.T @ dout
        self.grads["b"] = dout.sum(axis=0)
        return dout @ self.params["W"].T


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, rate=0.5, name="dropout"):
        super().__init__()
        self.rate = rate
        self.name = name
        self.rng = np.random.default_rng(0)

    def forward(self, x, training=False):
        if not training or self.rate == 0:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        self._mask = (self.rng.random(x.shape) < keep).astype(x.dtype) / keep
        return x * self._mask

    def backward(self, dout):
        return dout if self._mask is None else dout * self._mask


# ---------------------------------------------------------------------------
# heads


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                    np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def softmax_cross_entropy(logits, targets):
    """Mean categorical cross-entropy against target distributions, and its
    gradient with respect to the logits."""
    z = logits - logits.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    n = logits.shape[0]
    loss = -np.sum(targets * logp) / n
    grad = (np.exp(logp) * targets.sum(axis=-1, keepdims=True) - targets) / n
    return float(loss), grad


def sigmoid_cross_entropy(logits, targets):
    """Mean binary cross-entropy on logits of shape (n, 1)."""
    targets = targets.reshape(logits.shape)
    n = logits.shape[0]
    loss = np.sum(np.maximum(logits, 0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))) / n
    grad = (sigmoid(logits) - targets) / n
    return float(loss), grad
