"""Feed-forward layers. Each layer exposes `params`/`grads` dicts of numpy
arrays plus forward(x, train)/backward(dout); backward fills `grads` and
returns the gradient with respect to the layer input."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Input shape is inconsistent with the layer configuration."""


def xavier_uniform(rng, shape, fan_in, fan_out, dtype=np.float64):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def softmax(x, axis=-1):
    """Numerically stable softmax along `axis`."""
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


class Linear:
    """y = x @ W + b over the last axis."""

    def __init__(self, d_in, d_out, rng=None, dtype=np.float64):
        rng = rng or np.random.default_rng(0)
        self.d_in, self.d_out = d_in, d_out
        self.params = {
            "W": xavier_uniform(rng, (d_in, d_out), d_in, d_out, dtype),
            "b": np.zeros(d_out, dtype=dtype),
        }
        self.grads = {}
        self._x = None

    def forward(self, x, train=False):
        if x.shape[-1] != self.d_in:
            raise ShapeError(f"linear expects last dim {self.d_in}, got {x.shape}")
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        x2 = self._x.reshape(-1, self.d_in)
        d2 = dout.reshape(-1, self.d_out)
        self.grads = {"W": x2.T @ d2, "b": d2.sum(axis=0)}
        return (d2 @ self.params["W"].T).reshape(self._x.shape)


class ReLU:
    def __init__(self):
        self.params = {}
        self.grads = {}
        self._mask = None

    def forward(self, x, train=False):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dout):
        return np.where(self._mask, dout, 0.0)


class Softmax:
    """Row-wise softmax over the last axis."""

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._y = None

    def forward(self, x, train=False):
        self._y = softmax(x, axis=-1)
        return self._y

    def backward(self, dout):
        y = self._y
        return y * (dout - np.sum(dout * y, axis=-1, keepdims=True))


class Conv2D:
    """2-D convolution over (T, F, C) inputs with ceil-division output sizes.

    Padding is symmetric and sized so the output is exactly
    (ceil(T/sh), ceil(F/sw), c_out); the time axis therefore shrinks only
    through the stride, which keeps downstream sequence lengths predictable.
    """

    def __init__(self, c_in, c_out, kh, kw, sh=1, sw=1, rng=None, dtype=np.float64):
        if min(kh, kw) < 1 or min(sh, sw) < 1:
            raise ShapeError(f"kernel {kh}x{kw} / stride {sh}x{sw} must be >= 1")
        rng = rng or np.random.default_rng(0)
        self.c_in, self.c_out = c_in, c_out
        self.kh, self.kw, self.sh, self.sw = kh, kw, sh, sw
        fan_in = kh * kw * c_in
        fan_out = kh * kw * c_out
        self.params = {
            "W": xavier_uniform(rng, (kh, kw, c_in, c_out), fan_in, fan_out, dtype),
            "b": np.zeros(c_out, dtype=dtype),
        }
        self.grads = {}
        self._cache = None

    def output_hw(self, t, f):
        return -(-t // self.sh), -(-f // self.sw)

    def _pad_amounts(self, t, f):
        ot, of = self.output_hw(t, f)
        pad_t = max((ot - 1) * self.sh + self.kh - t, 0)
        pad_f = max((of - 1) * self.sw + self.kw - f, 0)
        return pad_t, pad_f

    def forward(self, x, train=False):
        if x.ndim != 3 or x.shape[2] != self.c_in:
            raise ShapeError(f"conv2d expects (T, F, {self.c_in}), got {x.shape}")
        t, f, _ = x.shape
        pad_t, pad_f = self._pad_amounts(t, f)
        xp = np.pad(x, ((pad_t // 2, pad_t - pad_t // 2), (pad_f // 2, pad_f - pad_f // 2), (0, 0)))
        win = sliding_window_view(xp, (self.kh, self.kw), axis=(0, 1))[:: self.sh, :: self.sw]
        # win: (ot, of, c_in, kh, kw); W: (kh, kw, c_in, c_out)
        out = np.tensordot(win, self.params["W"], axes=([3, 4, 2], [0, 1, 2]))
        out += self.params["b"]
        self._cache = (x.shape, xp.shape, win)
        return out

    def backward(self, dout):
        (t, f, _), xp_shape, win = self._cache
        w = self.params["W"]
        dw = np.tensordot(win, dout, axes=([0, 1], [0, 1]))  # (c_in, kh, kw, c_out)
        self.grads = {"W": dw.transpose(1, 2, 0, 3), "b": dout.sum(axis=(0, 1))}

        ot, of = dout.shape[:2]
        dxp = np.zeros(xp_shape, dtype=dout.dtype)
        for ki in range(self.kh):
            for kj in range(self.kw):
                # strided slices for a fixed kernel offset never overlap
                dxp[ki : ki + ot * self.sh : self.sh, kj : kj + of * self.sw : self.sw] += (
                    dout @ w[ki, kj].T
                )
        pad_t, pad_f = self._pad_amounts(t, f)
        t0, f0 = pad_t // 2, pad_f // 2
        return dxp[t0 : t0 + t, f0 : f0 + f]


class MaxPool2D:
    """Non-overlapping 2x2 max pooling (floor-division output sizes)."""

    KERNEL = 2

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._cache = None

    @staticmethod
    def output_hw(t, f):
        return t // 2, f // 2

    def forward(self, x, train=False):
        t, f, c = x.shape
        ot, of = self.output_hw(t, f)
        if ot < 1 or of < 1:
            raise ShapeError(f"maxpool needs at least 2x2 spatial input, got {t}x{f}")
        tiles = x[: 2 * ot, : 2 * of].reshape(ot, 2, of, 2, c).transpose(0, 2, 4, 1, 3)
        flat = tiles.reshape(ot, of, c, 4)
        arg = np.argmax(flat, axis=3)  # first max wins: deterministic tie-break
        out = np.take_along_axis(flat, arg[..., None], axis=3)[..., 0]
        self._cache = (x.shape, arg)
        return out

    def backward(self, dout):
        (t, f, c), arg = self._cache
        ot, of = dout.shape[:2]
        dx = np.zeros((t, f, c), dtype=dout.dtype)
        oi, oj, ch = np.ogrid[:ot, :of, :c]
        rows = 2 * oi + arg // 2
        cols = 2 * oj + arg % 2
        dx[rows, cols, ch] = dout
        return dx


class BatchNorm:
    """Per-channel normalization over all leading axes of (.., C) input.

    Training mode uses batch statistics and maintains running averages
    (momentum 0.9) for inference mode.
    """

    def __init__(self, channels, momentum=0.9, eps=1e-5, dtype=np.float64):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.params = {
            "gamma": np.ones(channels, dtype=dtype),
            "beta": np.zeros(channels, dtype=dtype),
        }
        self.grads = {}
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self._cache = None

    def forward(self, x, train=False):
        if x.shape[-1] != self.channels:
            raise ShapeError(f"batchnorm expects {self.channels} channels, got {x.shape}")
        axes = tuple(range(x.ndim - 1))
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mean
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, axes, train)
        return self.params["gamma"] * xhat + self.params["beta"]

    def backward(self, dout):
        xhat, inv_std, axes, train = self._cache
        self.grads = {
            "gamma": np.sum(dout * xhat, axis=axes),
            "beta": np.sum(dout, axis=axes),
        }
        g = self.params["gamma"]
        if not train:
            return dout * g * inv_std
        m = xhat.size // xhat.shape[-1]
        dxhat = dout * g
        return (
            inv_std
            / m
            * (m * dxhat - np.sum(dxhat, axis=axes) - xhat * np.sum(dxhat * xhat, axis=axes))
        )
