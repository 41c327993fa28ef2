"""Layers with hand-written forward/backward passes.

Convolutions default to the 4x4 / stride 2 / padding 1 geometry, so each
conv halves and each transposed conv doubles the spatial extent. Storage is
float32 by default; every layer accepts dtype=np.float64 for the gradient
checking mode.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def _windows(xp: np.ndarray, out_h: int, out_w: int, k: int, stride: int) -> np.ndarray:
    """(N, C, out_h, out_w, k, k) sliding-window view of a padded input."""
    n, c = xp.shape[:2]
    sn, sc, sh, sw = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        (n, c, out_h, out_w, k, k),
        (sn, sc, stride * sh, stride * sw, sh, sw),
        writeable=False,
    )


class Conv2d:
    def __init__(self, in_ch, out_ch, kernel=4, stride=2, pad=1, *, rng, dtype=np.float32):
        self.kernel, self.stride, self.pad = kernel, stride, pad
        self.weight = Tensor(
            rng.normal(0.0, 0.02, size=(out_ch, in_ch, kernel, kernel)).astype(dtype)
        )
        self.bias = Tensor(np.zeros(out_ch, dtype=dtype))
        self._cache = None

    def params(self):
        return [self.weight, self.bias]

    def out_shape(self, h, w):
        k, s, p = self.kernel, self.stride, self.pad
        return (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1

    def forward(self, x, train=False):
        n, c, h, w = x.shape
        k, s, p = self.kernel, self.stride, self.pad
        if (h + 2 * p - k) % s or (w + 2 * p - k) % s:
            raise ValueError(f"input {h}x{w} not compatible with k={k} s={s} p={p}")
        oh, ow = self.out_shape(h, w)
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        win = _windows(xp, oh, ow, k, s)
        out = np.einsum("nchwij,ocij->nohw", win, self.weight.data, optimize=True)
        out += self.bias.data[None, :, None, None]
        self._cache = (xp, win, x.shape)
        return out

    def backward(self, grad_out):
        if self._cache is None:
            raise RuntimeError("backward called without a cached forward")
        xp, win, x_shape = self._cache
        self._cache = None
        k, s, p = self.kernel, self.stride, self.pad
        n, c, h, w = x_shape
        oh, ow = grad_out.shape[2:]

        self.bias.grad += grad_out.sum(axis=(0, 2, 3))
        self.weight.grad += np.einsum("nchwij,nohw->ocij", win, grad_out, optimize=True)

        gxp = np.zeros_like(xp)
        for ki in range(k):
            for kj in range(k):
                contrib = np.einsum(
                    "nohw,oc->nchw", grad_out, self.weight.data[:, :, ki, kj], optimize=True
                )
                gxp[:, :, ki : ki + s * oh : s, kj : kj + s * ow : s] += contrib
        return gxp[:, :, p : p + h, p : p + w]


class ConvTranspose2d:
    """Adjoint of Conv2d; with the default geometry it doubles H and W."""

    def __init__(self, in_ch, out_ch, kernel=4, stride=2, pad=1, *, rng, dtype=np.float32):
        self.kernel, self.stride, self.pad = kernel, stride, pad
        self.weight = Tensor(
            rng.normal(0.0, 0.02, size=(in_ch, out_ch, kernel, kernel)).astype(dtype)
        )
        self.bias = Tensor(np.zeros(out_ch, dtype=dtype))
        self._cache = None

    def params(self):
        return [self.weight, self.bias]

    def out_shape(self, h, w):
        k, s, p = self.kernel, self.stride, self.pad
        return (h - 1) * s + k - 2 * p, (w - 1) * s + k - 2 * p

    def forward(self, x, train=False):
        n, c, h, w = x.shape
        k, s, p = self.kernel, self.stride, self.pad
        out_ch = self.weight.data.shape[1]
        full_h, full_w = (h - 1) * s + k, (w - 1) * s + k
        full = np.zeros((n, out_ch, full_h, full_w), dtype=x.dtype)
        for ki in range(k):
            for kj in range(k):
                contrib = np.einsum(
                    "nchw,co->nohw", x, self.weight.data[:, :, ki, kj], optimize=True
                )
                full[:, :, ki : ki + s * h : s, kj : kj + s * w : s] += contrib
        out = full[:, :, p : full_h - p, p : full_w - p]
        out = out + self.bias.data[None, :, None, None]
        self._cache = (x, (full_h, full_w))
        return out

    def backward(self, grad_out):
        if self._cache is None:
            raise RuntimeError("backward called without a cached forward")
        x, (full_h, full_w) = self._cache
        self._cache = None
        k, s, p = self.kernel, self.stride, self.pad
        n, c, h, w = x.shape

        self.bias.grad += grad_out.sum(axis=(0, 2, 3))
        grad_full = np.zeros((n, grad_out.shape[1], full_h, full_w), dtype=grad_out.dtype)
        grad_full[:, :, p : full_h - p, p : full_w - p] = grad_out
        win = _windows(grad_full, h, w, k, s)
        self.weight.grad += np.einsum("nchw,nohwij->coij", x, win, optimize=True)
        return np.einsum("nohwij,coij->nchw", win, self.weight.data, optimize=True)


class BatchNorm2d:
    def __init__(self, channels, eps=1e-5, momentum=0.1, *, dtype=np.float32):
        self.eps, self.momentum = eps, momentum
        self.gamma = Tensor(np.ones(channels, dtype=dtype))
        self.beta = Tensor(np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self._cache = None

    def params(self):
        return [self.gamma, self.beta]

    def forward(self, x, train=False):
        if train:
            n_stat = x.shape[0] * x.shape[2] * x.shape[3]
            if n_stat < 2:
                raise ValueError(
                    f"batch statistics undefined: N*H*W = {n_stat} < 2 per channel"
                )
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            m = self.momentum
            self.running_mean = ((1 - m) * self.running_mean + m * mean).astype(x.dtype)
            unbiased = var * n_stat / max(n_stat - 1, 1)
            self.running_var = ((1 - m) * self.running_var + m * unbiased).astype(x.dtype)
        else:
            mean, var = self.running_mean, self.running_var
        invstd = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None, None]) * invstd[None, :, None, None]
        out = self.gamma.data[None, :, None, None] * xhat + self.beta.data[None, :, None, None]
        self._cache = (xhat, invstd, train, x.shape)
        return out

    def backward(self, grad_out):
        if self._cache is None:
            raise RuntimeError("backward called without a cached forward")
        xhat, invstd, train, x_shape = self._cache
        self._cache = None
        self.gamma.grad += (grad_out * xhat).sum(axis=(0, 2, 3))
        self.beta.grad += grad_out.sum(axis=(0, 2, 3))
        g = grad_out * self.gamma.data[None, :, None, None]
        if not train:
            return g * invstd[None, :, None, None]
        n_stat = x_shape[0] * x_shape[2] * x_shape[3]
        sum_g = g.sum(axis=(0, 2, 3), keepdims=True)
        sum_gx = (g * xhat).sum(axis=(0, 2, 3), keepdims=True)
        return (invstd[None, :, None, None] / n_stat) * (
            n_stat * g - sum_g - xhat * sum_gx
        )


class Dropout:
    """Inverted dropout: survivors are scaled by 1/(1-rate) in train mode."""

    def __init__(self, rate=0.5, *, rng):
        self.rate = rate
        self.rng = rng
        self._mask = None

    def params(self):
        return []

    def forward(self, x, train=False):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        self._mask = (self.rng.random(x.shape) < keep).astype(x.dtype) / keep
        return x * self._mask

    def backward(self, grad_out):
        if self._mask is None:
            return grad_out
        return grad_out * self._mask


class LeakyReLU:
    def __init__(self, slope=0.2):
        self.slope = slope
        self._cache = None

    def params(self):
        return []

    def forward(self, x, train=False):
        self._cache = x >= 0
        return np.where(self._cache, x, self.slope * x)

    def backward(self, grad_out):
        return np.where(self._cache, grad_out, self.slope * grad_out)


class ReLU(LeakyReLU):
    def __init__(self):
        super().__init__(slope=0.0)


class Sigmoid:
    def __init__(self):
        self._out = None

    def params(self):
        return []

    def forward(self, x, train=False):
        self._out = 1.0 / (1.0 + np.exp(-x))
        return self._out

    def backward(self, grad_out):
        return grad_out * self._out * (1.0 - self._out)


class Tanh:
    def __init__(self):
        self._out = None

    def params(self):
        return []

    def forward(self, x, train=False):
        self._out = np.tanh(x)
        return self._out

    def backward(self, grad_out):
        return grad_out * (1.0 - self._out ** 2)
