"""Layers with explicit forward/backward passes on numpy arrays.

Activations are laid out (batch, channels, F, T); dense layers take
(batch, features).  ``forward`` caches what ``backward`` needs, so each
layer handles one forward/backward pair at a time.
"""

from __future__ import annotations

import numpy as np

from ..errors import NonFiniteTensor, ShapeMismatch, ValidationError


class Param:
    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)

    def __repr__(self):
        return f"Param({self.name}, shape={self.value.shape})"


class Layer:
    def params(self) -> list[Param]:
        return []

    def forward(self, x, train: bool = False):
        raise NotImplementedError

    def backward(self, g):
        raise NotImplementedError

    def zero_grad(self):
        for p in self.params():
            p.grad[...] = 0

    def __call__(self, x, train: bool = False):
        return self.forward(x, train)


def _he(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


def conv_forward(x, W, b, dil_f: int, dil_t: int):
    """Same-size zero-padded convolution.

    ``W`` has shape (C_out, C_in, kF, kT); taps are spaced ``dil_f`` rows
    and ``dil_t`` columns apart.  Returns (output, padded input).
    """
    B, C, F, T = x.shape
    O, Ci, kF, kT = W.shape
    if Ci != C:
        raise ShapeMismatch(f"conv expects {Ci} input channels, got {C}")
    pf, pt = dil_f * (kF - 1) // 2, dil_t * (kT - 1) // 2
    xpad = np.pad(x, ((0, 0), (0, 0), (pf, pf), (pt, pt))) if pf or pt else x
    # contiguous per-tap weights; strided operands fall off the BLAS path
    taps = np.ascontiguousarray(W.transpose(2, 3, 0, 1))
    out = np.zeros((B, O, F * T), dtype=x.dtype)
    for i in range(kF):
        for j in range(kT):
            xs = xpad[:, :, i * dil_f:i * dil_f + F, j * dil_t:j * dil_t + T].reshape(B, C, F * T)
            out += np.matmul(taps[i, j], xs)
    out += b[None, :, None]
    return out.reshape(B, O, F, T), xpad


def conv_backward(g, xpad, W, dil_f: int, dil_t: int, x_shape):
    B, C, F, T = x_shape
    O, _, kF, kT = W.shape
    pf, pt = dil_f * (kF - 1) // 2, dil_t * (kT - 1) // 2
    g2 = np.ascontiguousarray(g.reshape(B, O, F * T))
    taps_t = np.ascontiguousarray(W.transpose(2, 3, 1, 0))
    dW = np.zeros_like(W)
    dxpad = np.zeros_like(xpad)
    for i in range(kF):
        for j in range(kT):
            sl = (slice(None), slice(None), slice(i * dil_f, i * dil_f + F), slice(j * dil_t, j * dil_t + T))
            xs = xpad[sl].reshape(B, C, F * T)
            dW[:, :, i, j] = np.matmul(g2, xs.transpose(0, 2, 1)).sum(axis=0)
            dxpad[sl] += np.matmul(taps_t[i, j], g2).reshape(B, C, F, T)
    db = g2.sum(axis=(0, 2))
    dx = dxpad[:, :, pf:pf + F, pt:pt + T]
    return dx, dW, db


class ConvAxis(Layer):
    """Dilated 1D convolution along F or T, weights shared across the other axis."""

    def __init__(self, c_in: int, c_out: int, kernel: int, dilation: int = 1, axis: str = "F",
                 rng=None, dtype=np.float64, name: str = "conv_axis"):
        if kernel % 2 == 0:
            raise ValidationError(f"kernel must be odd, got {kernel}")
        axis = axis.upper()
        if axis not in ("F", "T"):
            raise ValidationError(f"axis must be 'F' or 'T', got {axis!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.axis, self.kernel, self.dilation = axis, kernel, dilation
        self.w = Param(f"{name}.w", _he(rng, (c_out, c_in, kernel), c_in * kernel, dtype))
        self.b = Param(f"{name}.b", np.zeros(c_out, dtype=dtype))

    def params(self):
        return [self.w, self.b]

    def _W4(self, w):
        return w[:, :, :, None] if self.axis == "F" else w[:, :, None, :]

    def _dil(self):
        return (self.dilation, 1) if self.axis == "F" else (1, self.dilation)

    def forward(self, x, train=False):
        self._shape = x.shape
        out, self._xpad = conv_forward(x, self._W4(self.w.value), self.b.value, *self._dil())
        return out

    def backward(self, g):
        dx, dW, db = conv_backward(g, self._xpad, self._W4(self.w.value), *self._dil(), self._shape)
        self.w.grad += dW[:, :, :, 0] if self.axis == "F" else dW[:, :, 0, :]
        self.b.grad += db
        return dx


class Conv2d(Layer):
    def __init__(self, c_in: int, c_out: int, kernel: int, rng=None, dtype=np.float64,
                 name: str = "conv2d"):
        if kernel % 2 == 0:
            raise ValidationError(f"kernel must be odd, got {kernel}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.kernel = kernel
        self.w = Param(f"{name}.w", _he(rng, (c_out, c_in, kernel, kernel), c_in * kernel * kernel, dtype))
        self.b = Param(f"{name}.b", np.zeros(c_out, dtype=dtype))

    def params(self):
        return [self.w, self.b]

    def forward(self, x, train=False):
        self._shape = x.shape
        out, self._xpad = conv_forward(x, self.w.value, self.b.value, 1, 1)
        return out

    def backward(self, g):
        dx, dW, db = conv_backward(g, self._xpad, self.w.value, 1, 1, self._shape)
        self.w.grad += dW
        self.b.grad += db
        return dx


class MaxPool2x2(Layer):
    """2x2 window, stride 2; a trailing odd row/column is dropped."""

    def forward(self, x, train=False):
        B, C, F, T = x.shape
        F2, T2 = F // 2, T // 2
        blocks = x[:, :, :F2 * 2, :T2 * 2].reshape(B, C, F2, 2, T2, 2)
        blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(B, C, F2, T2, 4)
        self._arg = blocks.argmax(axis=-1)
        self._shape = x.shape
        return np.take_along_axis(blocks, self._arg[..., None], axis=-1)[..., 0]

    def backward(self, g):
        B, C, F, T = self._shape
        F2, T2 = F // 2, T // 2
        blocks = np.zeros((B, C, F2, T2, 4), dtype=g.dtype)
        np.put_along_axis(blocks, self._arg[..., None], g[..., None], axis=-1)
        dx = np.zeros(self._shape, dtype=g.dtype)
        dx[:, :, :F2 * 2, :T2 * 2] = (
            blocks.reshape(B, C, F2, T2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, F2 * 2, T2 * 2)
        )
        return dx


class ReLU(Layer):
    def forward(self, x, train=False):
        self._mask = x > 0
        return x * self._mask

    def backward(self, g):
        return g * self._mask


class Sigmoid(Layer):
    def forward(self, x, train=False):
        self._y = sigmoid(x)
        return self._y

    def backward(self, g):
        return g * self._y * (1 - self._y)


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class GlobalAvgPool(Layer):
    """(B, C, ...) -> (B, C) mean over every axis after the channels."""

    def forward(self, x, train=False):
        self._shape = x.shape
        if x.ndim == 2:
            return x
        return x.reshape(x.shape[0], x.shape[1], -1).mean(axis=2)

    def backward(self, g):
        if len(self._shape) == 2:
            return g
        n = int(np.prod(self._shape[2:]))
        return np.broadcast_to((g / n).reshape(g.shape + (1,) * (len(self._shape) - 2)), self._shape).copy()


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng=None, dtype=np.float64, name: str = "dense",
                 gain: float = 2.0):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.w = Param(f"{name}.w", (rng.standard_normal((n_out, n_in)) * np.sqrt(gain / n_in)).astype(dtype))
        self.b = Param(f"{name}.b", np.zeros(n_out, dtype=dtype))

    def params(self):
        return [self.w, self.b]

    def forward(self, x, train=False):
        if x.shape[-1] != self.w.value.shape[1]:
            raise ShapeMismatch(f"dense expects {self.w.value.shape[1]} inputs, got {x.shape[-1]}")
        self._x = x
        return x @ self.w.value.T + self.b.value

    def backward(self, g):
        self.w.grad += g.T @ self._x
        self.b.grad += g.sum(axis=0)
        return g @ self.w.value


class SEBlock(Layer):
    """Squeeze (global mean) -> dense -> ReLU -> dense -> sigmoid gates per channel."""

    def __init__(self, channels: int, reduction: int = 4, rng=None, dtype=np.float64, name: str = "se"):
        rng = rng if rng is not None else np.random.default_rng(0)
        hidden = max(1, channels // reduction)
        self.squeeze = GlobalAvgPool()
        self.fc1 = Dense(channels, hidden, rng, dtype, f"{name}.fc1")
        self.relu = ReLU()
        self.fc2 = Dense(hidden, channels, rng, dtype, f"{name}.fc2", gain=1.0)
        self.gate = Sigmoid()

    def params(self):
        return self.fc1.params() + self.fc2.params()

    def gates(self, x):
        """Channel gates for ``x`` without touching the backward caches."""
        s = x.reshape(x.shape[0], x.shape[1], -1).mean(axis=2)
        h = np.maximum(s @ self.fc1.w.value.T + self.fc1.b.value, 0)
        return sigmoid(h @ self.fc2.w.value.T + self.fc2.b.value)

    def forward(self, x, train=False):
        self._x = x
        s = self.gate.forward(self.fc2.forward(self.relu.forward(self.fc1.forward(self.squeeze.forward(x)))))
        self._g = s.reshape(s.shape + (1,) * (x.ndim - 2))
        return x * self._g

    def backward(self, g):
        dx_direct = g * self._g
        dgate = (g * self._x).reshape(g.shape[0], g.shape[1], -1).sum(axis=2)
        d = self.fc1.backward(self.relu.backward(self.fc2.backward(self.gate.backward(dgate))))
        return dx_direct + self.squeeze.backward(d)


class Sequential(Layer):
    def __init__(self, layers, check_finite: bool = True):
        self.layers = list(layers)
        self.check_finite = check_finite

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train)
            if self.check_finite and not np.isfinite(x).all():
                raise NonFiniteTensor(f"non-finite activation after {type(layer).__name__}")
        return x

    def backward(self, g):
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g


class Residual(Layer):
    """x + f(x), with an optional projection on the skip path."""

    def __init__(self, inner: Layer, projection: Layer | None = None):
        self.inner = inner
        self.projection = projection

    def params(self):
        return self.inner.params() + (self.projection.params() if self.projection else [])

    def forward(self, x, train=False):
        fx = self.inner.forward(x, train)
        skip = self.projection.forward(x, train) if self.projection else x
        if fx.shape != skip.shape:
            raise ShapeMismatch(f"residual branch {fx.shape} vs skip {skip.shape}")
        return skip + fx

    def backward(self, g):
        dx = self.inner.backward(g)
        return dx + (self.projection.backward(g) if self.projection else g)
