"""A small manually-differentiated network: conv / maxpool / relu / affine
layers with a cross-entropy head.

Backprop uses fixed selections at the kinks so the computed gradient is a
deterministic measurable choice: the relu derivative is 0 at exactly 0, and
max pooling routes the gradient to the first maximizing position of each
window in row-major order.  Parameters live in one flat vector, packed layer
by layer with one contiguous group per filter or neuron (weights then bias),
which feeds the group partition directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Conv2d",
    "MaxPool2d",
    "ReLU",
    "Flatten",
    "Linear",
    "TinyNet",
    "cross_entropy",
    "maxpool_backward_window",
]


def cross_entropy(logits: np.ndarray, target: int) -> tuple[float, np.ndarray]:
    """Loss and gradient w.r.t. logits; rows of the softmax Jacobian sum to 0
    so the returned gradient always sums to 0."""
    z = np.asarray(logits, dtype=float)
    m = float(np.max(z))
    ez = np.exp(z - m)
    sz = float(np.sum(ez))
    loss = m + np.log(sz) - float(z[target])
    grad = ez / sz
    grad[target] -= 1.0
    return float(loss), grad


class Conv2d:
    """Direct-correlation convolution, stride 1, no padding."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int):
        if in_ch < 1 or out_ch < 1 or kernel < 1:
            raise ValueError("conv dimensions must be positive")
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.kernel = kernel
        self._cols_idx = None

    @property
    def group_dims(self) -> list[int]:
        return [self.in_ch * self.kernel * self.kernel + 1] * self.out_ch

    @property
    def num_params(self) -> int:
        return sum(self.group_dims)

    def out_shape(self, shape):
        c, h, w = shape
        if c != self.in_ch:
            raise ValueError(f"conv expects {self.in_ch} channels, got {c}")
        k = self.kernel
        if h < k or w < k:
            raise ValueError(f"input {h}x{w} smaller than kernel {k}")
        return (self.out_ch, h - k + 1, w - k + 1)

    def _indices(self, shape):
        if self._cols_idx is None or self._cols_idx[0] != shape:
            c, h, w = shape
            k = self.kernel
            oh, ow = h - k + 1, w - k + 1
            idx = np.empty((c * k * k, oh * ow), dtype=np.intp)
            flat = np.arange(c * h * w).reshape(c, h, w)
            row = 0
            for ci in range(c):
                for di in range(k):
                    for dj in range(k):
                        idx[row] = flat[ci, di : di + oh, dj : dj + ow].reshape(-1)
                        row += 1
            self._cols_idx = (shape, idx)
        return self._cols_idx[1]

    def _unpack(self, theta):
        gsize = self.in_ch * self.kernel * self.kernel + 1
        mat = theta.reshape(self.out_ch, gsize)
        return mat[:, :-1], mat[:, -1]

    def forward(self, theta, x):
        W, b = self._unpack(theta)
        idx = self._indices(x.shape)
        cols = x.reshape(-1)[idx]
        out = W @ cols + b[:, None]
        oh, ow = self.out_shape(x.shape)[1:]
        return out.reshape(self.out_ch, oh, ow), (x.shape, cols)

    def backward(self, theta, cache, grad_out):
        shape, cols = cache
        W, _ = self._unpack(theta)
        gmat = grad_out.reshape(self.out_ch, -1)
        gW = gmat @ cols.T
        gb = gmat.sum(axis=1)
        gtheta = np.concatenate([gW, gb[:, None]], axis=1).reshape(-1)
        idx = self._indices(shape)
        gx = np.zeros(int(np.prod(shape)))
        np.add.at(gx, idx.reshape(-1), (W.T @ gmat).reshape(-1))
        return gtheta, gx.reshape(shape)


class MaxPool2d:
    """Window max with stride equal to the window size; the gradient goes to
    the first maximizing entry of each window in row-major order."""

    def __init__(self, size: int = 2):
        if size < 1:
            raise ValueError("pool size must be positive")
        self.size = size

    group_dims: list[int] = []
    num_params = 0

    def out_shape(self, shape):
        c, h, w = shape
        s = self.size
        if h % s or w % s:
            raise ValueError(f"input {h}x{w} not divisible by pool size {s}")
        return (c, h // s, w // s)

    def forward(self, theta, x):
        c, h, w = x.shape
        s = self.size
        oh, ow = h // s, w // s
        # Windows laid out row-major so argmax picks the first maximizer.
        win = x.reshape(c, oh, s, ow, s).transpose(0, 1, 3, 2, 4).reshape(c, oh, ow, s * s)
        arg = win.argmax(axis=-1)
        out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
        return out, (x.shape, arg)

    def backward(self, theta, cache, grad_out):
        shape, arg = cache
        c, h, w = shape
        s = self.size
        oh, ow = h // s, w // s
        gwin = np.zeros((c, oh, ow, s * s))
        np.put_along_axis(gwin, arg[..., None], grad_out[..., None], axis=-1)
        gx = gwin.reshape(c, oh, ow, s, s).transpose(0, 1, 3, 2, 4).reshape(c, h, w)
        return np.zeros(0), gx


def maxpool_backward_window(window: np.ndarray) -> np.ndarray:
    """Gradient of the max of one window: 1 at the first maximizing (row,
    col) in row-major order, 0 elsewhere.  Exposed for direct testing."""
    w = np.asarray(window, dtype=float)
    g = np.zeros_like(w)
    g.flat[int(np.argmax(w))] = 1.0
    return g


class ReLU:
    group_dims: list[int] = []
    num_params = 0

    def out_shape(self, shape):
        return shape

    def forward(self, theta, x):
        mask = x > 0  # derivative is 0 at exactly 0
        return np.where(mask, x, 0.0), mask

    def backward(self, theta, cache, grad_out):
        return np.zeros(0), np.where(cache, grad_out, 0.0)


class Flatten:
    group_dims: list[int] = []
    num_params = 0

    def out_shape(self, shape):
        if isinstance(shape, tuple):
            return (int(np.prod(shape)),)
        return shape

    def forward(self, theta, x):
        return x.reshape(-1), x.shape

    def backward(self, theta, cache, grad_out):
        return np.zeros(0), grad_out.reshape(cache)


class Linear:
    def __init__(self, in_features: int, out_features: int):
        if in_features < 1 or out_features < 1:
            raise ValueError("linear dimensions must be positive")
        self.in_features = in_features
        self.out_features = out_features

    @property
    def group_dims(self) -> list[int]:
        return [self.in_features + 1] * self.out_features

    @property
    def num_params(self) -> int:
        return sum(self.group_dims)

    def out_shape(self, shape):
        (f,) = shape
        if f != self.in_features:
            raise ValueError(f"linear expects {self.in_features} inputs, got {f}")
        return (self.out_features,)

    def _unpack(self, theta):
        mat = theta.reshape(self.out_features, self.in_features + 1)
        return mat[:, :-1], mat[:, -1]

    def forward(self, theta, x):
        W, b = self._unpack(theta)
        return W @ x + b, x

    def backward(self, theta, cache, grad_out):
        W, _ = self._unpack(theta)
        gW = np.outer(grad_out, cache)
        gtheta = np.concatenate([gW, grad_out[:, None]], axis=1).reshape(-1)
        return gtheta, W.T @ grad_out


class TinyNet:
    """A layer stack ending in a cross-entropy head over ``classes`` logits."""

    def __init__(self, layers, input_shape, classes: int):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.classes = int(classes)
        shape = self.input_shape
        self._param_slices = []
        self.group_dims: list[int] = []
        self.layer_blocks: list[tuple[int, int]] = []
        offset = 0
        for layer in self.layers:
            n0 = len(self.group_dims)
            self.group_dims.extend(layer.group_dims)
            self._param_slices.append(slice(offset, offset + layer.num_params))
            offset += layer.num_params
            if layer.num_params:
                self.layer_blocks.append((n0, len(self.group_dims)))
            shape = layer.out_shape(shape)
        if shape != (self.classes,):
            raise ValueError(f"network output shape {shape} does not match {self.classes} classes")
        self.d = offset

    def _check(self, w, x):
        w = np.asarray(w, dtype=float)
        if w.shape != (self.d,):
            raise ValueError(f"parameter vector has shape {w.shape}, expected ({self.d},)")
        x = np.asarray(x, dtype=float)
        if x.shape != self.input_shape:
            raise ValueError(f"input has shape {x.shape}, expected {self.input_shape}")
        return w, x

    def forward(self, w, x):
        """Logits plus per-layer caches for the backward pass."""
        w, x = self._check(w, x)
        caches = []
        out = x
        for layer, sl in zip(self.layers, self._param_slices):
            out, cache = layer.forward(w[sl], out)
            caches.append(cache)
        return out, caches

    def loss(self, w, x, target: int) -> float:
        logits, _ = self.forward(w, x)
        return cross_entropy(logits, target)[0]

    def loss_and_logits(self, w, x, target: int):
        logits, _ = self.forward(w, x)
        loss, _ = cross_entropy(logits, target)
        return loss, logits

    def bp_gradient(self, w, x, target: int) -> np.ndarray:
        w, x = self._check(w, x)
        logits, caches = self.forward(w, x)
        _, grad = cross_entropy(logits, target)
        gw = np.zeros(self.d)
        for layer, sl, cache in zip(
            reversed(self.layers), reversed(self._param_slices), reversed(caches)
        ):
            gtheta, grad = layer.backward(w[sl], cache, grad)
            if layer.num_params:
                gw[sl] = gtheta
        return gw

    def predict(self, w, x) -> int:
        logits, _ = self.forward(w, x)
        return int(np.argmax(logits))


@dataclass(frozen=True)
class BlobNetSpec:
    """Default desk-scale architecture: one conv, one pool, two affine layers."""

    side: int = 6
    filters: int = 4
    kernel: int = 3
    hidden: int = 12
    classes: int = 3


def build_blob_net(spec: BlobNetSpec = BlobNetSpec()) -> TinyNet:
    conv_out = spec.side - spec.kernel + 1
    if conv_out % 2:
        raise ValueError("conv output side must be even for 2x2 pooling")
    flat = spec.filters * (conv_out // 2) ** 2
    layers = [
        Conv2d(1, spec.filters, spec.kernel),
        ReLU(),
        MaxPool2d(2),
        Flatten(),
        Linear(flat, spec.hidden),
        ReLU(),
        Linear(spec.hidden, spec.classes),
    ]
    return TinyNet(layers, input_shape=(1, spec.side, spec.side), classes=spec.classes)
