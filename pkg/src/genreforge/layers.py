"""Layers with explicit forward and backward passes over numpy arrays.

Every layer caches what its backward pass needs during ``forward`` and
``backward(grad)`` returns the gradient with respect to the layer input while
accumulating parameter gradients into ``Param.grad``. There is no autodiff
graph: composite layers call their children's ``backward`` in reverse order.

Arrays use the ``(batch, channels, time)`` layout for sequence layers and
``(batch, features)`` for dense layers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

__all__ = [
    "Param",
    "Layer",
    "Sequential",
    "Conv1d",
    "ReLU",
    "MaxPool1d",
    "GlobalMaxPool1d",
    "BatchNorm",
    "Dense",
    "Dropout",
    "softmax",
    "softmax_cross_entropy",
    "concat_channels",
    "split_channels",
    "add",
    "he_uniform",
]


@dataclass(eq=False)
class Param:
    """A learnable array and its accumulated gradient.

    ``decay`` marks weights that receive L2 regularization; biases and
    batch-norm scale/shift do not.
    """

    value: np.ndarray
    decay: bool = True
    name: str = ""
    grad: np.ndarray = field(init=False)

    def __post_init__(self):
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad[...] = 0.0


def he_uniform(rng, shape, fan_in, dtype=np.float32):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Base class. Subclasses override forward/backward and list children."""

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def children(self):
        return []

    def own_params(self):
        return []

    def own_buffers(self):
        return []

    def parameters(self):
        """All params in build order: own first, then each child's."""
        out = list(self.own_params())
        for child in self.children():
            out.extend(child.parameters())
        return out

    def buffers(self):
        out = list(self.own_buffers())
        for child in self.children():
            out.extend(child.buffers())
        return out

    def __call__(self, x, training=False):
        return self.forward(x, training)


class Sequential(Layer):
    def __init__(self, *layers):
        self.layers = list(layers)

    def children(self):
        return self.layers

    def forward(self, x, training=False):
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad


class Conv1d(Layer):
    """Same-length 1-d cross-correlation along time.

    ``y[b, o, t] = bias[o] + sum_{c, j} w[o, c, j] * x_pad[b, c, t + j]`` with
    ``floor((k-1)/2)`` zeros on the left and ``ceil((k-1)/2)`` on the right.
    """

    def __init__(self, in_channels, out_channels, kernel_size, rng=None, dtype=np.float32,
                 name="conv", input_grad=True):
        if kernel_size < 1:
            raise ShapeError(f"kernel_size must be >= 1, got {kernel_size}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.k = kernel_size
        self.pad_left = (kernel_size - 1) // 2
        self.pad_right = kernel_size - 1 - self.pad_left
        self.input_grad = input_grad
        fan_in = in_channels * kernel_size
        shape = (out_channels, in_channels, kernel_size)
        if rng is None:
            w = np.zeros(shape, dtype=dtype)
        else:
            w = he_uniform(rng, shape, fan_in, dtype)
        self.weight = Param(w, decay=True, name=f"{name}.weight")
        self.bias = Param(np.zeros(out_channels, dtype=dtype), decay=False, name=f"{name}.bias")
        self._cols = None
        self._t = None

    def own_params(self):
        return [self.weight, self.bias]

    def forward(self, x, training=False):
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise ShapeError(f"conv1d expects (batch, {self.in_channels}, time), got {x.shape}")
        b, c, t = x.shape
        xp = np.pad(x, ((0, 0), (0, 0), (self.pad_left, self.pad_right)))
        # (b, c, t, k) -> (b, t, c, k) -> (b*t, c*k)
        win = np.lib.stride_tricks.sliding_window_view(xp, self.k, axis=2)
        cols = np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(b * t, c * self.k)
        self._cols = cols
        self._t = t
        w2 = self.weight.value.reshape(self.out_channels, -1)
        y = cols @ w2.T + self.bias.value
        return np.ascontiguousarray(y.reshape(b, t, self.out_channels).transpose(0, 2, 1))

    def backward(self, grad):
        b, o, t = grad.shape
        g2 = grad.transpose(0, 2, 1).reshape(b * t, o)
        self.weight.grad += (g2.T @ self._cols).reshape(self.weight.value.shape)
        self.bias.grad += g2.sum(axis=0)
        if not self.input_grad:
            self._cols = None
            return None
        w2 = self.weight.value.reshape(o, -1)
        dcols = (g2 @ w2).reshape(b, t, self.in_channels, self.k)
        dxp = np.zeros((b, self.in_channels, t + self.k - 1), dtype=grad.dtype)
        for j in range(self.k):
            dxp[:, :, j:j + t] += dcols[:, :, :, j].transpose(0, 2, 1)
        self._cols = None
        return dxp[:, :, self.pad_left:self.pad_left + t]


class ReLU(Layer):
    def forward(self, x, training=False):
        self._mask = x > 0
        return np.where(self._mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, grad):
        return np.where(self._mask, grad, 0).astype(grad.dtype, copy=False)


class MaxPool1d(Layer):
    """Non-overlapping max pooling; trailing frames that do not fill a window are dropped.

    The gradient goes to the first maximum of each window.
    """

    def __init__(self, pool):
        if pool < 1:
            raise ShapeError(f"pool must be >= 1, got {pool}")
        self.pool = pool

    def forward(self, x, training=False):
        b, c, t = x.shape
        p = self.pool
        if p > t:
            raise ShapeError(f"pool {p} exceeds time length {t}")
        n = t // p
        self._in_shape = x.shape
        if p == 1:
            return x
        win = x[:, :, :n * p].reshape(b, c, n, p)
        self._arg = win.argmax(axis=3)
        return np.take_along_axis(win, self._arg[..., None], axis=3)[..., 0]

    def backward(self, grad):
        if self.pool == 1:
            return grad
        b, c, t = self._in_shape
        p = self.pool
        n = grad.shape[2]
        dwin = np.zeros((b, c, n, p), dtype=grad.dtype)
        np.put_along_axis(dwin, self._arg[..., None], grad[..., None], axis=3)
        dx = np.zeros(self._in_shape, dtype=grad.dtype)
        dx[:, :, :n * p] = dwin.reshape(b, c, n * p)
        return dx


class GlobalMaxPool1d(Layer):
    """Max over the whole time axis: ``(b, c, t) -> (b, c)``."""

    def forward(self, x, training=False):
        self._in_shape = x.shape
        self._arg = x.argmax(axis=2)
        return np.take_along_axis(x, self._arg[..., None], axis=2)[..., 0]

    def backward(self, grad):
        dx = np.zeros(self._in_shape, dtype=grad.dtype)
        np.put_along_axis(dx, self._arg[..., None], grad[..., None], axis=2)
        return dx


class BatchNorm(Layer):
    """Per-channel batch normalization over batch (and time for 3-d input).

    Running statistics follow ``running = momentum * running + (1 - momentum) * batch``.
    """

    def __init__(self, channels, momentum=0.9, eps=1e-5, dtype=np.float32, name="bn"):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = Param(np.ones(channels, dtype=dtype), decay=False, name=f"{name}.gamma")
        self.beta = Param(np.zeros(channels, dtype=dtype), decay=False, name=f"{name}.beta")
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.name = name

    def own_params(self):
        return [self.gamma, self.beta]

    def own_buffers(self):
        return [self.running_mean, self.running_var]

    def _axes(self, x):
        if x.ndim == 3:
            return (0, 2), (1, -1, 1)
        if x.ndim == 2:
            return (0,), (1, -1)
        raise ShapeError(f"batchnorm expects 2-d or 3-d input, got {x.shape}")

    def forward(self, x, training=False):
        if x.shape[1] != self.channels:
            raise ShapeError(f"batchnorm over {self.channels} channels got shape {x.shape}")
        axes, bshape = self._axes(x)
        if training:
            m = x.size // self.channels
            if m <= 1:
                raise ShapeError("batchnorm in training mode needs more than one value per channel")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean *= self.momentum
            self.running_mean += (1.0 - self.momentum) * mean
            self.running_var *= self.momentum
            self.running_var += (1.0 - self.momentum) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean.reshape(bshape)) * inv_std.reshape(bshape)
        self._cache = (xhat, inv_std, axes, bshape, training)
        return (self.gamma.value.reshape(bshape) * xhat + self.beta.value.reshape(bshape)).astype(
            x.dtype, copy=False)

    def backward(self, grad):
        xhat, inv_std, axes, bshape, training = self._cache
        self.gamma.grad += (grad * xhat).sum(axis=axes)
        self.beta.grad += grad.sum(axis=axes)
        gx = grad * self.gamma.value.reshape(bshape)
        if not training:
            return gx * inv_std.reshape(bshape)
        # dx = inv_std * (g - mean(g) - xhat * mean(g * xhat))
        mg = gx.mean(axis=axes, keepdims=True)
        mgx = (gx * xhat).mean(axis=axes, keepdims=True)
        return (inv_std.reshape(bshape) * (gx - mg - xhat * mgx)).astype(grad.dtype, copy=False)


class Dense(Layer):
    """``y = x @ W.T + bias`` with ``W`` of shape ``(out, in)``."""

    def __init__(self, in_features, out_features, rng=None, dtype=np.float32, name="dense"):
        self.in_features = in_features
        self.out_features = out_features
        shape = (out_features, in_features)
        w = np.zeros(shape, dtype=dtype) if rng is None else he_uniform(rng, shape, in_features, dtype)
        self.weight = Param(w, decay=True, name=f"{name}.weight")
        self.bias = Param(np.zeros(out_features, dtype=dtype), decay=False, name=f"{name}.bias")

    def own_params(self):
        return [self.weight, self.bias]

    def forward(self, x, training=False):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"dense expects (batch, {self.in_features}), got {x.shape}")
        self._x = x
        return x @ self.weight.value.T + self.bias.value

    def backward(self, grad):
        self.weight.grad += grad.T @ self._x
        self.bias.grad += grad.sum(axis=0)
        return grad @ self.weight.value


class Dropout(Layer):
    """Inverted dropout; identity at inference time."""

    def __init__(self, rate, rng=None):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._mask = None

    def forward(self, x, training=False):
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        keep = self.rng.random(x.shape) >= self.rate
        self._mask = keep.astype(x.dtype) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, grad):
        if self._mask is None:
            return grad
        return grad * self._mask


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of ``softmax(logits)`` against integer labels.

    Returns ``(loss, grad_logits)`` where ``grad_logits = (softmax - onehot) / batch``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    b, k = logits.shape
    if labels.shape != (b,):
        raise ShapeError(f"expected {b} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise IndexError(f"labels must lie in [0, {k})")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_p = z - log_norm
    rows = np.arange(b)
    loss = float(-log_p[rows, labels].mean())
    grad = np.exp(log_p)
    grad[rows, labels] -= 1.0
    return loss, (grad / b).astype(logits.dtype, copy=False)


def concat_channels(a, b):
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"cannot concatenate {a.shape} and {b.shape} along channels")
    return np.concatenate([a, b], axis=1)


def split_channels(grad, sizes):
    """Backward of channel concatenation: split ``grad`` into pieces of ``sizes`` channels."""
    if sum(sizes) != grad.shape[1]:
        raise ShapeError(f"split sizes {sizes} do not cover {grad.shape[1]} channels")
    return np.split(grad, np.cumsum(sizes)[:-1], axis=1)


def add(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"cannot add {a.shape} and {b.shape}")
    return a + b
