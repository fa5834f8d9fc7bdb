"""Trainable layers with explicit forward/backward passes.

Every layer keeps whatever it needs from the last ``forward`` call and
consumes it in ``backward``; calling ``backward`` first raises
:class:`StateError`. Parameters live in ``layer.params`` and their gradients
in ``layer.grads`` under the same keys.
"""

import numpy as np

from . import ops
from .errors import ShapeError, StateError


class Layer:
    def __init__(self, name=None):
        self.name = name or type(self).__name__.lower()
        self.params = {}
        self.grads = {}
        self._cache = None

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def __call__(self, x, training=False):
        return self.forward(x, training=training)

    def children(self):
        return []

    def buffers(self):
        """Non-trainable state that must survive a checkpoint round trip."""
        return {}

    def _need_cache(self):
        if self._cache is None:
            raise StateError(f"{self.name}: backward called before forward")
        return self._cache

    def named_parameters(self, prefix=""):
        for key, value in self.params.items():
            yield f"{prefix}{self.name}.{key}", value, self.grads[key]
        for i, child in enumerate(self.children()):
            yield from child.named_parameters(f"{prefix}{self.name}.{i}.")

    def named_buffers(self, prefix=""):
        for key, value in self.buffers().items():
            yield f"{prefix}{self.name}.{key}", value
        for i, child in enumerate(self.children()):
            yield from child.named_buffers(f"{prefix}{self.name}.{i}.")

    def zero_grad(self):
        for g in self.grads.values():
            g[...] = 0.0
        for child in self.children():
            child.zero_grad()

    def num_parameters(self):
        return sum(p.size for _, p, _ in self.named_parameters())


def fan_in_uniform(rng, shape, fan_in):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Conv2D(Layer):
    def __init__(self, in_channels, filters, kernel_size=3, padding="same", rng=None, name="conv"):
        super().__init__(name)
        rng = rng if rng is not None else np.random.default_rng(0)
        k = kernel_size
        if padding == "same" and k % 2 == 0:
            raise ShapeError("same padding needs an odd kernel size")
        self.padding = padding
        self.params["kernels"] = fan_in_uniform(rng, (k, k, in_channels, filters), k * k * in_channels)
        self.params["bias"] = np.zeros(filters)
        self.grads = {key: np.zeros_like(v) for key, v in self.params.items()}

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=float)
        out = ops.conv2d_forward(x, self.params["kernels"], self.params["bias"], self.padding)
        self._cache = (x, out.shape)
        return out

    def backward(self, grad):
        x, out_shape = self._need_cache()
        if grad.shape != out_shape:
            raise ShapeError(f"{self.name}: output gradient shape {grad.shape} does not match forward output {out_shape}")
        squeeze = x.ndim == 3
        if squeeze:
            x, grad = x[None], grad[None]
        gx, gk, gb = ops.conv2d_backward(x, self.params["kernels"], grad, self.padding)
        self.grads["kernels"] += gk
        self.grads["bias"] += gb
        return gx[0] if squeeze else gx


class Pool2D(Layer):
    def __init__(self, kind="max", name=None):
        super().__init__(name or f"{kind}pool")
        self.kind = kind

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=float)
        self._cache = x
        return ops.pool2d_forward(x, self.kind)

    def backward(self, grad):
        x = self._need_cache()
        if x.ndim == 3:
            return ops.pool2d_backward(x[None], grad[None], self.kind)[0]
        return ops.pool2d_backward(x, grad, self.kind)


class Activation(Layer):
    def __init__(self, kind="relu", name=None):
        super().__init__(name or kind)
        self.kind = kind

    def forward(self, x, training=False):
        a = ops.activate(x, self.kind)
        self._cache = (x, a)
        return a

    def backward(self, grad):
        z, a = self._need_cache()
        return grad * ops.activation_grad(z, a, self.kind)


class Dense(Layer):
    """Affine map ``act(W x + b)`` with ``W`` of shape ``(out, in)``."""

    def __init__(self, in_features, out_features, activation="linear", rng=None, name="dense"):
        super().__init__(name)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.activation = activation
        self.params["weights"] = fan_in_uniform(rng, (out_features, in_features), in_features)
        self.params["bias"] = np.zeros(out_features)
        self.grads = {key: np.zeros_like(v) for key, v in self.params.items()}

    @classmethod
    def from_arrays(cls, weights, bias, activation="linear", name="dense"):
        layer = cls(weights.shape[1], weights.shape[0], activation, name=name)
        layer.params["weights"] = np.array(weights, dtype=float)
        layer.params["bias"] = np.array(bias, dtype=float)
        return layer

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=float)
        w = self.params["weights"]
        if x.shape[-1] != w.shape[1]:
            raise ShapeError(f"{self.name}: input width {x.shape[-1]} does not match weight columns {w.shape[1]}")
        z = x @ w.T + self.params["bias"]
        a = ops.activate(z, self.activation)
        self._cache = (x, z, a)
        return a

    def backward(self, grad):
        x, z, a = self._need_cache()
        dz = grad * ops.activation_grad(z, a, self.activation)
        x2 = x.reshape(-1, x.shape[-1])
        dz2 = dz.reshape(-1, dz.shape[-1])
        self.grads["weights"] += dz2.T @ x2
        self.grads["bias"] += dz2.sum(axis=0)
        return dz @ self.params["weights"]


class BatchNorm(Layer):
    """Per-channel normalisation over every axis except the last."""

    def __init__(self, channels, momentum=0.9, eps=1e-5, name="batchnorm"):
        super().__init__(name)
        self.momentum = momentum
        self.eps = eps
        self.params["scale"] = np.ones(channels)
        self.params["shift"] = np.zeros(channels)
        self.grads = {key: np.zeros_like(v) for key, v in self.params.items()}
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.params["scale"].shape[0]:
            raise ShapeError(f"{self.name}: {x.shape[-1]} channels, layer expects {self.params['scale'].shape[0]}")
        axes = tuple(range(x.ndim - 1))
        if training:
            count = x.size // x.shape[-1]
            if count == 0:
                raise ShapeError(f"{self.name}: empty batch")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean[...] = self.momentum * self.running_mean + (1 - self.momentum) * mean
            self.running_var[...] = self.momentum * self.running_var + (1 - self.momentum) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, training, axes)
        return xhat * self.params["scale"] + self.params["shift"]

    def backward(self, grad):
        xhat, inv_std, training, axes = self._need_cache()
        scale = self.params["scale"]
        self.grads["scale"] += (grad * xhat).sum(axis=axes)
        self.grads["shift"] += grad.sum(axis=axes)
        dxhat = grad * scale
        if not training:
            return dxhat * inv_std
        m = xhat.size // xhat.shape[-1]
        return inv_std / m * (m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))


def dropout(x, rate, seed, training=True):
    """Inverted dropout with a mask drawn from ``seed``."""
    out, _ = _dropout(np.asarray(x, dtype=float), rate, np.random.default_rng(seed), training)
    return out


def _dropout(x, rate, rng, training):
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * keep, keep


class Dropout(Layer):
    def __init__(self, rate, rng=None, name="dropout"):
        super().__init__(name)
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def forward(self, x, training=False):
        out, keep = _dropout(np.asarray(x, dtype=float), self.rate, self.rng, training)
        self._cache = (keep,)
        return out

    def backward(self, grad):
        (keep,) = self._need_cache()
        return grad if keep is None else grad * keep


class Flatten(Layer):
    def forward(self, x, training=False):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._need_cache())


class Sequential(Layer):
    def __init__(self, layers, name="seq"):
        super().__init__(name)
        self.layers = list(layers)

    def children(self):
        return self.layers

    def forward(self, x, training=False):
        for layer in self.layers:
            x = layer.forward(x, training=training)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad


class TimeDistributed(Layer):
    """Apply one inner layer, with shared parameters, to every step of ``(B, T, ...)``."""

    def __init__(self, inner, name="timedist"):
        super().__init__(name)
        self.inner = inner

    def children(self):
        return [self.inner]

    def forward(self, x, training=False):
        b, t = x.shape[:2]
        y = self.inner.forward(x.reshape((b * t,) + x.shape[2:]), training=training)
        self._cache = (b, t)
        return y.reshape((b, t) + y.shape[1:])

    def backward(self, grad):
        b, t = self._need_cache()
        g = self.inner.backward(grad.reshape((b * t,) + grad.shape[2:]))
        return g.reshape((b, t) + g.shape[1:])
