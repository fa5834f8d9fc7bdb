"""Stateless numerical kernels shared by the layer classes.

All image tensors are channels-last: ``(N, H, W, C)``. The convolution is
computed as a sum over kernel offsets, each offset being one matrix product
of the shifted input window with the ``(C, D)`` kernel slice.
"""

import numpy as np

from .errors import ShapeError

PADDINGS = ("same", "valid")


def _as_batch(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 3:
        return x[None], True
    if x.ndim != 4:
        raise ShapeError(f"expected an (N, H, W, C) or (H, W, C) tensor, got shape {x.shape}")
    return x, False


def _pad_amounts(k1, k2, padding):
    if padding == "valid":
        return 0, 0
    if padding == "same":
        if k1 % 2 == 0 or k2 % 2 == 0:
            raise ShapeError(f"same padding needs odd kernel extents, got {k1}x{k2}")
        return k1 // 2, k2 // 2
    raise ValueError(f"unknown padding {padding!r}; expected one of {PADDINGS}")


def pad_input(x, kernels, padding):
    k1, k2 = kernels.shape[:2]
    ph, pw = _pad_amounts(k1, k2, padding)
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)))


def conv2d_forward(x, kernels, bias, padding="same"):
    """Multi-channel 2-D convolution (cross-correlation) plus per-filter bias.

    ``kernels`` has shape ``(k1, k2, c, d)`` and ``bias`` shape ``(d,)``.
    Accepts a single ``(H, W, C)`` map or an ``(N, H, W, C)`` batch and returns
    the same rank.
    """
    x, squeeze = _as_batch(x)
    kernels = np.asarray(kernels, dtype=float)
    k1, k2, c, d = kernels.shape
    if x.shape[-1] != c:
        raise ShapeError(
            f"input has {x.shape[-1]} channels but kernels expect {c} (kernel shape {kernels.shape})"
        )
    xp = pad_input(x, kernels, padding)
    ho = xp.shape[1] - k1 + 1
    wo = xp.shape[2] - k2 + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"kernel {k1}x{k2} larger than padded input {xp.shape[1:3]}")
    out = np.zeros((x.shape[0], ho, wo, d))
    for m in range(k1):
        for n in range(k2):
            out += xp[:, m:m + ho, n:n + wo, :] @ kernels[m, n]
    out += bias
    return out[0] if squeeze else out


def conv2d_backward(x, kernels, grad_out, padding="same"):
    """Gradients of :func:`conv2d_forward` for a batched input.

    Returns ``(grad_input, grad_kernels, grad_bias)``.
    """
    k1, k2, c, d = kernels.shape
    xp = pad_input(x, kernels, padding)
    ho, wo = grad_out.shape[1:3]
    grad_k = np.empty_like(kernels)
    grad_xp = np.zeros_like(xp)
    flat_g = grad_out.reshape(-1, d)
    for m in range(k1):
        for n in range(k2):
            window = xp[:, m:m + ho, n:n + wo, :]
            grad_k[m, n] = np.tensordot(window, grad_out, axes=([0, 1, 2], [0, 1, 2]))
            grad_xp[:, m:m + ho, n:n + wo, :] += grad_out @ kernels[m, n].T
    grad_b = flat_g.sum(axis=0)
    ph, pw = _pad_amounts(k1, k2, padding)
    h, w = x.shape[1:3]
    grad_x = grad_xp[:, ph:ph + h, pw:pw + w, :]
    return grad_x, grad_k, grad_b


def pool2d_forward(x, kind="max"):
    """2x2 window, stride 2. Odd trailing rows/columns are dropped."""
    x, squeeze = _as_batch(x)
    n, h, w, c = x.shape
    if h < 2 or w < 2:
        raise ShapeError(f"2x2 pooling window larger than input extents {h}x{w}")
    ho, wo = h // 2, w // 2
    win = x[:, :2 * ho, :2 * wo, :].reshape(n, ho, 2, wo, 2, c)
    if kind == "max":
        out = win.max(axis=(2, 4))
    elif kind == "avg":
        out = win.mean(axis=(2, 4))
    else:
        raise ValueError(f"unknown pooling kind {kind!r}")
    return out[0] if squeeze else out


def pool2d_backward(x, grad_out, kind="max"):
    n, h, w, c = x.shape
    ho, wo = h // 2, w // 2
    grad_x = np.zeros_like(x)
    if kind == "avg":
        g = np.repeat(np.repeat(grad_out * 0.25, 2, axis=1), 2, axis=2)
        grad_x[:, :2 * ho, :2 * wo, :] = g
        return grad_x
    # max: route to the first argmax of each window
    win = x[:, :2 * ho, :2 * wo, :].reshape(n, ho, 2, wo, 2, c)
    win = win.transpose(0, 1, 3, 5, 2, 4).reshape(n, ho, wo, c, 4)
    idx = win.argmax(axis=-1)
    onehot = np.zeros_like(win)
    np.put_along_axis(onehot, idx[..., None], 1.0, axis=-1)
    routed = onehot * grad_out[..., None]
    routed = routed.reshape(n, ho, wo, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    grad_x[:, :2 * ho, :2 * wo, :] = routed.reshape(n, 2 * ho, 2 * wo, c)
    return grad_x


def sigmoid(z):
    # split by sign to avoid overflow in exp
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(z):
    return np.logaddexp(0.0, z)


ACTIVATIONS = ("relu", "sigmoid", "tanh", "linear", "softplus")


def activate(z, kind):
    if kind == "linear":
        return z
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        return sigmoid(z)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "softplus":
        return softplus(z)
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activation_grad(z, a, kind):
    """Derivative of the activation at pre-activation ``z`` (output ``a``)."""
    if kind == "linear":
        return np.ones_like(z)
    if kind == "relu":
        return (z > 0).astype(float)
    if kind == "sigmoid":
        return a * (1.0 - a)
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "softplus":
        return sigmoid(z)
    raise ValueError(f"unknown activation {kind!r}")
