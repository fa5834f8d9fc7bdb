"""LSTM layer with backpropagation through time.

Gate weights are stored stacked in the order input, forget, cell, output:
``w_x`` is ``(4m, n)``, ``w_h`` is ``(4m, m)`` and ``bias`` is ``(4m,)``.
The per-gate matrices (``W_xi``, ``W_hf``, ...) are exposed as views.
"""

import numpy as np

from .errors import ShapeError
from .layers import Layer
from .ops import sigmoid

GATES = ("i", "f", "c", "o")


class LSTM(Layer):
    def __init__(self, input_size, hidden_size, return_sequences=False, forget_bias=1.0, rng=None, name="lstm"):
        super().__init__(name)
        rng = rng if rng is not None else np.random.default_rng(0)
        m, n = hidden_size, input_size
        self.input_size = n
        self.hidden_size = m
        self.return_sequences = return_sequences
        lim_x = np.sqrt(3.0 / n)
        lim_h = np.sqrt(3.0 / m)
        self.params["w_x"] = rng.uniform(-lim_x, lim_x, size=(4 * m, n))
        self.params["w_h"] = rng.uniform(-lim_h, lim_h, size=(4 * m, m))
        bias = np.zeros(4 * m)
        bias[m:2 * m] = forget_bias
        self.params["bias"] = bias
        self.grads = {key: np.zeros_like(v) for key, v in self.params.items()}

    def gate(self, kind, gate):
        """View of one gate's block: ``kind`` in {"x", "h", "b"}, ``gate`` in GATES."""
        m = self.hidden_size
        k = GATES.index(gate)
        key = {"x": "w_x", "h": "w_h", "b": "bias"}[kind]
        return self.params[key][k * m:(k + 1) * m]

    def step(self, x, h_prev, c_prev):
        """One recursion of the cell for a batch ``(B, n)``; returns ``(h, c, gates)``."""
        m = self.hidden_size
        if x.shape[-1] != self.input_size or h_prev.shape[-1] != m or c_prev.shape[-1] != m:
            raise ShapeError(
                f"{self.name}: widths x={x.shape[-1]}, h={h_prev.shape[-1]}, c={c_prev.shape[-1]} "
                f"do not match layer (n={self.input_size}, m={m})"
            )
        z = x @ self.params["w_x"].T + h_prev @ self.params["w_h"].T + self.params["bias"]
        return self._cell(z, c_prev)

    def _cell(self, z, c_prev):
        m = self.hidden_size
        i = sigmoid(z[..., :m])
        f = sigmoid(z[..., m:2 * m])
        g = np.tanh(z[..., 2 * m:3 * m])
        o = sigmoid(z[..., 3 * m:])
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        return h, c, (i, f, g, o, tc)

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=float)
        if x.ndim != 3:
            raise ShapeError(f"{self.name}: expected (batch, time, features), got {x.shape}")
        b, t, n = x.shape
        if t == 0:
            raise ShapeError(f"{self.name}: empty sequence")
        if n != self.input_size:
            raise ShapeError(f"{self.name}: input width {n} does not match layer input size {self.input_size}")
        m = self.hidden_size
        zx = x @ self.params["w_x"].T + self.params["bias"]
        w_h_t = self.params["w_h"].T
        h = np.zeros((b, m))
        c = np.zeros((b, m))
        hs = np.empty((b, t, m))
        cs = np.empty((b, t, m))
        gates = np.empty((t, 5, b, m))
        for s in range(t):
            h, c, g = self._cell(zx[:, s] + h @ w_h_t, c)
            hs[:, s] = h
            cs[:, s] = c
            gates[s] = g
        self._cache = (x, hs, cs, gates)
        return hs if self.return_sequences else hs[:, -1]

    def backward(self, grad):
        x, hs, cs, gates = self._need_cache()
        b, t, _ = x.shape
        m = self.hidden_size
        if self.return_sequences:
            dh_seq = grad
        else:
            dh_seq = np.zeros_like(hs)
            dh_seq[:, -1] = grad
        w_h = self.params["w_h"]
        dz = np.empty((b, t, 4 * m))
        dh_next = np.zeros((b, m))
        dc_next = np.zeros((b, m))
        for s in range(t - 1, -1, -1):
            i, f, g, o, tc = gates[s]
            dh = dh_seq[:, s] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            c_prev = cs[:, s - 1] if s > 0 else np.zeros((b, m))
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dz_s = dz[:, s]
            dz_s[:, :m] = di * i * (1.0 - i)
            dz_s[:, m:2 * m] = df * f * (1.0 - f)
            dz_s[:, 2 * m:3 * m] = dg * (1.0 - g * g)
            dz_s[:, 3 * m:] = do * o * (1.0 - o)
            dc_next = dc * f
            dh_next = dz_s @ w_h
        h_prev = np.concatenate([np.zeros((b, 1, m)), hs[:, :-1]], axis=1)
        dz2 = dz.reshape(-1, 4 * m)
        self.grads["w_x"] += dz2.T @ x.reshape(-1, x.shape[-1])
        self.grads["w_h"] += dz2.T @ h_prev.reshape(-1, m)
        self.grads["bias"] += dz2.sum(axis=0)
        return dz @ self.params["w_x"]


def lstm_step(x, h_prev, c_prev, layer):
    """Single-vector convenience wrapper around :meth:`LSTM.step`."""
    h, c, _ = layer.step(np.atleast_2d(x), np.atleast_2d(h_prev), np.atleast_2d(c_prev))
    if np.ndim(x) == 1:
        return h[0], c[0]
    return h, c


def lstm_forward(sequence, layer, return_mode="last"):
    seq = np.asarray(sequence, dtype=float)
    if seq.size == 0:
        raise ShapeError("empty sequence")
    single = seq.ndim == 2
    if single:
        seq = seq[None]
    saved = layer.return_sequences
    layer.return_sequences = return_mode == "all"
    try:
        out = layer.forward(seq)
    finally:
        layer.return_sequences = saved
    return out[0] if single else out
