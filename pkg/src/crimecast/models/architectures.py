"""SFTT, TFTS and ParB networks assembled from nncore layers.

All three take a batch of input windows ``(B, T, p, p, C)`` of raw daily
counts, squash them with ``log1p`` and produce two parallel outputs: hotspot
probabilities and normalised expected counts, each of shape ``(B, p, p)``
(``(B, p, p, K)`` for the multi-label variant, with ``K`` the class count and
flat head index ``cell * K + k``).
"""

import numpy as np

from ..nncore import LSTM, Dense, Flatten, Layer, Sequential, ShapeError, TimeDistributed
from .bodies import body_output_width, build_body
from .config import ModelConfig


class LSTMStack(Sequential):
    def __init__(self, input_size, widths, last_sequences, rng, name="lstmstack"):
        layers, n = [], input_size
        for i, m in enumerate(widths):
            seq = last_sequences or i < len(widths) - 1
            layers.append(LSTM(n, m, return_sequences=seq, rng=rng, name=f"lstm{i}"))
            n = m
        super().__init__(layers, name=name)
        self.out_features = n


class PerCellLSTM(Layer):
    """One LSTM stack shared by every cell: ``(B, T, p, p, C) -> (B, p, p, w)``."""

    def __init__(self, channels, widths, rng, name="percell"):
        super().__init__(name)
        self.stack = LSTMStack(channels, widths, False, rng)
        self.out_features = self.stack.out_features

    def children(self):
        return [self.stack]

    def forward(self, x, training=False):
        b, t, p, q, c = x.shape
        seq = x.transpose(0, 2, 3, 1, 4).reshape(b * p * q, t, c)
        h = self.stack.forward(seq, training)
        self._cache = x.shape
        return h.reshape(b, p, q, -1)

    def backward(self, grad):
        b, t, p, q, c = self._need_cache()
        g = self.stack.backward(grad.reshape(b * p * q, -1))
        return g.reshape(b, p, q, t, c).transpose(0, 3, 1, 2, 4)


class TemporalMean(Layer):
    def forward(self, x, training=False):
        self._cache = x.shape
        return x.mean(axis=1)

    def backward(self, grad):
        shape = self._need_cache()
        return np.broadcast_to(grad[:, None] / shape[1], shape).copy()


class ParallelBranches(Layer):
    """Spatial branch (per-day body, time-averaged) concatenated with the
    flattened per-cell temporal branch."""

    def __init__(self, spatial, temporal, name="parallel"):
        super().__init__(name)
        self.spatial = spatial
        self.temporal = temporal

    def children(self):
        return [self.spatial, self.temporal]

    def forward(self, x, training=False):
        a = self.spatial.forward(x, training)
        b = self.temporal.forward(x, training)
        self._cache = a.shape[1]
        return np.concatenate([a, b], axis=1)

    def backward(self, grad):
        split = self._need_cache()
        return self.spatial.backward(grad[:, :split]) + self.temporal.backward(grad[:, split:])


class Model:
    """Encoder plus two parallel dense heads; the unit that is trained and checkpointed."""

    def __init__(self, config, encoder, feature_width, rng):
        self.config = config
        self.encoder = encoder
        self.feature_width = feature_width
        k = config.n_classes
        outputs = config.p * config.p * k
        self.hotspot_head = Dense(feature_width, outputs, "sigmoid", rng=rng, name="hotspot")
        self.count_head = Dense(feature_width, outputs, "softplus", rng=rng, name="count")
        self.count_scale = 1.0
        self.history = []

    def layers(self):
        return [self.encoder, self.hotspot_head, self.count_head]

    def _out_shape(self, b):
        p = self.config.p
        return (b, p, p) if not self.config.multi_label else (b, p, p, self.config.n_classes)

    def check_input(self, x):
        c = self.config
        want = (c.input_days, c.p, c.p, c.channels)
        if x.ndim != 5 or x.shape[1:] != want:
            raise ShapeError(f"model expects (batch,) + {want}, got {x.shape}")

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=float)
        self.check_input(x)
        feats = self.encoder.forward(np.log1p(x), training)
        b = x.shape[0]
        prob = self.hotspot_head.forward(feats, training).reshape(self._out_shape(b))
        count = self.count_head.forward(feats, training).reshape(self._out_shape(b))
        return prob, count

    def backward(self, grad_prob, grad_count):
        b = grad_prob.shape[0]
        g = self.hotspot_head.backward(grad_prob.reshape(b, -1))
        g = g + self.count_head.backward(grad_count.reshape(b, -1))
        return self.encoder.backward(g)

    def named_parameters(self):
        for layer in self.layers():
            yield from layer.named_parameters()

    def named_buffers(self):
        for layer in self.layers():
            yield from layer.named_buffers()

    def zero_grad(self):
        for layer in self.layers():
            layer.zero_grad()

    def num_parameters(self):
        return sum(p.size for _, p, _ in self.named_parameters())


def _rngs(config):
    seeds = np.random.SeedSequence(config.seed).spawn(2)
    return np.random.default_rng(seeds[0]), np.random.default_rng(seeds[1])


def build_sftt(config: ModelConfig) -> Model:
    rng, drop_rng = _rngs(config)
    body = build_body(config.body, config.channels, config, rng, drop_rng)
    width = body_output_width(body, config.p, config.channels)
    lstm = LSTMStack(width, config.resolved_lstm_head, False, rng)
    encoder = Sequential([TimeDistributed(body, name="perday"), lstm], name="sftt")
    return Model(config, encoder, lstm.out_features, rng)


def build_tfts(config: ModelConfig) -> Model:
    rng, drop_rng = _rngs(config)
    temporal = PerCellLSTM(config.channels, config.resolved_lstm_head, rng)
    body = build_body(config.body, temporal.out_features, config, rng, drop_rng)
    width = body_output_width(body, config.p, temporal.out_features)
    encoder = Sequential([temporal, body], name="tfts")
    return Model(config, encoder, width, rng)


def build_parb(config: ModelConfig) -> Model:
    rng, drop_rng = _rngs(config)
    body = build_body(config.body, config.channels, config, rng, drop_rng)
    spatial_width = body_output_width(body, config.p, config.channels)
    spatial = Sequential([TimeDistributed(body, name="perday"), TemporalMean(name="timemean")], name="spatial")
    percell = PerCellLSTM(config.channels, config.resolved_lstm_head, rng)
    temporal = Sequential([percell, Flatten(name="flatten")], name="temporal")
    width = spatial_width + config.p * config.p * percell.out_features
    encoder = ParallelBranches(spatial, temporal, name="parb")
    return Model(config, encoder, width, rng)


BUILDERS = {"sftt": build_sftt, "tfts": build_tfts, "parb": build_parb}


def build_model(config: ModelConfig) -> Model:
    return BUILDERS[config.architecture](config)
