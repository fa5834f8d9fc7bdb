"""Spatial feature extractors ("bodies") mapping ``(N, p, p, C)`` maps to ``(N, F)`` vectors."""

import numpy as np

from ..nncore import Activation, BatchNorm, Conv2D, Dropout, Flatten, Layer, Pool2D, Sequential
from .config import BODIES, ConfigError


def _post_pool(channels, dropout, batchnorm, rng, tag):
    layers = []
    if batchnorm:
        layers.append(BatchNorm(channels, name=f"bn{tag}"))
    layers.append(Dropout(dropout, rng=rng, name=f"drop{tag}"))
    return layers


def _conv(c_in, c_out, k, rng, name):
    return [Conv2D(c_in, c_out, k, rng=rng, name=name), Activation("relu", name=f"{name}relu")]


def vgg_body(channels, widths, dropout, batchnorm, rng, dropout_rng):
    """Five conv pairs; max-pool + batch-norm + dropout after each of the first three."""
    w1, w2, w3 = widths
    plan = [(w1, 3), (w1, 3), (w2, 3), (w2, 3), (w3, 1)]
    layers, c = [], channels
    for i, (f, k) in enumerate(plan):
        layers += _conv(c, f, k, rng, f"c{i}a") + _conv(f, f, k, rng, f"c{i}b")
        c = f
        if i < 3:
            layers.append(Pool2D("max", name=f"pool{i}"))
            layers += _post_pool(c, dropout, batchnorm, dropout_rng, i)
    layers.append(Flatten())
    return Sequential(layers, name="vgg")


class ResidualBlock(Layer):
    """3x3 -> 1x1 -> 3x3 main path averaged with a parallel 3x3 residual conv,
    then max-pooled (plus batch-norm and dropout)."""

    def __init__(self, c_in, width, dropout, batchnorm, rng, dropout_rng, name="resblock"):
        super().__init__(name)
        quarter = max(1, width // 4)
        self.main = Sequential(
            _conv(c_in, quarter, 3, rng, "m0") + _conv(quarter, quarter, 1, rng, "m1") + _conv(quarter, width, 3, rng, "m2"),
            name="main",
        )
        self.residual = Sequential(_conv(c_in, width, 3, rng, "r0"), name="residual")
        self.tail = Sequential([Pool2D("max")] + _post_pool(width, dropout, batchnorm, dropout_rng, ""), name="tail")
        self.out_channels = width

    def children(self):
        return [self.main, self.residual, self.tail]

    def forward(self, x, training=False):
        self._cache = True
        avg = 0.5 * (self.main.forward(x, training) + self.residual.forward(x, training))
        return self.tail.forward(avg, training)

    def backward(self, grad):
        self._need_cache()
        g = 0.5 * self.tail.backward(grad)
        return self.main.backward(g) + self.residual.backward(g)


class Neck(Layer):
    """Average-pooled identity path concatenated with a pooled two-conv path."""

    def __init__(self, c_in, width, dropout, batchnorm, rng, dropout_rng, name="neck"):
        super().__init__(name)
        self.conv = Sequential(_conv(c_in, width, 3, rng, "n0") + _conv(width, width, 3, rng, "n1")
                               + [Pool2D("avg")], name="convpath")
        self.skip = Pool2D("avg", name="identity")
        self.out_channels = c_in + width
        self.tail = Sequential(_post_pool(self.out_channels, dropout, batchnorm, dropout_rng, ""), name="tail")
        self.c_in = c_in

    def children(self):
        return [self.conv, self.tail]

    def forward(self, x, training=False):
        self._cache = True
        y = np.concatenate([self.skip.forward(x), self.conv.forward(x, training)], axis=-1)
        return self.tail.forward(y, training)

    def backward(self, grad):
        self._need_cache()
        g = self.tail.backward(grad)
        return self.skip.backward(g[..., :self.c_in]) + self.conv.backward(g[..., self.c_in:])


class SequentialBlocks(Layer):
    """Three down-scaling blocks; either only the last output is kept (ResNet)
    or every block output is average-pooled to the last scale and concatenated
    (FastMask / FastResMask)."""

    def __init__(self, blocks, multiscale, name):
        super().__init__(name)
        self.blocks = blocks
        self.multiscale = multiscale
        self.flatten = Flatten()

    def children(self):
        return self.blocks

    def forward(self, x, training=False):
        outs = []
        for block in self.blocks:
            x = block.forward(x, training)
            outs.append(x)
        if not self.multiscale:
            self._cache = (None, None)
            return self.flatten.forward(x)
        pools, pooled, widths = [], [], []
        n = len(self.blocks)
        for i, y in enumerate(outs):
            chain = [Pool2D("avg") for _ in range(n - 1 - i)]
            for layer in chain:
                y = layer.forward(y)
            pools.append(chain)
            pooled.append(y)
            widths.append(y.shape[-1])
        self._cache = (pools, widths)
        return self.flatten.forward(np.concatenate(pooled, axis=-1))

    def backward(self, grad):
        pools, widths = self._need_cache()
        g = self.flatten.backward(grad)
        if pools is None:
            for block in reversed(self.blocks):
                g = block.backward(g)
            return g
        splits = np.split(g, np.cumsum(widths)[:-1], axis=-1)
        branch = []
        for chain, gi in zip(pools, splits):
            for layer in reversed(chain):
                gi = layer.backward(gi)
            branch.append(gi)
        carry = None
        for i in range(len(self.blocks) - 1, -1, -1):
            gi = branch[i] if carry is None else branch[i] + carry
            carry = self.blocks[i].backward(gi)
        return carry


def build_body(kind, channels, config, rng, dropout_rng):
    if kind not in BODIES:
        raise ConfigError(f"unknown body {kind!r}; expected one of {BODIES}")
    widths = config.resolved_body_widths
    if kind == "vgg":
        return vgg_body(channels, widths, config.dropout, config.batchnorm, rng, dropout_rng)
    blocks, c = [], channels
    for i, w in enumerate(widths):
        if kind in ("resnet", "fastresmask"):
            block = ResidualBlock(c, w, config.dropout, config.batchnorm, rng, dropout_rng, name=f"block{i}")
        else:
            block = Neck(c, w, config.dropout, config.batchnorm, rng, dropout_rng, name=f"neck{i}")
        blocks.append(block)
        c = block.out_channels
    return SequentialBlocks(blocks, multiscale=kind != "resnet", name=kind)


def body_output_width(body, p, channels):
    """Flattened feature width, found with a dry forward pass."""
    probe = np.zeros((1, p, p, channels))
    out = body.forward(probe, training=False)
    return out.shape[1]
