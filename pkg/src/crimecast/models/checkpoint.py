"""Flat binary checkpoints.

Layout (little-endian): ``b"CCMD"``, u16 version, then length-prefixed
architecture, body and config-digest strings, an f64 count scale, a u32
entry count and the entries. Each entry is a u16 name length, the UTF-8
name, a u8 rank, u32 dimensions and the float32 values. Parameters and
batch-norm running statistics are both stored.
"""

import io
import struct

import numpy as np

MAGIC = b"CCMD"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _put_str(buf, s):
    data = s.encode("utf-8")
    buf.write(struct.pack("<H", len(data)))
    buf.write(data)


def _get_str(buf):
    (n,) = struct.unpack("<H", buf.read(2))
    return buf.read(n).decode("utf-8")


def _entries(model):
    for name, value, _ in model.named_parameters():
        yield name, value
    yield from model.named_buffers()


def to_bytes(model):
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<H", VERSION))
    cfg = model.config
    for s in (cfg.architecture, cfg.body, cfg.digest()):
        _put_str(buf, s)
    entries = list(_entries(model))
    buf.write(struct.pack("<dI", model.count_scale, len(entries)))
    for name, value in entries:
        _put_str(buf, name)
        buf.write(struct.pack("<B", value.ndim))
        buf.write(struct.pack(f"<{value.ndim}I", *value.shape))
        buf.write(np.ascontiguousarray(value, dtype="<f4").tobytes())
    return buf.getvalue()


def from_bytes(model, blob):
    """Load weights into a freshly built ``model`` whose config must match the checkpoint."""
    buf = io.BytesIO(blob)
    if buf.read(4) != MAGIC:
        raise CheckpointError("not a model checkpoint (bad magic)")
    (version,) = struct.unpack("<H", buf.read(2))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    arch, body, digest = _get_str(buf), _get_str(buf), _get_str(buf)
    cfg = model.config
    if digest != cfg.digest():
        raise CheckpointError(
            f"config digest mismatch: checkpoint {arch}/{body} {digest[:12]}, model {cfg.architecture}/{cfg.body} {cfg.digest()[:12]}")
    scale, n = struct.unpack("<dI", buf.read(12))
    targets = dict(_entries(model))
    seen = set()
    for _ in range(n):
        name = _get_str(buf)
        (rank,) = struct.unpack("<B", buf.read(1))
        shape = struct.unpack(f"<{rank}I", buf.read(4 * rank))
        size = int(np.prod(shape))
        values = np.frombuffer(buf.read(4 * size), dtype="<f4").reshape(shape)
        if name not in targets or targets[name].shape != tuple(shape):
            raise CheckpointError(f"unexpected entry {name!r} with shape {shape}")
        targets[name][...] = values
        seen.add(name)
    missing = set(targets) - seen
    if missing:
        raise CheckpointError(f"checkpoint lacks {sorted(missing)[:3]}")
    model.count_scale = scale
    return model


def save(model, path):
    with open(path, "wb") as fh:
        fh.write(to_bytes(model))


def load(model, path):
    with open(path, "rb") as fh:
        return from_bytes(model, fh.read())
