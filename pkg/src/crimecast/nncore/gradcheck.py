"""Central finite-difference utilities for checking analytic gradients."""

import numpy as np


def rel_error(analytic, numeric, floor=1e-7):
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def numeric_grad(f, x, step=1e-4, indices=None):
    """Central differences of scalar ``f()`` w.r.t. array ``x`` (perturbed in place).

    ``indices`` limits the probe to the given flat positions.
    """
    flat = x.reshape(-1)
    probe = range(flat.size) if indices is None else indices
    out = np.zeros(flat.size) if indices is None else np.zeros(len(indices))
    for j, idx in enumerate(probe):
        old = flat[idx]
        flat[idx] = old + step
        fp = f()
        flat[idx] = old - step
        fm = f()
        flat[idx] = old
        out[idx if indices is None else j] = (fp - fm) / (2.0 * step)
    return out.reshape(x.shape) if indices is None else out
