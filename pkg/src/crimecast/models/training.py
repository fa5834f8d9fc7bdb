"""Mini-batch training and deterministic inference for the deep models."""

import logging

import numpy as np

from ..nncore import Adam, ShapeError, bce_loss, mcce_loss, mse_loss

log = logging.getLogger(__name__)


class TrainingDivergence(FloatingPointError):
    """Raised when the combined loss stops being finite."""


def _targets(model, samples):
    labels = np.stack([s.target_labels for s in samples]).astype(float)
    counts = np.stack([s.target_counts for s in samples]).astype(float)
    want = model._out_shape(len(samples))
    if labels.shape != want:
        raise ShapeError(f"targets {labels.shape} do not match model outputs {want}; "
                         "multi-label models need samples built with target_type=None")
    return labels, counts


def _inputs(samples):
    return np.stack([s.inputs for s in samples])


def combined_loss(model, prob, count, labels, counts_norm, mask):
    """``(total, hotspot, count, grad_prob, grad_count)`` for one batch."""
    lam = model.config.count_loss_weight
    hot_fn = mcce_loss if model.config.multi_label else bce_loss
    hot, g_hot = hot_fn(prob, labels, mask)
    cnt_mask = mask if not model.config.multi_label else np.broadcast_to(mask[..., None], count.shape[1:])
    cnt, g_cnt = mse_loss(count, counts_norm, cnt_mask)
    return hot + lam * cnt, hot, cnt, g_hot, lam * g_cnt


def evaluate_loss(model, samples, mask, batch_size=None):
    """Combined loss with dropout off and batch-norm running statistics."""
    mask = np.asarray(mask, bool)
    batch_size = batch_size or model.config.batch_size
    total, n = 0.0, 0
    for i in range(0, len(samples), batch_size):
        chunk = samples[i:i + batch_size]
        labels, counts = _targets(model, chunk)
        prob, count = model.forward(_inputs(chunk), training=False)
        loss = combined_loss(model, prob, count, labels, counts / model.count_scale, mask)[0]
        total += loss * len(chunk)
        n += len(chunk)
    return total / n


def init_head_biases(model, samples):
    """Start both heads at the training-set prior of every output.

    Without this the untrained count head predicts softplus(0) ~ 0.69 of the
    normalised scale, the first updates are dominated by that offset and the
    recurrent layers saturate before they learn anything input dependent.
    """
    labels, counts = _targets(model, samples)
    q = np.clip(labels.mean(axis=0).ravel(), 1e-3, 1 - 1e-3)
    model.hotspot_head.params["bias"][...] = np.log(q / (1 - q))
    c = np.maximum(counts.mean(axis=0).ravel() / model.count_scale, 1e-3)
    model.count_head.params["bias"][...] = c + np.log(-np.expm1(-c))  # inverse softplus


def train(model, samples, mask, epochs=None, log_every=0):
    """Fit ``model`` in place and return it; ``model.history`` gets one dict per epoch."""
    samples = list(samples)
    if not samples:
        raise ValueError("training needs at least one sample")
    mask = np.asarray(mask, bool)
    cfg = model.config
    if mask.shape != (cfg.p, cfg.p):
        raise ShapeError(f"mask shape {mask.shape} does not match grid side {cfg.p}")
    if not mask.any():
        raise ValueError("study-area mask is empty")
    epochs = cfg.epochs if epochs is None else epochs
    peak = max(float(np.max(s.target_counts)) for s in samples)
    model.count_scale = max(peak, 1.0)
    if not model.history:
        init_head_biases(model, samples)
    opt = Adam(lr=cfg.learning_rate)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    n = len(samples)
    for epoch in range(epochs):
        order = rng.permutation(n)
        sums = np.zeros(3)
        for start in range(0, n, cfg.batch_size):
            chunk = [samples[j] for j in order[start:start + cfg.batch_size]]
            labels, counts = _targets(model, chunk)
            model.zero_grad()
            prob, count = model.forward(_inputs(chunk), training=True)
            total, hot, cnt, g_hot, g_cnt = combined_loss(model, prob, count, labels, counts / model.count_scale, mask)
            if not np.isfinite(total):
                raise TrainingDivergence(
                    f"non-finite loss at epoch {epoch}, batch starting {start}: hotspot={hot}, count={cnt}")
            model.backward(g_hot, g_cnt)
            opt.step(model.named_parameters())
            sums += np.array([total, hot, cnt]) * len(chunk)
        sums /= n
        model.history.append({"epoch": epoch, "loss": sums[0], "hotspot_loss": sums[1], "count_loss": sums[2]})
        if log_every and (epoch + 1) % log_every == 0:
            log.info("epoch %d loss %.5f (hotspot %.5f, count %.5f)", epoch + 1, *sums)
    return model


def predict_batch(model, samples, mask, batch_size=None):
    """Probabilities and expected counts for several samples, stacked on axis 0."""
    mask = np.asarray(mask, bool)
    batch_size = batch_size or model.config.batch_size
    probs, counts = [], []
    for i in range(0, len(samples), batch_size):
        chunk = samples[i:i + batch_size]
        prob, count = model.forward(_inputs(chunk), training=False)
        probs.append(prob)
        counts.append(count * model.count_scale)
    prob = np.concatenate(probs)
    count = np.concatenate(counts)
    cell_mask = mask if prob.ndim == 3 else mask[..., None]
    if cell_mask.shape[:2] != prob.shape[1:3]:
        raise ShapeError(f"mask shape {mask.shape} does not match prediction grid {prob.shape[1:3]}")
    return np.where(cell_mask, prob, 0.0), np.where(cell_mask, count, 0.0)


def predict(model, sample, mask):
    """``(probabilities, expected_counts)`` for one sample; masked-out cells are 0."""
    model.check_input(np.asarray(sample.inputs)[None])
    prob, count = predict_batch(model, [sample], mask, batch_size=1)
    return prob[0], count[0]
