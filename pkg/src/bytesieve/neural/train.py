from __future__ import annotations

import logging

import numpy as np

from .data import Dataset
from .encoding import bytes_to_bits, chunk_and_pad, segments
from .model import ModelBundle, ModelConfig, forward, loss_and_grads
from .optim import DEFAULT_LR, AdamState, adam_step

log = logging.getLogger(__name__)

DEFAULT_STEPS = 20_000
DEFAULT_BATCH = 32
INIT_SCALE = 0.08


def sample_bin(ds: Dataset, rng: np.random.Generator) -> int:
    """Bin key drawn with probability proportional to bin size."""
    keys = sorted(ds.bins)
    sizes = np.array([len(ds.bins[k]) for k in keys], dtype=np.float64)
    return keys[int(rng.choice(len(keys), p=sizes / sizes.sum()))]


def train(ds: Dataset, config: ModelConfig, steps: int = DEFAULT_STEPS, batch: int = DEFAULT_BATCH,
          rng: np.random.Generator | int | None = 0, lr: float = DEFAULT_LR, log_every: int = 0,
          model: ModelBundle | None = None) -> ModelBundle:
    if len(ds) == 0:
        raise ValueError("cannot train on an empty dataset")
    if ds.chunk_bits != config.chunk_bits:
        raise ValueError(f"dataset chunked at {ds.chunk_bits} bits, model expects {config.chunk_bits}")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    if model is None:
        model = ModelBundle.init_uniform(config, rng, INIT_SCALE)
    state = model.optimizer_state or AdamState.fresh(model.params())
    keys = sorted(ds.bins)
    probs = np.array([len(ds.bins[k]) for k in keys], dtype=np.float64)
    probs /= probs.sum()
    for step in range(steps):
        key = keys[int(rng.choice(len(keys), p=probs))]
        n = len(ds.bins[key])
        idx = rng.choice(n, size=batch, replace=n < batch)
        X, Y, valid = ds.batch(key, idx)
        loss, grads = loss_and_grads(model, X, Y, valid)
        params, state = adam_step(model.params(), grads, state, lr=lr)
        model.set_params(params)
        model.loss_history.append(loss)
        if log_every and (step + 1) % log_every == 0:
            log.info("step %d loss %.5f", step + 1, float(np.mean(model.loss_history[-log_every:])))
    model.optimizer_state = state
    return model


def bit_outputs(model: ModelBundle, x: bytes) -> np.ndarray:
    """Per-bit predictions for ``x`` (length ``8 * len(x)``), segment by segment."""
    out = []
    for seg in segments(x):
        chunks, valid = chunk_and_pad(bytes_to_bits(seg), model.config.chunk_bits)
        out.append(np.asarray(forward(model, chunks), dtype=np.float64).ravel()[:valid])
    return np.concatenate(out) if out else np.zeros(0)


def predict_heatmap(model: ModelBundle, x: bytes) -> np.ndarray:
    """Per-byte heat: the mean of each byte's eight bit predictions."""
    if not x:
        raise ValueError("input must be non-empty")
    return bit_outputs(model, x).reshape(-1, 8).mean(axis=1)


def evaluate(model: ModelBundle, ds: Dataset, batch: int = 256) -> float:
    """Mean per-example MAE over a whole dataset."""
    total, count = 0.0, 0
    for key, exs in ds.bins.items():
        for s in range(0, len(exs), batch):
            idx = np.arange(s, min(s + batch, len(exs)))
            X, Y, valid = ds.batch(key, idx)
            P = forward(model, X)
            mask = np.arange(P.shape[1] * P.shape[2]).reshape(1, *P.shape[1:]) < valid[:, None, None]
            total += float(((np.abs(P - Y) * mask).reshape(len(idx), -1).sum(1) / valid).sum())
            count += len(idx)
    return total / count
