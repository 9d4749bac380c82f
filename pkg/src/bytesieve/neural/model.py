"""Heat-map model architectures built from :mod:`lstm` layers.

Every architecture reads ``chunk_bits`` bits per timestep and emits
``chunk_bits`` values per timestep.  There is no output projection: the
last layer's hidden width equals ``chunk_bits`` and hidden values in
(-1, 1) are mapped to (0, 1) affinely.

=========  ======  ========================================================
arch       layers  wiring
=========  ======  ========================================================
lstm       1, 2    stacked unidirectional, hidden = chunk_bits
bilstm     1       fwd + bwd, hidden = chunk_bits each, merged by sum
bilstm     2       fwd + bwd with chunk_bits/2 each, concatenated, then a
                   unidirectional layer with hidden = chunk_bits
seq2seq    2       encoder as bilstm layer 1; the decoder reads encoder
                   outputs per step and starts from the concatenated
                   final encoder states
=========  ======  ========================================================
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoding import CHUNK_SIZES
from .lstm import LstmCell, layer_backward, layer_forward

ARCHS = ("lstm", "bilstm", "seq2seq")


@dataclass(frozen=True)
class ModelConfig:
    arch: str = "lstm"
    layers: int = 1
    chunk_bits: int = 64

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"arch must be one of {ARCHS}, not {self.arch!r}")
        if self.layers not in (1, 2):
            raise ValueError("layers must be 1 or 2")
        if self.chunk_bits not in CHUNK_SIZES:
            raise ValueError(f"chunk_bits must be one of {CHUNK_SIZES}")
        if self.arch == "seq2seq" and self.layers != 2:
            raise ValueError("seq2seq has one encoding and one decoding layer (layers=2)")

    @property
    def merge(self) -> str | None:
        if self.arch == "lstm":
            return None
        return "sum" if self.layers == 1 else "concat"

    def cell_shapes(self) -> list[tuple[int, int]]:
        """(input_dim, hidden) for every cell in declaration order."""
        k = self.chunk_bits
        if self.arch == "lstm":
            return [(k, k)] * self.layers
        if self.layers == 1:
            return [(k, k), (k, k)]
        return [(k, k // 2), (k, k // 2), (k, k)]


def param_count(config: ModelConfig) -> int:
    return sum(4 * (i + h + 1) * h for i, h in config.cell_shapes())


@dataclass
class ModelBundle:
    config: ModelConfig
    cells: list[LstmCell]
    optimizer_state: object = None
    loss_history: list[float] = field(default_factory=list)

    @classmethod
    def zeros(cls, config: ModelConfig, dtype=np.float32) -> "ModelBundle":
        return cls(config, [LstmCell(i, h, dtype) for i, h in config.cell_shapes()])

    @classmethod
    def init_uniform(cls, config: ModelConfig, rng: np.random.Generator, scale: float = 0.08,
                     dtype=np.float32) -> "ModelBundle":
        m = cls.zeros(config, dtype)
        for c in m.cells:
            c.W[...] = rng.uniform(-scale, scale, c.W.shape)
            c.b[...] = rng.uniform(-scale, scale, c.b.shape)
        return m

    @property
    def dtype(self):
        return self.cells[0].W.dtype

    def params(self) -> list[np.ndarray]:
        return [a for c in self.cells for a in (c.W, c.b)]

    def set_params(self, arrays) -> None:
        arrays = list(arrays)
        for k, c in enumerate(self.cells):
            c.W, c.b = arrays[2 * k], arrays[2 * k + 1]

    def param_count(self) -> int:
        return sum(c.param_count() for c in self.cells)

    def astype(self, dtype) -> "ModelBundle":
        return ModelBundle(self.config, [c.astype(dtype) for c in self.cells], None, list(self.loss_history))

    def copy(self) -> "ModelBundle":
        return self.astype(self.dtype)


def forward(model: ModelBundle, chunks, return_cache: bool = False):
    """Per-bit outputs in [0, 1], shape (B, T, chunk_bits).

    ``chunks`` is (T, k) for a single sequence or (B, T, k) for a batch of
    equally long sequences.
    """
    X = np.asarray(chunks, dtype=model.dtype)
    single = X.ndim == 2
    if single:
        X = X[None]
    if X.shape[-1] != model.config.chunk_bits:
        raise ValueError(f"chunk width {X.shape[-1]} != model chunk_bits {model.config.chunk_bits}")
    cfg, cells = model.config, model.cells
    caches = []
    if cfg.arch == "lstm":
        H = X
        for c in cells:
            H, _, cache = layer_forward(c, H)
            caches.append(cache)
        P = 0.5 * (H + 1.0)
    elif cfg.layers == 1:
        Hf, _, cf = layer_forward(cells[0], X)
        Hb, _, cb = layer_forward(cells[1], X, reverse=True)
        caches = [cf, cb]
        P = 0.25 * (Hf + Hb) + 0.5
    else:
        Hf, (hf, cfin), cf = layer_forward(cells[0], X)
        Hb, (hb, cbin), cb = layer_forward(cells[1], X, reverse=True)
        E = np.concatenate([Hf, Hb], axis=-1)
        if cfg.arch == "seq2seq":
            h0 = np.concatenate([hf, hb], axis=-1)
            c0 = np.concatenate([cfin, cbin], axis=-1)
        else:
            h0 = c0 = None
        H, _, cd = layer_forward(cells[2], E, h0, c0)
        caches = [cf, cb, cd]
        P = 0.5 * (H + 1.0)
    if single:
        P = P[0]
    return (P, caches) if return_cache else P


def _backward_from_output(model: ModelBundle, caches, dP) -> list[np.ndarray]:
    cfg, cells = model.config, model.cells
    grads: list[np.ndarray] = [None] * (2 * len(cells))

    def put(k, dW, db):
        grads[2 * k], grads[2 * k + 1] = dW, db

    if cfg.arch == "lstm":
        dH = 0.5 * dP
        for k in range(len(cells) - 1, -1, -1):
            dH, _, _, dW, db = layer_backward(cells[k], caches[k], dH)
            put(k, dW, db)
    elif cfg.layers == 1:
        dH = 0.25 * dP
        _, _, _, dW, db = layer_backward(cells[0], caches[0], dH)
        put(0, dW, db)
        _, _, _, dW, db = layer_backward(cells[1], caches[1], dH)
        put(1, dW, db)
    else:
        half = cells[0].hidden
        dE, dh0, dc0, dW, db = layer_backward(cells[2], caches[2], 0.5 * dP)
        put(2, dW, db)
        if cfg.arch == "seq2seq":
            dhf, dhb = dh0[:, :half], dh0[:, half:]
            dcf, dcb = dc0[:, :half], dc0[:, half:]
        else:
            dhf = dhb = dcf = dcb = None
        _, _, _, dW, db = layer_backward(cells[0], caches[0], dE[..., :half], dhf, dcf)
        put(0, dW, db)
        _, _, _, dW, db = layer_backward(cells[1], caches[1], dE[..., half:], dhb, dcb)
        put(1, dW, db)
    return grads


def mae_loss(pred, y, valid) -> float:
    """Mean absolute error over the first ``valid`` bits (flattened)."""
    if valid <= 0:
        raise ValueError("valid must be positive")
    p = np.asarray(pred, dtype=np.float64).ravel()[:valid]
    t = np.asarray(y, dtype=np.float64).ravel()[:valid]
    if p.size < valid or t.size < valid:
        raise ValueError("pred and y must hold at least `valid` values")
    return float(np.mean(np.abs(p - t)))


def _valid_mask(shape, valid) -> np.ndarray:
    B, T, k = shape
    pos = np.arange(T * k).reshape(1, T, k)
    return pos < np.asarray(valid).reshape(B, 1, 1)


def loss_and_grads(model: ModelBundle, X, Y, valid):
    """Batch loss (mean of per-sequence MAE) and gradients for every parameter
    array in ``model.params()`` order."""
    X = np.asarray(X)
    if X.ndim == 2:
        X, Y, valid = X[None], np.asarray(Y)[None], [valid]
    valid = np.asarray(valid, dtype=np.int64).reshape(-1)
    if np.any(valid <= 0):
        raise ValueError("valid must be positive")
    P, caches = forward(model, X, return_cache=True)
    Y = np.asarray(Y, dtype=P.dtype).reshape(P.shape)
    mask = _valid_mask(P.shape, valid)
    diff = P - Y
    B = P.shape[0]
    per_seq = (np.abs(diff) * mask).reshape(B, -1).sum(axis=1) / valid
    loss = float(per_seq.mean())
    dP = (np.sign(diff) * mask / valid.reshape(B, 1, 1) / B).astype(P.dtype)
    return loss, _backward_from_output(model, caches, dP)


def backward(model: ModelBundle, chunks, y, valid) -> list[np.ndarray]:
    """Exact gradients of the masked MAE loss for every parameter array."""
    return loss_and_grads(model, chunks, y, valid)[1]


def named_gradients(model: ModelBundle, grads) -> dict[str, np.ndarray]:
    """Split fused gradients into per-cell W_*/b_* entries."""
    out = {}
    for k, c in enumerate(model.cells):
        dW, db = grads[2 * k], grads[2 * k + 1]
        h = c.hidden
        for j, g in enumerate("fiCo"):
            out[f"cell{k}.W_{g}"] = dW[:, j * h:(j + 1) * h]
            out[f"cell{k}.b_{g}"] = db[j * h:(j + 1) * h]
    return out
