"""Independent reference implementations used by the tests.

Nothing here imports the package's numerics: the recurrent forward pass is
re-derived gate by gate, coverage scoring is done bit by bit, and so on.
"""

from __future__ import annotations

import numpy as np

# Populated cells of the parameter-count table, keyed by (arch, layers, chunk_bits).
PARAM_GRID = {
    ("lstm", 1, 64): 33_024,
    ("lstm", 1, 128): 131_584,
    ("lstm", 2, 64): 66_048,
    ("lstm", 2, 128): 263_168,
    ("bilstm", 1, 64): 66_048,
    ("bilstm", 1, 128): 263_168,
    ("bilstm", 2, 64): 57_856,
    ("bilstm", 2, 128): 230_400,
    ("seq2seq", 2, 64): 57_856,
    ("seq2seq", 2, 128): 230_400,
}

# Truth table of the bitwise "strictly less" relation: (b, b') -> newly set.
STRICTLY_LESS_TABLE = {(0, 0): 0, (0, 1): 1, (1, 0): 0, (1, 1): 0}


# ---------------------------------------------------------------- coverage

def bucket_reference(count: int) -> int:
    """Hit count -> single bucket bit, written as explicit ranges."""
    if count <= 0:
        return 0
    ranges = [(1, 1), (2, 2), (3, 3), (4, 7), (8, 15), (16, 31), (32, 127), (128, 1 << 62)]
    for bit, (lo, hi) in enumerate(ranges):
        if lo <= count <= hi:
            return 1 << bit
    raise AssertionError("unreachable")


def strictly_less_reference(b: dict, b2: dict) -> int:
    """Bit-by-bit count of positions set in ``b2`` but not in ``b``."""
    total = 0
    for idx in set(b) | set(b2):
        x, y = b.get(idx, 0), b2.get(idx, 0)
        for bit in range(8):
            total += STRICTLY_LESS_TABLE[((x >> bit) & 1, (y >> bit) & 1)]
    return total


def edge_index_reference(prev_block: int, cur_block: int) -> int:
    return (cur_block ^ (prev_block >> 1)) % 65536


# ------------------------------------------------------------ recurrent net

def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def lstm_sequence(X, tensors, h0=None, c0=None, reverse=False, pert=None):
    """Run one LSTM layer over ``X`` of shape (P, T, n).

    ``tensors`` = (W_f, W_i, W_C, W_o, b_f, b_i, b_C, b_o).  ``pert`` is an
    optional ``(g, rows, cols, eps)``: batch element ``p`` sees tensor ``g``
    shifted by ``eps`` at ``[rows[p], cols[p]]`` (``rows`` ignored for biases).
    Returns (outputs (P, T, h), final h, final c).
    """
    Ws, bs = tensors[:4], tensors[4:]
    if pert is not None:
        X = np.broadcast_to(X, (len(pert[1]),) + X.shape[1:])
    P, T, _ = X.shape
    hid = Ws[0].shape[1]
    W = np.concatenate(Ws, axis=1)  # gate blocks side by side: f | i | C | o
    b = np.concatenate(bs)
    h = np.zeros((P, hid)) if h0 is None else np.broadcast_to(h0, (P, hid))
    c = np.zeros((P, hid)) if c0 is None else np.broadcast_to(c0, (P, hid))
    out = np.zeros((P, T, hid))
    steps = range(T - 1, -1, -1) if reverse else range(T)
    p_idx = np.arange(P)
    for t in steps:
        z = np.concatenate([X[:, t, :], h], axis=1)
        pre = z @ W + b
        if pert is not None:
            g, rows, cols, eps = pert
            if g < 4:
                pre[p_idx, g * hid + cols] += eps * z[p_idx, rows]
            else:
                pre[p_idx, (g - 4) * hid + cols] += eps
        f = _sigmoid(pre[:, :hid])
        i = _sigmoid(pre[:, hid:2 * hid])
        cand = np.tanh(pre[:, 2 * hid:3 * hid])
        o = _sigmoid(pre[:, 3 * hid:])
        c = f * c + i * cand
        h = o * np.tanh(c)
        out[:, t, :] = h
    return out, h, c


def reference_forward(arch: str, layers: int, cell_tensors, X, pert_cell=None, pert=None):
    """Bit predictions (P, T, k) for a single input ``X`` (T, k).

    Cells upstream of the perturbed one run once with batch size 1 and are
    broadcast, so only the affected part of the network is batched."""
    Xb = np.asarray(X, dtype=np.float64)[None]

    def run(k, inp, **kw):
        return lstm_sequence(inp, cell_tensors[k], pert=pert if pert_cell == k else None, **kw)

    def cat(a, b, axis):
        a, b = np.broadcast_arrays(a, b) if a.shape[0] != b.shape[0] else (a, b)
        return np.concatenate([a, b], axis=axis)

    if arch == "lstm":
        H = Xb
        for k in range(layers):
            H, _, _ = run(k, H)
        return (H + 1.0) / 2.0
    if layers == 1:
        Hf, _, _ = run(0, Xb)
        Hb, _, _ = run(1, Xb, reverse=True)
        return (Hf + Hb) / 4.0 + 0.5
    Hf, hf, cf = run(0, Xb)
    Hb, hb, cb = run(1, Xb, reverse=True)
    enc = cat(Hf, Hb, 2)
    if arch == "seq2seq":
        H, _, _ = run(2, enc, h0=cat(hf, hb, 1), c0=cat(cf, cb, 1))
    else:
        H, _, _ = run(2, enc)
    return (H + 1.0) / 2.0


def reference_loss(pred, Y, valid):
    """Masked mean absolute error per batch element: shape (P,)."""
    P = pred.shape[0]
    flat = pred.reshape(P, -1)[:, :valid]
    return np.abs(flat - np.asarray(Y, dtype=np.float64).ravel()[:valid]).mean(axis=1)


def finite_difference_gradients(arch, layers, cell_tensors, X, Y, valid, eps=1e-5, batch=4096):
    """Central differences for every scalar parameter, in the same nesting
    as ``cell_tensors`` (list of 8-tuples)."""
    grads = []
    for k, tensors in enumerate(cell_tensors):
        cell_grads = []
        for g, tensor in enumerate(tensors):
            shape = tensor.shape
            flat_idx = np.arange(int(np.prod(shape)))
            out = np.zeros(flat_idx.size)
            for s in range(0, flat_idx.size, batch):
                idx = flat_idx[s:s + batch]
                if len(shape) == 2:
                    rows, cols = np.unravel_index(idx, shape)
                else:
                    rows, cols = np.zeros_like(idx), idx
                lp = reference_loss(reference_forward(arch, layers, cell_tensors, X, k, (g, rows, cols, eps)),
                                    Y, valid)
                lm = reference_loss(reference_forward(arch, layers, cell_tensors, X, k, (g, rows, cols, -eps)),
                                    Y, valid)
                out[s:s + batch] = (lp - lm) / (2 * eps)
            cell_grads.append(out.reshape(shape))
        grads.append(cell_grads)
    return grads


def relative_error(a, b, floor=1e-6):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


# ------------------------------------------------------------------ misc

def bits_msb_first(data: bytes) -> list[int]:
    return [(byte >> (7 - j)) & 1 for byte in data for j in range(8)]
