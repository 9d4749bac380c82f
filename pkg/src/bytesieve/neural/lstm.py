"""LSTM cell and single-layer sequence forward/backward in numpy.

Gates are computed from the concatenation ``[x_t, h_{t-1}]``::

    f_t = sigmoid(W_f . z + b_f)
    i_t = sigmoid(W_i . z + b_i)
    C_t = f_t * C_{t-1} + i_t * tanh(W_C . z + b_C)
    o_t = sigmoid(W_o . z + b_o)
    h_t = o_t * tanh(C_t)

The four weight matrices are stored side by side in one
``(input_dim + hidden, 4 * hidden)`` array, columns ordered f, i, C, o.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GATES = ("f", "i", "C", "o")


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class LstmCell:
    def __init__(self, input_dim: int, hidden: int, dtype=np.float32):
        self.input_dim = input_dim
        self.hidden = hidden
        self.W = np.zeros((input_dim + hidden, 4 * hidden), dtype=dtype)
        self.b = np.zeros(4 * hidden, dtype=dtype)

    def _cols(self, k: int) -> slice:
        return slice(k * self.hidden, (k + 1) * self.hidden)

    W_f = property(lambda self: self.W[:, self._cols(0)])
    W_i = property(lambda self: self.W[:, self._cols(1)])
    W_C = property(lambda self: self.W[:, self._cols(2)])
    W_o = property(lambda self: self.W[:, self._cols(3)])
    b_f = property(lambda self: self.b[self._cols(0)])
    b_i = property(lambda self: self.b[self._cols(1)])
    b_C = property(lambda self: self.b[self._cols(2)])
    b_o = property(lambda self: self.b[self._cols(3)])

    def tensors(self) -> list[np.ndarray]:
        """Views in declaration order: W_f, W_i, W_C, W_o, b_f, b_i, b_C, b_o."""
        return [self.W_f, self.W_i, self.W_C, self.W_o, self.b_f, self.b_i, self.b_C, self.b_o]

    def param_count(self) -> int:
        return self.W.size + self.b.size

    def astype(self, dtype) -> "LstmCell":
        c = LstmCell(self.input_dim, self.hidden, dtype)
        c.W[...] = self.W
        c.b[...] = self.b
        return c


def lstm_cell_forward(p: LstmCell, x_t, h_prev, c_prev):
    """One step of the cell; works on single vectors or batches."""
    z = np.concatenate([x_t, h_prev], axis=-1)
    f = sigmoid(z @ p.W_f + p.b_f)
    i = sigmoid(z @ p.W_i + p.b_i)
    c = f * c_prev + i * np.tanh(z @ p.W_C + p.b_C)
    o = sigmoid(z @ p.W_o + p.b_o)
    return o * np.tanh(c), c


@dataclass
class LayerCache:
    X: np.ndarray
    H: np.ndarray  # (B, T+1, h), H[:, 0] is h0
    C: np.ndarray  # (B, T+1, h)
    G: np.ndarray  # (B, T, 4h) post-activation gates f, i, g, o
    tanhC: np.ndarray
    reverse: bool


def layer_forward(cell: LstmCell, X, h0=None, c0=None, reverse: bool = False):
    """Run ``cell`` over ``X`` of shape (B, T, input_dim).

    With ``reverse`` the sequence is consumed from the end; the returned
    hidden states are still indexed by input position.  Returns
    ``(H, (h_T, c_T), cache)`` where ``h_T, c_T`` is the state after the
    last consumed step.
    """
    if reverse:
        X = X[:, ::-1]
    B, T, _ = X.shape
    h = cell.hidden
    dt = cell.W.dtype
    Hs = np.zeros((B, T + 1, h), dtype=dt)
    Cs = np.zeros((B, T + 1, h), dtype=dt)
    if h0 is not None:
        Hs[:, 0] = h0
    if c0 is not None:
        Cs[:, 0] = c0
    G = np.empty((B, T, 4 * h), dtype=dt)
    tC = np.empty((B, T, h), dtype=dt)
    Wx, Wh = cell.W[:cell.input_dim], cell.W[cell.input_dim:]
    XW = X @ Wx + cell.b
    for t in range(T):
        a = XW[:, t] + Hs[:, t] @ Wh
        g = G[:, t]
        g[:, :2 * h] = sigmoid(a[:, :2 * h])
        g[:, 2 * h:3 * h] = np.tanh(a[:, 2 * h:3 * h])
        g[:, 3 * h:] = sigmoid(a[:, 3 * h:])
        Cs[:, t + 1] = g[:, :h] * Cs[:, t] + g[:, h:2 * h] * g[:, 2 * h:3 * h]
        tC[:, t] = np.tanh(Cs[:, t + 1])
        Hs[:, t + 1] = g[:, 3 * h:] * tC[:, t]
    out = Hs[:, 1:]
    cache = LayerCache(X, Hs, Cs, G, tC, reverse)
    if reverse:
        out = out[:, ::-1]
    return out, (Hs[:, T], Cs[:, T]), cache


def layer_backward(cell: LstmCell, cache: LayerCache, dH, dh_last=None, dc_last=None):
    """Backpropagate through one layer.

    ``dH`` is the loss gradient w.r.t. the layer outputs (input-position
    order); ``dh_last``/``dc_last`` w.r.t. the final state.  Returns
    ``(dX, dh0, dc0, dW, db)``.
    """
    if cache.reverse:
        dH = dH[:, ::-1]
    X, Hs, Cs, G, tC = cache.X, cache.H, cache.C, cache.G, cache.tanhC
    B, T, _ = X.shape
    h = cell.hidden
    Wh = cell.W[cell.input_dim:]
    dG = np.empty_like(G)
    dh = np.zeros((B, h), dtype=G.dtype) if dh_last is None else np.array(dh_last, dtype=G.dtype)
    dc = np.zeros((B, h), dtype=G.dtype) if dc_last is None else np.array(dc_last, dtype=G.dtype)
    for t in range(T - 1, -1, -1):
        g = G[:, t]
        f, i, gg, o = g[:, :h], g[:, h:2 * h], g[:, 2 * h:3 * h], g[:, 3 * h:]
        dh = dh + dH[:, t]
        do = dh * tC[:, t]
        dc = dc + dh * o * (1.0 - tC[:, t] ** 2)
        d = dG[:, t]
        d[:, :h] = dc * Cs[:, t] * f * (1.0 - f)
        d[:, h:2 * h] = dc * gg * i * (1.0 - i)
        d[:, 2 * h:3 * h] = dc * i * (1.0 - gg ** 2)
        d[:, 3 * h:] = do * o * (1.0 - o)
        dc = dc * f
        dh = d @ Wh.T
    flatG = dG.reshape(B * T, 4 * h)
    dWx = X.reshape(B * T, -1).T @ flatG
    dWh = Hs[:, :T].reshape(B * T, h).T @ flatG
    dW = np.concatenate([dWx, dWh], axis=0)
    db = flatG.sum(axis=0)
    dX = dG @ cell.W[:cell.input_dim].T
    if cache.reverse:
        dX = dX[:, ::-1]
    return dX, dh, dc, dW, db
