"""Single LSTM cell: gated forward pass and exact reverse-mode gradients.

The four gates (forget f, input i1/i2, output o) are stored row-stacked in
fused weight blocks so one matrix product evaluates all gate pre-activations:

    z = W_x x + W_h h + b,   rows [0:H) f, [H:2H) i1, [2H:3H) i2, [3H:4H) o
    f = sigmoid(z_f); i1 = sigmoid(z_i1); i2 = tanh(z_i2); o = sigmoid(z_o)
    c' = c * f + i1 * i2
    h' = tanh(c') * o

All arrays are float64; batched evaluation uses column-per-sample layout
(x: (n_in, B), h/c: (H, B)).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GATE_NAMES = ("forget", "input1", "input2", "output")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # tanh form: overflow-free for any argument, single vector transcendental.
    return 0.5 * np.tanh(0.5 * z) + 0.5


@dataclass
class LstmCellParams:
    """Fused gate weights of one LSTM cell.

    w_x: (4H, n_in) input weights, w_h: (4H, H) recurrent weights, b: (4H,)
    biases; rows are stacked in gate order (forget, input1, input2, output).
    """

    w_x: np.ndarray
    w_h: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        H = self.hidden_size
        if self.w_x.shape[0] != 4 * H or self.b.shape != (4 * H,):
            raise ValueError("inconsistent fused gate shapes")

    @property
    def hidden_size(self) -> int:
        return self.w_h.shape[1]

    @property
    def input_size(self) -> int:
        return self.w_x.shape[1]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(input weights, recurrent weights, bias) view of one gate."""
        g = GATE_NAMES.index(name)
        H = self.hidden_size
        rows = slice(g * H, (g + 1) * H)
        return self.w_x[rows], self.w_h[rows], self.b[rows]

    @classmethod
    def init(cls, rng: np.random.Generator, n_in: int,
             n_hidden: int) -> "LstmCellParams":
        """Seeded uniform(+-sqrt(1/H)) weight init; zero biases."""
        bound = np.sqrt(1.0 / n_hidden)
        return cls(
            w_x=rng.uniform(-bound, bound, size=(4 * n_hidden, n_in)),
            w_h=rng.uniform(-bound, bound, size=(4 * n_hidden, n_hidden)),
            b=np.zeros(4 * n_hidden),
        )

    def zeros_like(self) -> "LstmCellParams":
        return LstmCellParams(np.zeros_like(self.w_x), np.zeros_like(self.w_h),
                              np.zeros_like(self.b))


def cell_forward(p: LstmCellParams, x: np.ndarray, h: np.ndarray,
                 c: np.ndarray) -> tuple[np.ndarray, np.ndarray, tuple]:
    """Advance one step; returns (h', c', cache) with cache for the backward pass."""
    if x.shape[0] != p.input_size or h.shape[0] != p.hidden_size:
        raise ValueError(
            f"cell expects input {p.input_size}, hidden {p.hidden_size}; "
            f"got {x.shape[0]}, {h.shape[0]}")
    H = p.hidden_size
    z = p.w_x @ x + p.w_h @ h + p.b[:, None]
    f = _sigmoid(z[:H])
    i1 = _sigmoid(z[H:2 * H])
    i2 = np.tanh(z[2 * H:3 * H])
    o = _sigmoid(z[3 * H:])
    c_next = c * f + i1 * i2
    tc = np.tanh(c_next)
    h_next = tc * o
    cache = (x, h, c, f, i1, i2, o, tc)
    return h_next, c_next, cache


def cell_backward(p: LstmCellParams, cache: tuple, dh: np.ndarray,
                  dc: np.ndarray, grads: LstmCellParams
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backprop one step.

    dh, dc are the loss gradients w.r.t. this step's outputs (h', c').
    Parameter gradients accumulate into ``grads``; returns (dx, dh_prev,
    dc_prev).
    """
    x, h, c, f, i1, i2, o, tc = cache
    H = p.hidden_size
    do = dh * tc
    dc_total = dc + dh * o * (1.0 - tc * tc)
    df = dc_total * c
    di1 = dc_total * i2
    di2 = dc_total * i1
    dc_prev = dc_total * f

    dz = np.empty((4 * H, x.shape[1]))
    dz[:H] = df * f * (1.0 - f)
    dz[H:2 * H] = di1 * i1 * (1.0 - i1)
    dz[2 * H:3 * H] = di2 * (1.0 - i2 * i2)
    dz[3 * H:] = do * o * (1.0 - o)

    grads.w_x += dz @ x.T
    grads.w_h += dz @ h.T
    grads.b += dz.sum(axis=1)
    dx = p.w_x.T @ dz
    dh_prev = p.w_h.T @ dz
    return dx, dh_prev, dc_prev
