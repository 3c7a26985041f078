"""Stacked bidirectional LSTM encoder with a recursive LSTM decoder.

The encoder runs k bidirectional layers over an input sequence of n_p
displacement snapshots; the terminal hidden/cell states of the last layer's
two directions are concatenated (forward first, then backward) and seed the
single-layer decoder, whose hidden size is therefore 2*n_H.  The decoder
starts from the final input snapshot and produces n_f outputs through a dense
readout; each prediction is fed back as the next decoder input, so gradients
flow through the fed-back path as well (no teacher forcing).

Inputs are standardized per dof on entry (x -> (x - shift)/scale); the
recursion runs in normalized space and outputs are mapped back, which is
equivalent to re-normalizing each fed-back denormalized prediction.  The
conditional variant appends n_rep raw copies of the load magnitude alpha_f to
every decoder input.

Everything is float64 numpy; batches are carried as a trailing sample axis.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .cells import GATE_NAMES, LstmCellParams, cell_backward, cell_forward

MODEL_FORMAT = "elastosync-encdec-1"


@dataclass
class EncDecParams:
    """All trainable tensors plus input normalization and window metadata."""

    enc_fwd: list[LstmCellParams]
    enc_bwd: list[LstmCellParams]
    dec: LstmCellParams
    dense_w: np.ndarray          # (n_dof, 2*n_hidden)
    dense_b: np.ndarray          # (n_dof,)
    norm_shift: np.ndarray       # (n_dof,)
    norm_scale: np.ndarray       # (n_dof,), entries > 0
    conditional: bool = False
    n_rep: int = 12
    n_p: int = 20
    n_f: int = 20
    n_s: int = 1
    shared_dofs: np.ndarray | None = None

    def __post_init__(self):
        if np.any(self.norm_scale <= 0):
            raise ValueError("normalization scale entries must be positive")
        expected = self.n_dof + (self.n_rep if self.conditional else 0)
        if self.dec.input_size != expected:
            raise ValueError(
                f"decoder input size {self.dec.input_size} != {expected}")

    @property
    def n_dof(self) -> int:
        return self.dense_w.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.enc_fwd[0].hidden_size

    @property
    def k_layers(self) -> int:
        return len(self.enc_fwd)

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        """Named trainable tensors in a fixed order (norm stats excluded)."""
        out = []
        for l, (cf, cb) in enumerate(zip(self.enc_fwd, self.enc_bwd)):
            for tag, cell in (("fwd", cf), ("bwd", cb)):
                out += [(f"enc.{l}.{tag}.w_x", cell.w_x),
                        (f"enc.{l}.{tag}.w_h", cell.w_h),
                        (f"enc.{l}.{tag}.b", cell.b)]
        out += [("dec.w_x", self.dec.w_x), ("dec.w_h", self.dec.w_h),
                ("dec.b", self.dec.b),
                ("dense.w", self.dense_w), ("dense.b", self.dense_b)]
        return out

    def normalize(self, x: np.ndarray) -> np.ndarray:
        """Per-dof standardization along the leading dof axis."""
        shape = (-1,) + (1,) * (x.ndim - 1)
        return (x - self.norm_shift.reshape(shape)) / self.norm_scale.reshape(shape)

    def denormalize(self, xn: np.ndarray) -> np.ndarray:
        shape = (-1,) + (1,) * (xn.ndim - 1)
        return xn * self.norm_scale.reshape(shape) + self.norm_shift.reshape(shape)

    def predict_sequence(self, X: np.ndarray, n_f: int | None = None,
                         alpha_f=None, out_steps=None) -> np.ndarray:
        """Window-prediction entry point used by refill and evaluation.

        ``out_steps`` carries the absolute step ids being predicted; the
        network has no use for them, but replay-style stand-ins keyed by time
        (used to validate the switched solver) do.
        """
        return model_forward(self, X, alpha_f, n_f)


def init_encdec(n_dof: int, n_hidden: int, k: int = 2, conditional: bool = False,
                n_rep: int = 12, seed: int = 0,
                norm_shift: np.ndarray | None = None,
                norm_scale: np.ndarray | None = None,
                n_p: int = 20, n_f: int = 20, n_s: int = 1,
                shared_dofs: np.ndarray | None = None) -> EncDecParams:
    """Seeded model initialization (uniform +-sqrt(1/n_H), zero biases)."""
    if k < 1 or n_hidden < 1 or n_dof < 1:
        raise ValueError("k, n_hidden and n_dof must all be >= 1")
    rng = np.random.default_rng(seed)
    enc_fwd, enc_bwd = [], []
    n_in = n_dof
    for _ in range(k):
        enc_fwd.append(LstmCellParams.init(rng, n_in, n_hidden))
        enc_bwd.append(LstmCellParams.init(rng, n_in, n_hidden))
        n_in = 2 * n_hidden
    dec_in = n_dof + (n_rep if conditional else 0)
    dec = LstmCellParams.init(rng, dec_in, 2 * n_hidden)
    bound = np.sqrt(1.0 / n_hidden)
    dense_w = rng.uniform(-bound, bound, size=(n_dof, 2 * n_hidden))
    dense_b = np.zeros(n_dof)
    return EncDecParams(
        enc_fwd=enc_fwd, enc_bwd=enc_bwd, dec=dec,
        dense_w=dense_w, dense_b=dense_b,
        norm_shift=np.zeros(n_dof) if norm_shift is None else np.asarray(norm_shift, float),
        norm_scale=np.ones(n_dof) if norm_scale is None else np.asarray(norm_scale, float),
        conditional=conditional, n_rep=n_rep, n_p=n_p, n_f=n_f, n_s=n_s,
        shared_dofs=None if shared_dofs is None else np.asarray(shared_dofs, np.int64),
    )


def mse_loss(Y: np.ndarray, Y_hat: np.ndarray) -> float:
    """||Y - Y_hat||_F^2 / (n_f * n_dof) for one (n_dof, n_f) pair."""
    if Y.shape != Y_hat.shape:
        raise ValueError(f"shape mismatch: {Y.shape} vs {Y_hat.shape}")
    diff = Y - Y_hat
    return float(np.sum(diff * diff) / diff.size)


def _check_alpha(params: EncDecParams, alpha_f) -> None:
    if params.conditional and alpha_f is None:
        raise ValueError("conditional model requires alpha_f")
    if not params.conditional and alpha_f is not None:
        raise ValueError("alpha_f given but the model is not conditional")


def _alpha_rows(params: EncDecParams, alpha_f, B: int) -> np.ndarray:
    a = np.broadcast_to(np.asarray(alpha_f, dtype=float).reshape(-1), (B,))
    return np.tile(a, (params.n_rep, 1))


def _forward(params: EncDecParams, Xn: np.ndarray, alpha_f, n_f: int):
    """Batched forward in normalized space.

    Xn: (n_p, n_dof, B).  Returns (ynorm (n_f, n_dof, B), cache).
    """
    n_p, n_dof, B = Xn.shape
    H = params.n_hidden
    enc_caches = []
    seq = Xn
    h_f = c_f = h_b = c_b = None
    for l in range(params.k_layers):
        cf, cb = params.enc_fwd[l], params.enc_bwd[l]
        h_f = np.zeros((H, B)); c_f = np.zeros((H, B))
        h_b = np.zeros((H, B)); c_b = np.zeros((H, B))
        fwd_caches, bwd_caches = [None] * n_p, [None] * n_p
        out = np.empty((n_p, 2 * H, B))
        for t in range(n_p):
            h_f, c_f, fwd_caches[t] = cell_forward(cf, seq[t], h_f, c_f)
            out[t, :H] = h_f
        for t in range(n_p - 1, -1, -1):
            h_b, c_b, bwd_caches[t] = cell_forward(cb, seq[t], h_b, c_b)
            out[t, H:] = h_b
        enc_caches.append((fwd_caches, bwd_caches))
        seq = out

    h = np.concatenate([h_f, h_b], axis=0)
    c = np.concatenate([c_f, c_b], axis=0)

    alpha = _alpha_rows(params, alpha_f, B) if params.conditional else None
    u = Xn[n_p - 1]
    if alpha is not None:
        u = np.concatenate([u, alpha], axis=0)
    dec_caches = [None] * n_f
    h_list = [None] * n_f
    ynorm = np.empty((n_f, n_dof, B))
    for j in range(n_f):
        h, c, dec_caches[j] = cell_forward(params.dec, u, h, c)
        y = params.dense_w @ h + params.dense_b[:, None]
        ynorm[j] = y
        h_list[j] = h
        if j + 1 < n_f:
            u = np.concatenate([y, alpha], axis=0) if alpha is not None else y
    cache = (enc_caches, dec_caches, h_list, n_p, B)
    return ynorm, cache


def _backward(params: EncDecParams, cache, dynorm: np.ndarray) -> dict[str, np.ndarray]:
    """Exact gradients of a scalar loss given d(loss)/d(ynorm)."""
    enc_caches, dec_caches, h_list, n_p, B = cache
    H = params.n_hidden
    n_dof = params.n_dof
    n_f = len(dec_caches)

    grads = {name: np.zeros_like(arr) for name, arr in params.tensors()}

    def cell_grads(prefix: str) -> LstmCellParams:
        # Views into the gradient dict; cell_backward accumulates in place.
        return LstmCellParams(grads[f"{prefix}.w_x"], grads[f"{prefix}.w_h"],
                              grads[f"{prefix}.b"])

    # Decoder BPTT, including the fed-back prediction path.
    g_dec = cell_grads("dec")
    dh_next = np.zeros((2 * H, B))
    dc_next = np.zeros((2 * H, B))
    dfeedback = np.zeros((n_dof, B))
    for j in range(n_f - 1, -1, -1):
        dy = dynorm[j] + dfeedback
        grads["dense.w"] += dy @ h_list[j].T
        grads["dense.b"] += dy.sum(axis=1)
        dh = params.dense_w.T @ dy + dh_next
        dx, dh_next, dc_next = cell_backward(params.dec, dec_caches[j], dh,
                                             dc_next, g_dec)
        dfeedback = dx[:n_dof]
    # dfeedback now targets the last encoder input column (data): discarded.

    dh0_f, dh0_b = dh_next[:H], dh_next[H:]
    dc0_f, dc0_b = dc_next[:H], dc_next[H:]

    # Encoder BPTT through the stacked bidirectional layers.
    dseq = None  # top layer receives only terminal-state gradients
    for l in range(params.k_layers - 1, -1, -1):
        fwd_caches, bwd_caches = enc_caches[l]
        n_in = params.enc_fwd[l].input_size
        dseq_below = np.zeros((n_p, n_in, B))

        g_f = cell_grads(f"enc.{l}.fwd")
        dh_chain = dh0_f if l == params.k_layers - 1 else np.zeros((H, B))
        dc_chain = dc0_f if l == params.k_layers - 1 else np.zeros((H, B))
        for t in range(n_p - 1, -1, -1):
            dh = dh_chain if dseq is None else dseq[t][:H] + dh_chain
            dx, dh_chain, dc_chain = cell_backward(params.enc_fwd[l],
                                                   fwd_caches[t], dh,
                                                   dc_chain, g_f)
            dseq_below[t] += dx

        g_b = cell_grads(f"enc.{l}.bwd")
        dh_chain = dh0_b if l == params.k_layers - 1 else np.zeros((H, B))
        dc_chain = dc0_b if l == params.k_layers - 1 else np.zeros((H, B))
        for t in range(n_p):
            dh = dh_chain if dseq is None else dseq[t][H:] + dh_chain
            dx, dh_chain, dc_chain = cell_backward(params.enc_bwd[l],
                                                   bwd_caches[t], dh,
                                                   dc_chain, g_b)
            dseq_below[t] += dx

        dseq = dseq_below
    return grads


def _as_batch(X: np.ndarray) -> tuple[np.ndarray, bool]:
    """(B, n_dof, n_p) view of a single or batched sample array."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        return X[None], True
    if X.ndim == 3:
        return X, False
    raise ValueError(f"expected 2- or 3-d input, got shape {X.shape}")


def model_forward(params: EncDecParams, X: np.ndarray, alpha_f=None,
                  n_f: int | None = None) -> np.ndarray:
    """Predict n_f future snapshots from n_p past ones.

    X is (n_dof, n_p) or batched (B, n_dof, n_p); the result has matching
    layout with n_f columns.  alpha_f must be present iff the model is
    conditional (scalar, or length-B array for batches).
    """
    _check_alpha(params, alpha_f)
    Xb, single = _as_batch(X)
    if Xb.shape[1] != params.n_dof:
        raise ValueError(f"expected {params.n_dof} dofs, got {Xb.shape[1]}")
    n_f = params.n_f if n_f is None else int(n_f)
    Xn = params.normalize(np.transpose(Xb, (1, 2, 0)))  # (n_dof, n_p, B)
    ynorm, _ = _forward(params, np.transpose(Xn, (1, 0, 2)), alpha_f, n_f)
    Y = params.denormalize(np.transpose(ynorm, (1, 0, 2)))  # (n_dof, n_f, B)
    out = np.transpose(Y, (2, 0, 1))
    return out[0] if single else out


def model_backward(params: EncDecParams, X: np.ndarray, Y: np.ndarray,
                   alpha_f=None) -> dict[str, np.ndarray]:
    """Gradients of the physical-units MSE loss (see :func:`mse_loss`)."""
    return loss_and_grads(params, X, Y, alpha_f, normalized_space=False)[1]


def loss_and_grads(params: EncDecParams, X: np.ndarray, Y: np.ndarray,
                   alpha_f=None, normalized_space: bool = True
                   ) -> tuple[float, dict[str, np.ndarray]]:
    """Mean (over the batch) MSE loss and its exact parameter gradients.

    With ``normalized_space`` the residual is measured between standardized
    targets and the raw decoder outputs, which keeps small-amplitude dofs
    from vanishing in the loss and keeps its magnitude O(1); pass False to
    differentiate the physical-units MSE instead.  The gradients are exact
    for whichever loss is selected.
    """
    _check_alpha(params, alpha_f)
    Xb, _ = _as_batch(X)
    Yb, _ = _as_batch(Y)
    if Xb.shape[0] != Yb.shape[0] or Xb.shape[1] != Yb.shape[1]:
        raise ValueError(f"input/target mismatch: {Xb.shape} vs {Yb.shape}")
    B = Xb.shape[0]
    n_f = Yb.shape[2]
    Xn = params.normalize(np.transpose(Xb, (1, 2, 0)))
    ynorm, cache = _forward(params, np.transpose(Xn, (1, 0, 2)), alpha_f, n_f)
    Yt = np.transpose(Yb, (1, 2, 0))  # (n_dof, n_f, B)
    if normalized_space:
        resid = np.transpose(ynorm, (1, 0, 2)) - params.normalize(Yt)
        dynorm_scale = 1.0
    else:
        resid = params.denormalize(np.transpose(ynorm, (1, 0, 2))) - Yt
        dynorm_scale = params.norm_scale[:, None, None]
    loss = float(np.sum(resid * resid) / (n_f * params.n_dof * B))
    dY = (2.0 / (n_f * params.n_dof * B)) * resid
    dynorm = np.transpose(dY * dynorm_scale, (1, 0, 2))
    grads = _backward(params, cache, dynorm)
    return loss, grads


def save_model(params: EncDecParams, path) -> None:
    """Model artifact: dims, normalization and per-gate flat weight arrays."""
    weights: dict[str, list[float]] = {}

    def put_cell(prefix: str, cell: LstmCellParams) -> None:
        for gate in GATE_NAMES:
            wx, wh, b = cell.gate(gate)
            weights[f"{prefix}.{gate}.input"] = wx.ravel().tolist()
            weights[f"{prefix}.{gate}.recurrent"] = wh.ravel().tolist()
            weights[f"{prefix}.{gate}.bias"] = b.tolist()

    for l, (cf, cb) in enumerate(zip(params.enc_fwd, params.enc_bwd)):
        put_cell(f"encoder.layer{l}.forward", cf)
        put_cell(f"encoder.layer{l}.backward", cb)
    put_cell("decoder", params.dec)
    weights["dense.weight"] = params.dense_w.ravel().tolist()
    weights["dense.bias"] = params.dense_b.tolist()

    doc = {
        "format": MODEL_FORMAT,
        "dims": {
            "k": params.k_layers,
            "n_hidden": params.n_hidden,
            "n_p": params.n_p,
            "n_f": params.n_f,
            "n_s": params.n_s,
            "n_dof": params.n_dof,
            "conditional": params.conditional,
            "n_rep": params.n_rep,
        },
        "normalization": {
            "shift": params.norm_shift.tolist(),
            "scale": params.norm_scale.tolist(),
        },
        "shared_dofs": None if params.shared_dofs is None
        else params.shared_dofs.tolist(),
        "weights": weights,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> EncDecParams:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a model artifact: format {doc.get('format')!r}")
    dims = doc["dims"]
    k, H, n_dof = dims["k"], dims["n_hidden"], dims["n_dof"]
    weights = doc["weights"]

    def get_cell(prefix: str, n_in: int, n_hidden: int) -> LstmCellParams:
        w_x = np.empty((4 * n_hidden, n_in))
        w_h = np.empty((4 * n_hidden, n_hidden))
        b = np.empty(4 * n_hidden)
        for g, gate in enumerate(GATE_NAMES):
            rows = slice(g * n_hidden, (g + 1) * n_hidden)
            w_x[rows] = np.array(weights[f"{prefix}.{gate}.input"]).reshape(
                n_hidden, n_in)
            w_h[rows] = np.array(weights[f"{prefix}.{gate}.recurrent"]).reshape(
                n_hidden, n_hidden)
            b[rows] = weights[f"{prefix}.{gate}.bias"]
        return LstmCellParams(w_x, w_h, b)

    enc_fwd, enc_bwd = [], []
    n_in = n_dof
    for l in range(k):
        enc_fwd.append(get_cell(f"encoder.layer{l}.forward", n_in, H))
        enc_bwd.append(get_cell(f"encoder.layer{l}.backward", n_in, H))
        n_in = 2 * H
    dec_in = n_dof + (dims["n_rep"] if dims["conditional"] else 0)
    dec = get_cell("decoder", dec_in, 2 * H)
    shared = doc.get("shared_dofs")
    return EncDecParams(
        enc_fwd=enc_fwd, enc_bwd=enc_bwd, dec=dec,
        dense_w=np.array(weights["dense.weight"]).reshape(n_dof, 2 * H),
        dense_b=np.array(weights["dense.bias"]),
        norm_shift=np.array(doc["normalization"]["shift"]),
        norm_scale=np.array(doc["normalization"]["scale"]),
        conditional=dims["conditional"], n_rep=dims["n_rep"],
        n_p=dims["n_p"], n_f=dims["n_f"], n_s=dims["n_s"],
        shared_dofs=None if shared is None else np.array(shared, np.int64),
    )
