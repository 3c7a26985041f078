"""Hand-rolled LSTM encoder-decoder surrogate: forward, exact gradients, Adam."""
from .cells import LstmCellParams, cell_backward, cell_forward
from .encdec import (
    EncDecParams,
    init_encdec,
    load_model,
    loss_and_grads,
    model_backward,
    model_forward,
    mse_loss,
    save_model,
)
from .optim import AdamState, adam_step, epoch_count, learning_rate

__all__ = [
    "AdamState",
    "EncDecParams",
    "LstmCellParams",
    "adam_step",
    "cell_backward",
    "cell_forward",
    "epoch_count",
    "init_encdec",
    "learning_rate",
    "load_model",
    "loss_and_grads",
    "model_backward",
    "model_forward",
    "mse_loss",
    "save_model",
]
