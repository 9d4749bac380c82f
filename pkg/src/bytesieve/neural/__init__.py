"""Bit-level recurrent heat-map models, written directly against numpy."""

from .data import (
    Dataset,
    FormatError,
    SampleRecord,
    SampleWriter,
    TrainingExample,
    build_dataset,
    iter_samples,
    read_samples,
    write_samples,
)
from .encoding import SEGMENT_BYTES, bytes_to_bits, chunk_and_pad, diff_bits, segments
from .io import load_model, save_model
from .lstm import LstmCell, lstm_cell_forward
from .model import (
    ModelBundle,
    ModelConfig,
    backward,
    forward,
    loss_and_grads,
    mae_loss,
    param_count,
)
from .optim import DEFAULT_LR, AdamState, adam_step
from .train import bit_outputs, evaluate, predict_heatmap, train

__all__ = [
    "Dataset", "FormatError", "SampleRecord", "SampleWriter", "TrainingExample", "build_dataset",
    "iter_samples", "read_samples", "write_samples", "SEGMENT_BYTES", "bytes_to_bits", "chunk_and_pad",
    "diff_bits", "segments", "load_model", "save_model", "LstmCell", "lstm_cell_forward", "ModelBundle",
    "ModelConfig", "backward", "forward", "loss_and_grads", "mae_loss", "param_count", "DEFAULT_LR",
    "AdamState", "adam_step", "bit_outputs", "evaluate", "predict_heatmap", "train",
]
