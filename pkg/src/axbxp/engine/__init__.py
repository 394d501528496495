"""Small quantized inference engine and trainer for desk-scale experiments."""

from .checkpoint import load_model, save_model
from .data import Dataset, load_digits
from .layers import FloatModel, Layer, build, build_cnn, build_mlp
from .quant import (
    QuantLayer,
    QuantModel,
    QuantTensor,
    RunStats,
    accuracy,
    assign_all,
    calibrate,
    forward_axbxp,
    forward_exact,
    quantize,
    quantize_model,
)
from .train import finetune_axbxp, float_accuracy, loss_and_grads, train_tiny

__all__ = [
    "Dataset", "FloatModel", "Layer", "QuantLayer", "QuantModel", "QuantTensor", "RunStats",
    "accuracy", "assign_all", "build", "build_cnn", "build_mlp", "calibrate", "finetune_axbxp",
    "float_accuracy", "forward_axbxp", "forward_exact", "load_digits", "load_model",
    "loss_and_grads", "quantize", "quantize_model", "save_model", "train_tiny",
]
