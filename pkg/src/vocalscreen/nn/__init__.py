"""Numpy network stack: axis-wise dilated convolutions, SE/residual blocks, training."""

from .gradcheck import grad_check, grad_check_layer
from .layers import (
    Conv2d,
    ConvAxis,
    Dense,
    GlobalAvgPool,
    MaxPool2x2,
    Param,
    ReLU,
    Residual,
    SEBlock,
    Sequential,
    Sigmoid,
)
from .model import (
    Mode,
    Model,
    ModelSpec,
    build_model,
    conv_param_count,
    load_model,
    receptive_field,
    save_model,
)
from .train import (
    Adam,
    FeatureSet,
    FitReport,
    GridSpace,
    TrainConfig,
    bce_loss,
    evaluate,
    fit_steps,
    grid_search,
    rows_to_csv,
    train,
)

__all__ = [
    "Adam", "Conv2d", "ConvAxis", "Dense", "FeatureSet", "FitReport", "GlobalAvgPool",
    "GridSpace", "MaxPool2x2", "Mode", "Model", "ModelSpec", "Param", "ReLU", "Residual",
    "SEBlock", "Sequential", "Sigmoid", "TrainConfig", "bce_loss", "build_model",
    "conv_param_count", "evaluate", "fit_steps", "grad_check", "grad_check_layer", "grid_search",
    "load_model", "receptive_field", "rows_to_csv", "save_model", "train",
]
