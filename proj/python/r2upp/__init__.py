from ._core import (
    ConfigError,
    DataError,
    Model,
    ShapeError,
    accuracy,
    conv2d,
    dice,
    hybrid_loss,
    iou,
    load_pgm,
    maxpool_2x2,
    save_pgm,
    sensitivity,
    specificity,
    synth_dataset,
    upsample_2x,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Model",
    "ShapeError",
    "accuracy",
    "conv2d",
    "dice",
    "hybrid_loss",
    "iou",
    "load_pgm",
    "maxpool_2x2",
    "save_pgm",
    "sensitivity",
    "specificity",
    "synth_dataset",
    "upsample_2x",
]
