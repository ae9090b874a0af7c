from .config import (
    ConfigError,
    LayerSpec,
    ModelConfig,
    ParamReport,
    count_params,
    infer_shapes,
    parse_config_text,
    preset,
    reference_config,
    replace_layer,
    solve_dense_width,
)
from .model import Model, NumericError
from .optim import SGD, Adam, make_optimizer
from .serialize import ContainerError, load_weights, read_tensors, save_weights, write_tensors

__all__ = [
    "Adam", "ConfigError", "ContainerError", "LayerSpec", "Model", "ModelConfig",
    "NumericError", "ParamReport", "SGD", "count_params", "infer_shapes",
    "load_weights", "make_optimizer", "parse_config_text", "preset", "read_tensors",
    "reference_config", "replace_layer", "save_weights", "solve_dense_width",
    "write_tensors",
]
