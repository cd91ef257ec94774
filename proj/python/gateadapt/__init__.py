"""Self-supervised sim-to-real adaptation for gate pose regression.

Thin Python surface over the C++ core: pose algebra, synthetic dataset
generation, model training (supervised pretraining and self-supervised
fine-tuning), and calibrated evaluation.
"""

from gateadapt._core import (
    Config,
    ConfigError,
    Dataset,
    Model,
    Pose,
    compose,
    evaluate_constant,
    evaluate_model,
    finetune,
    generate_dataset,
    init_model,
    inverse,
    load_checkpoint,
    load_config,
    load_dataset,
    mean_predictor_pose,
    parse_config,
    pose_to_vector9,
    pretrain,
    save_checkpoint,
    save_dataset,
    vector9_to_pose,
    warp_prediction,
    wrap_angle,
    yaw_of,
)

__all__ = [
    "Config",
    "ConfigError",
    "Dataset",
    "Model",
    "Pose",
    "compose",
    "evaluate_constant",
    "evaluate_model",
    "finetune",
    "generate_dataset",
    "init_model",
    "inverse",
    "load_checkpoint",
    "load_config",
    "load_dataset",
    "mean_predictor_pose",
    "parse_config",
    "pose_to_vector9",
    "pretrain",
    "save_checkpoint",
    "save_dataset",
    "vector9_to_pose",
    "warp_prediction",
    "wrap_angle",
    "yaw_of",
]

__version__ = "0.1.0"
