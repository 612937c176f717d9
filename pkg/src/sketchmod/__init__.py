"""Stroke-level sketch editing with learned pose refinement."""

from sketchmod.geometry import (
    Sketch,
    Stroke,
    StrokeAttributes,
    apply_attributes,
    denormalize_stroke,
    normalize_stroke,
)
from sketchmod.network import ModelConfig, SketchModel
from sketchmod.training import TrainConfig, evaluate_recovery, load_model, train

__all__ = [
    "ModelConfig",
    "Sketch",
    "SketchModel",
    "Stroke",
    "StrokeAttributes",
    "TrainConfig",
    "apply_attributes",
    "denormalize_stroke",
    "evaluate_recovery",
    "load_model",
    "normalize_stroke",
    "train",
]

__version__ = "0.1.0"
