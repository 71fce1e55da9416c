from .layers import Conv2D, Dense, Flatten, MaxPool2x2, ReLU
from .model import (
    ForwardTrace,
    ModelBundle,
    backward_input,
    backward_params,
    build_cnn,
    forward,
    forward_batch,
    input_gradient,
    logits_batch,
    predict_batch,
    representation_batch,
    softmax,
)
from .io import load_model, save_model
from .train import CNNClassifier, TrainResult, accuracy, train

__all__ = [
    "Conv2D", "Dense", "Flatten", "MaxPool2x2", "ReLU",
    "ForwardTrace", "ModelBundle", "backward_input", "backward_params",
    "build_cnn", "forward", "forward_batch", "input_gradient",
    "logits_batch", "predict_batch", "representation_batch", "softmax",
    "load_model", "save_model",
    "CNNClassifier", "TrainResult", "accuracy", "train",
]
