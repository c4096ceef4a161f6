from .cnn import CnnModel, TrainConfig, cnn_forward, cnn_init, cnn_train, cnn_train_step
from .io import model_load, model_save
from .svm import LinearModel, svm_predict, svm_train

__all__ = [
    "CnnModel", "LinearModel", "TrainConfig", "cnn_forward", "cnn_init", "cnn_train",
    "cnn_train_step", "model_load", "model_save", "svm_predict", "svm_train",
]
