"""BiLSTM sleep-stage classifier: configuration, layers, training and diagnostics."""

from .config import ModelConfig, TrainConfig
from .gradcheck import grad_check, relative_error, tiny_config
from .layers import frequency_enhance, h_swish, layer_norm, temperature_softmax
from .network import (ModelWeights, bilstm_forward, init_weights, loss_and_grads, model_forward,
                      param_shapes, weighted_cross_entropy, zero_weights)
from .train import (LabeledSession, TrainResult, inverse_frequency_weights, make_chunks,
                    predict_session, stage_targets, train)

__all__ = [
    "ModelConfig", "TrainConfig", "grad_check", "relative_error", "tiny_config",
    "frequency_enhance", "h_swish", "layer_norm", "temperature_softmax", "ModelWeights",
    "bilstm_forward", "init_weights", "loss_and_grads", "model_forward", "param_shapes",
    "weighted_cross_entropy", "zero_weights", "LabeledSession", "TrainResult",
    "inverse_frequency_weights", "make_chunks", "predict_session", "stage_targets", "train",
]
