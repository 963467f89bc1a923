"""From-scratch trainable acoustic networks.

Two topology families are supported, both with an optional per-speaker
first-layer bias projected from a one-hot speaker code:

- a continuous spectral regressor: feedforward layers, two bidirectional
  recurrent layers, linear output (mean squared error);
- a quantized-F0 classifier: feedforward layers, one bidirectional layer,
  one unidirectional recurrent layer fed back the previously generated
  class through a learned embedding, linear logits (cross entropy).

Everything is plain numpy in float64 with hand-written gradients; the
finite-difference check in :mod:`multivox.model.training` is the contract
for their correctness.
"""

from .network import (
    AcousticNetwork,
    NetworkTopology,
    cross_entropy_loss,
    first_layer_forward,
    first_layer_preactivation,
    loss,
    mse_loss,
)
from .training import (
    TrainedModel,
    TrainingConfig,
    gradient_check,
    train,
)
from .checkpoint import load_model, save_model, serialize_model, write_training_log

__all__ = [
    "AcousticNetwork",
    "NetworkTopology",
    "TrainedModel",
    "TrainingConfig",
    "cross_entropy_loss",
    "first_layer_forward",
    "first_layer_preactivation",
    "gradient_check",
    "load_model",
    "loss",
    "mse_loss",
    "save_model",
    "serialize_model",
    "train",
    "write_training_log",
]
