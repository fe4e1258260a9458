from .common import ModelError, TrainConfig, TrainingDiverged
from .flow import CouplingFlow, flow_forward, flow_inverse, train_flow
from .ar import ARModel, ar_conditionals, train_ar
from .encoder import Encoder, encoder_forward, train_autoencoder
from .checkpoint import CheckpointError, checkpoint_load, checkpoint_save

__all__ = [
    "ModelError", "TrainConfig", "TrainingDiverged",
    "CouplingFlow", "flow_forward", "flow_inverse", "train_flow",
    "ARModel", "ar_conditionals", "train_ar",
    "Encoder", "encoder_forward", "train_autoencoder",
    "CheckpointError", "checkpoint_load", "checkpoint_save",
]
