from .augment import TrainingSample, augment, expand_dataset
from .cascade import CascadePrediction, CascadeSpec, LandmarkCascade, build_cascade_spec, cascade_predict
from .network import NetworkSpec, NetworkWeights, backward, init_weights, net_forward
from .patches import extract_patch
from .storage import load_architecture, load_weights, save_architecture, save_weights
from .training import TrainingHyper, sgd_train, train_cascade

__all__ = [
    "TrainingSample", "augment", "expand_dataset",
    "CascadePrediction", "CascadeSpec", "LandmarkCascade", "build_cascade_spec", "cascade_predict",
    "NetworkSpec", "NetworkWeights", "backward", "init_weights", "net_forward",
    "extract_patch",
    "load_architecture", "load_weights", "save_architecture", "save_weights",
    "TrainingHyper", "sgd_train", "train_cascade",
]
