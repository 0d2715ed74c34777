"""Hop-by-hop neural surrogate: scene encoder, direction and amplitude predictors."""

from .config import (MECH_DET, MECH_NON, DEFAULT_LOSS_WEIGHTS, SurrogateConfig, desk_config,
                     tiny_config)
from .encoder import CropSet, crop_points, crop_seed, direction_features, posenc, prepare_crops
from .losses import loss_att, loss_dir, total_loss
from .model import SurrogateModel, amp_to_matrix, matrix_to_amp
from .train import (NumericalError, TrainingSet, TrainResult, build_training_set, evaluate,
                    forward_loss, train)
from .rollout import FeatureCache, rollout
