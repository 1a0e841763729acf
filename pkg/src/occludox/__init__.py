"""Occlusion attacks, mask-constrained physical-attack simulations, and the
corresponding robust-training defenses, on a small self-contained CNN stack.
"""

from .attacks import (AttackBudget, PatchConfig, RoaConfig, RoaPlacement,
                      eyeglass_attack, patch_apply, patch_train, pgd_l2,
                      pgd_linf, roa_attack, roa_exhaustive_position,
                      roa_gradient_positions, sticker_attack)
from .defenses import (SmoothingConfig, TrainConfig, adversarial_train,
                       curriculum_adversarial_train, doa_train,
                       gaussian_noise_train, smoothed_predict, smoothed_votes,
                       train_clean)
from .errors import (BoundsError, ConfigError, ContractError, DataError,
                     FormatError, NumericError, OccludoxError, ShapeError)
from .masks import Mask
from .models import (ConvNetSpec, ModelParams, accuracy, build_cnn, desk_spec,
                     predict_logits)
from .rng import SplitMix64, derive_seed

__version__ = "0.1.0"
