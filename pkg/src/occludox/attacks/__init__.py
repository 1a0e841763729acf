from .pgd import AttackBudget, pgd_l2, pgd_linf
from .physical import (PatchConfig, eyeglass_attack, patch_apply,
                       patch_apply_batch, patch_side, patch_train,
                       sticker_attack)
from .roa import (GREY, RoaConfig, RoaPlacement, default_inner_budget,
                  grey_fill_losses, placement_grid, roa_attack,
                  roa_exhaustive_position, roa_gradient_positions,
                  sensitivity_candidates)

__all__ = [
    "AttackBudget", "pgd_linf", "pgd_l2",
    "GREY", "RoaConfig", "RoaPlacement", "default_inner_budget",
    "placement_grid", "grey_fill_losses", "roa_exhaustive_position",
    "roa_gradient_positions", "sensitivity_candidates", "roa_attack",
    "eyeglass_attack", "sticker_attack", "PatchConfig", "patch_side",
    "patch_train", "patch_apply", "patch_apply_batch",
]
