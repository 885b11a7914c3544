"""Layer-wise sparsity allocation and pruning for small CNNs."""

from ._prunekit import (
    Calibration,
    CapacityProfile,
    Dataset,
    LayerAllocation,
    LayerCapacity,
    Model,
    PruneResult,
    PrunekitError,
    SparsityPlan,
    achieved_remaining,
    allocate,
    calibrate_s_hat,
    capacity_profile,
    evaluate,
    finetune,
    load_masks,
    prune,
    solve_allocation,
    sweep_csv,
    train,
)

__all__ = [
    "Calibration",
    "CapacityProfile",
    "Dataset",
    "LayerAllocation",
    "LayerCapacity",
    "Model",
    "PruneResult",
    "PrunekitError",
    "SparsityPlan",
    "achieved_remaining",
    "allocate",
    "calibrate_s_hat",
    "capacity_profile",
    "evaluate",
    "finetune",
    "load_masks",
    "prune",
    "solve_allocation",
    "sweep_csv",
    "train",
]
