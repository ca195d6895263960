from src.physics.mesh import GradField, Mesh, centered_diffs, mesh_gradient, rotated_mesh, uniform_mesh
from src.physics.loss import (
    LOSS_PRESETS,
    LossReport,
    LossWeights,
    loss_cons,
    loss_flux,
    loss_gdl,
    loss_grad,
    loss_val,
    relative_l2_error,
    total_loss,
)

__all__ = [
    "GradField",
    "Mesh",
    "centered_diffs",
    "mesh_gradient",
    "rotated_mesh",
    "uniform_mesh",
    "LOSS_PRESETS",
    "LossReport",
    "LossWeights",
    "loss_cons",
    "loss_flux",
    "loss_gdl",
    "loss_grad",
    "loss_val",
    "relative_l2_error",
    "total_loss",
]
