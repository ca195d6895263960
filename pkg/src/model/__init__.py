from src.model.config import ARCH_PRESETS, CatoConfig, arch_preset
from src.model.local import LocalStencil, local_forward
from src.model.cato import (
    CatoBlock,
    ModelState,
    block_forward,
    chart_of,
    lift,
    load_model,
    model_forward,
    save_model,
)

__all__ = [
    "ARCH_PRESETS",
    "CatoConfig",
    "arch_preset",
    "LocalStencil",
    "local_forward",
    "CatoBlock",
    "ModelState",
    "block_forward",
    "chart_of",
    "lift",
    "load_model",
    "model_forward",
    "save_model",
]
