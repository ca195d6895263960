from src.attention.rope import RopeConfig, frequencies, rope_apply, rope_rotate, rope_score
from src.attention.axial import (
    AxialAttentionLayer,
    attention_weights,
    axial_forward,
    col_attention,
    row_attention,
)

__all__ = [
    "RopeConfig",
    "frequencies",
    "rope_apply",
    "rope_rotate",
    "rope_score",
    "AxialAttentionLayer",
    "attention_weights",
    "axial_forward",
    "col_attention",
    "row_attention",
]
