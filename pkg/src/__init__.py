"""CATO：坐标图轴向 Transformer 算子的桌面级实现"""

__version__ = "1.0.0"
