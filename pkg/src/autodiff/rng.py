"""基于计数器的 64 位随机数发生器（Philox）"""

import numpy as np

_MASK64 = (1 << 64) - 1


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """
    由配置种子与流编号构造独立随机流

    同一 (seed, stream) 在任何平台上产生相同序列；不同 stream 互不相关。
    """
    key = (int(seed) & _MASK64) | ((int(stream) & _MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key))
