import os
import platform
import sys
from typing import Dict, List

import numpy as np
import psutil

from src.logging.logger_config import logger


class PlatformChecker:
    """运行环境检查器：Python 版本、64 位浮点、BLAS 线程数与硬件资源"""

    MIN_PYTHON_VERSION: tuple = (3, 10)
    BLAS_THREAD_VARS: List[str] = [
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "VECLIB_MAXIMUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ]
    MIN_MEMORY_GB: float = 2.0

    def __init__(self) -> None:
        self.logger = logger
        self.current_platform = platform.system().lower()
        self.python_version = platform.python_version()

    def check_compatibility(self) -> None:
        """
        检查运行环境

        Raises:
            RuntimeError: Python 版本过低或 numpy 不支持 64 位浮点
        """
        self.logger.info(f"检测到操作系统: {self.current_platform}")
        self.logger.info(f"Python版本: {self.python_version}")

        self._check_python_version()
        self._check_float64()
        self._check_blas_threads()
        self._check_resources()

        self.logger.info("运行环境检查通过")

    def _check_python_version(self) -> None:
        """
        Raises:
            RuntimeError: 当Python版本过低时
        """
        if sys.version_info < self.MIN_PYTHON_VERSION:
            error_msg = (
                f"Python版本过低: {self.python_version}。"
                f"需要Python {self.MIN_PYTHON_VERSION[0]}.{self.MIN_PYTHON_VERSION[1]}或更高版本"
            )
            self.logger.error(error_msg)
            raise RuntimeError(error_msg)

    def _check_float64(self) -> None:
        info = np.finfo(np.float64)
        if info.bits != 64 or info.eps > 2.3e-16:
            error_msg = f"numpy 的 float64 精度不符合 IEEE 双精度: bits={info.bits}, eps={info.eps}"
            self.logger.error(error_msg)
            raise RuntimeError(error_msg)

    def _check_blas_threads(self) -> None:
        """逐位可复现只在单线程 BLAS 下保证，多线程时给出警告"""
        unset = [name for name in self.BLAS_THREAD_VARS[:3] if name not in os.environ]
        multi = {
            name: os.environ[name]
            for name in self.BLAS_THREAD_VARS
            if name in os.environ and os.environ[name].strip() not in ("", "1")
        }
        if multi:
            self.logger.warning(f"BLAS 线程数大于 1，结果可能不是逐位可复现的: {multi}")
        elif unset:
            self.logger.warning(f"未设置 {unset}，BLAS 可能使用多线程；需要逐位可复现时请设为 1")

    def _check_resources(self) -> None:
        memory_gb = psutil.virtual_memory().total / (1024**3)
        self.logger.info(f"CPU 核数: {psutil.cpu_count(logical=True)}，内存: {memory_gb:.1f} GB")
        if memory_gb < self.MIN_MEMORY_GB:
            self.logger.warning(f"可用内存不足 {self.MIN_MEMORY_GB} GB，默认数据集规模下训练可能很慢")

    def get_platform_info(self) -> Dict[str, object]:
        return {
            "system": self.current_platform,
            "python_version": self.python_version,
            "machine": platform.machine(),
            "numpy": np.__version__,
            "cpu_count": psutil.cpu_count(logical=True),
            "memory_gb": round(psutil.virtual_memory().total / (1024**3), 2),
        }
