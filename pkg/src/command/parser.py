import argparse
from typing import Any, Dict, List, Optional, Sequence, Tuple

from src.logging.logger_config import logger

# (flag, 覆盖键, 类型, 帮助)；覆盖键为 RunConfig 的 "section.field" 或顶层标量名
_COMMON_FLAGS = [
    ("--preset", "preset", str, "命名预设（desk、tiny、darcy 等）"),
    ("--seed", "seed", int, "全局随机种子"),
    ("--output-dir", "output_dir", str, "输出目录"),
    ("--workers", "workers", int, "工作线程数"),
]
_DATASET_FLAG = ("--dataset", "dataset", str, "数据集目录")
_DATA_FLAGS = [
    ("--resolution", "data.resolution", int, "网格边长 H=W"),
    ("--train-samples", "data.train_samples", int, "训练样本数"),
    ("--test-samples", "data.test_samples", int, "测试样本数"),
    ("--contrast", "data.contrast", float, "系数场对比度（≥ 1）"),
    ("--source", "data.source", str, "源项模式 constant/manufactured/random"),
    ("--amplitude", "data.amplitude", float, "网格扭曲幅度"),
    ("--pc-points", "data.pc_points", int, "每个样本导出的点云点数（0 为不导出）"),
]
_MODEL_FLAGS = [
    ("--layers", "model.layers", int, "CATO 块数 L"),
    ("--channels", "model.channels", int, "隐层宽度 C"),
    ("--heads", "model.heads", int, "注意力头数 M"),
    ("--kernel-size", "model.kernel_size", int, "局部卷积核边长"),
    ("--chart-mode", "model.chart_mode", str, "learned 或 normalized"),
    ("--variant", "model.variant", str, "cato 或 lift-readout"),
    ("--dropout", "model.dropout", float, "注意力 dropout 概率"),
]
_LOSS_FLAGS = [
    ("--lambda-g", "loss.lambda_g", float, "梯度匹配项权重"),
    ("--lambda-f", "loss.lambda_f", float, "通量监督项权重"),
    ("--lambda-c", "loss.lambda_c", float, "一致性项权重"),
    ("--lambda-gdl", "loss.lambda_gdl", float, "索引空间梯度差项权重"),
]
_OPTIM_FLAGS = [
    ("--lr", "optim.lr", float, "峰值学习率"),
    ("--batch-size", "optim.batch_size", int, "批大小"),
    ("--epochs", "optim.epochs", int, "训练轮数"),
    ("--weight-decay", "optim.weight_decay", float, "AdamW 权重衰减"),
    ("--checkpoint-every", "optim.checkpoint_every", int, "每隔多少轮写检查点"),
]
_PC_FLAGS = [
    ("--pc-layers", "pc.layers", int, "CATO-PC 块数"),
    ("--pc-channels", "pc.channels", int, "CATO-PC 隐层宽度"),
    ("--pc-heads", "pc.heads", int, "CATO-PC 注意力头数"),
    ("--k", "pc.k", int, "KNN 邻居数"),
]
_THEORY_FLAGS = [
    ("--grid", "theory.grid", int, "理论检查网格边长"),
    ("--m-bound", "theory.M_bound", float, "输入球半径 M"),
    ("--eps-nn", "theory.eps_nn", float, "单块实现容差 ε_nn"),
    ("--eps-rk", "theory.eps_rk", float, "低秩残差 ε_rk"),
    ("--delta", "theory.delta", float, "坐标图扰动 δ"),
    ("--trials", "theory.trials", int, "稳定性试验次数"),
]
_EVAL_FLAGS = [
    ("--checkpoint", "checkpoint", str, "检查点路径（缺省为 输出目录/model.cato1）"),
]


class UsageError(ValueError):
    """命令行用法错误"""


class _RaisingArgumentParser(argparse.ArgumentParser):
    """argparse 默认以退出码 2 退出，这里改为抛出 UsageError 由执行器统一处理"""

    def error(self, message: str) -> None:  # type: ignore[override]
        logger.error(f"命令行参数错误: {message}")
        raise UsageError(message)


class CommandParser:
    """
    命令解析器，负责把命令行参数解析为 (标准子命令, 配置覆盖项)
    """

    COMMANDS = ("generate", "train", "eval", "verify-theory", "train-pc", "eval-pc")

    def __init__(self) -> None:
        self.command_aliases: Dict[str, List[str]] = {
            "generate": ["gen", "data"],
            "train": ["fit"],
            "eval": ["evaluate", "test"],
            "verify-theory": ["verify", "theory", "verify_theory"],
            "train-pc": ["train_pc", "fit-pc"],
            "eval-pc": ["eval_pc", "evaluate-pc"],
        }
        self.flag_keys: Dict[str, str] = {}
        self.parser = self._build_parser()

    def _add_flags(self, sub: argparse.ArgumentParser, flags: Sequence[Tuple[str, str, type, str]]) -> None:
        for flag, key, kind, text in flags:
            sub.add_argument(flag, dest=key, type=kind, default=None, help=text)
            self.flag_keys[key] = flag

    def _build_parser(self) -> argparse.ArgumentParser:
        parser = _RaisingArgumentParser(prog="cato", description="CATO 桌面级算子学习基准")
        subparsers = parser.add_subparsers(dest="command", parser_class=_RaisingArgumentParser)
        layout = {
            "generate": [_DATASET_FLAG] + _DATA_FLAGS,
            "train": [_DATASET_FLAG] + _MODEL_FLAGS + _LOSS_FLAGS + _OPTIM_FLAGS,
            "eval": [_DATASET_FLAG] + _EVAL_FLAGS,
            "verify-theory": _THEORY_FLAGS,
            "train-pc": [_DATASET_FLAG] + _PC_FLAGS + _OPTIM_FLAGS,
            "eval-pc": [_DATASET_FLAG] + _EVAL_FLAGS,
        }
        for command, flags in layout.items():
            sub = subparsers.add_parser(command, help=f"{command} 子命令")
            sub.add_argument("--config", dest="config_path", default=None, help="JSON 运行配置文件")
            self._add_flags(sub, _COMMON_FLAGS + flags)
            if command in ("eval", "eval-pc"):
                sub.add_argument(
                    "--predictor", dest="predictor", default=None, help="model（缺省）、oracle 或 zeros"
                )
                self.flag_keys["predictor"] = "--predictor"
            if command == "eval":
                sub.add_argument("--limit", dest="limit", type=int, default=None, help="只评估前若干个测试样本")
                sub.add_argument("--chart-dump", dest="chart_dump", action="store_true", help="写出坐标图 CSV/PNG")
                sub.add_argument(
                    "--scaling-sizes", dest="scaling_sizes", default=None, help="注意力乘加增长指数拟合用的边长，如 16,32,64"
                )
            if command == "train":
                sub.add_argument(
                    "--loss-preset", dest="loss_preset", default=None, help="损失权重预设（darcy、zero 等）"
                )
        return parser

    def _normalize_command(self, raw_command: str) -> str:
        """
        将原始子命令名标准化，处理别名

        Returns:
            str: 标准化后的子命令名；无法识别时原样返回，由 argparse 报错
        """
        lowered = raw_command.strip().lower()
        for standard, aliases in self.command_aliases.items():
            if lowered in aliases:
                return standard
        return lowered if lowered in self.COMMANDS else raw_command

    def parse(self, argv: Sequence[str]) -> Tuple[str, argparse.Namespace]:
        """
        Args:
            argv: 不含程序名的参数列表

        Returns:
            Tuple[str, Namespace]: (标准化的子命令名, 解析结果)

        Raises:
            UsageError: 未提供子命令或参数非法
        """
        argv = list(argv)
        if not argv or argv[0].startswith("-") and argv[0] not in ("-h", "--help"):
            error_msg = self.get_error_message("unknown")
            logger.error(error_msg)
            raise UsageError(error_msg)
        if not argv[0].startswith("-"):
            argv[0] = self._normalize_command(argv[0])
        namespace = self.parser.parse_args(argv)
        if namespace.command is None:
            raise UsageError(self.get_error_message("unknown"))
        return namespace.command, namespace

    def overrides(self, namespace: argparse.Namespace) -> Dict[str, Any]:
        """提取显式给出的配置覆盖项（未给出的 flag 为 None，跳过）"""
        values = vars(namespace)
        return {key: values[key] for key in self.flag_keys if values.get(key) is not None}

    def get_error_message(self, command: str, detail: Optional[str] = None) -> str:
        messages = {
            "unknown": f"请提供子命令，可选: {', '.join(self.COMMANDS)}",
            "eval": "eval 需要数据集与检查点：cato eval --dataset DIR --checkpoint PATH",
            "eval-pc": "eval-pc 需要点云数据集与检查点：cato eval-pc --dataset DIR --checkpoint PATH",
            "train": "train 需要已生成的数据集：先运行 cato generate --dataset DIR",
            "train-pc": "train-pc 需要导出过点云的数据集：cato generate --pc-points N",
        }
        message = messages.get(command, f"{command} 参数错误")
        return f"{message}（{detail}）" if detail else message
