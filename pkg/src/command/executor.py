import argparse
import os
import time
from dataclasses import asdict, replace
from typing import Any, Callable, Dict, List, Optional, Sequence

from src import __version__
from src.command.parser import CommandParser, UsageError
from src.config.manager import ConfigManager
from src.config.schema import RunConfig, load_run_config
from src.data.dataset import load_point_clouds, load_split, manifest_digest, write_dataset
from src.errors import BoundViolation, FitError, NumericError, ShapeError, SolverError
from src.geometry.diagnostics import chart_spectrum, plot_chart, write_chart_csv
from src.logging.logger_config import logger, run_log
from src.model.cato import ModelState, chart_of, load_model
from src.physics.loss import LOSS_PRESETS
from src.pointcloud.model import PcModelState, load_pc_model
from src.theory.suite import reports_to_json, run_theory_suite
from src.training.evaluate import evaluate_model, evaluate_pc
from src.training.flops import attention_scaling
from src.training.trainer import CHECKPOINT_NAME, PcTrainer, Trainer, TrainResult
from src.utils.batch import format_summary, parse_int_list
from src.utils.helpers import cleanup_temp_files, get_file_size_mb, write_json

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_BOUND = 3

RUN_CONFIG_NAME = "run_config.json"


class CommandExecutor:
    """命令执行器：解析参数、组装配置、分发到各子命令并映射退出码"""

    VERSION = __version__

    def __init__(
        self,
        config_manager: ConfigManager,
        output: Optional[Callable[[str], None]] = None,
    ) -> None:
        """
        Args:
            config_manager: 已加载的进程级配置
            output: 结果摘要输出函数，缺省为 print
        """
        self.config_manager = config_manager
        self.output = output or print
        self.command_parser = CommandParser()
        self.logger = logger

    def execute_command(self, argv: Sequence[str]) -> int:
        """
        执行一条命令行

        Returns:
            int: 退出码（0 成功，1 用法/配置错误，2 数值失败，3 理论界不成立）
        """
        command_id = hash(str(time.time()) + " ".join(argv)[:50])
        try:
            cmd, namespace = self.command_parser.parse(argv)
            self.logger.info(f"[命令ID:{command_id}] 开始处理命令: {cmd}")
            config = self._load_config(cmd, namespace)
            self._dispatch_command(cmd, namespace, config)
        except BoundViolation as e:
            self.logger.error(f"[命令ID:{command_id}] 理论界校验失败: {e}")
            return EXIT_BOUND
        except (NumericError, SolverError, FitError) as e:
            self.logger.error(f"[命令ID:{command_id}] 数值失败（{type(e).__name__}）: {e}")
            return EXIT_NUMERIC
        except UsageError as e:
            self.logger.warning(f"[命令ID:{command_id}] 用法错误: {e}")
            return EXIT_USAGE
        except (ValueError, KeyError, OSError) as e:
            self.logger.error(f"[命令ID:{command_id}] 配置或数据错误（{type(e).__name__}）: {e}")
            return EXIT_USAGE
        self.logger.info(f"[命令ID:{command_id}] 命令 {cmd} 完成")
        return EXIT_OK

    def _load_config(self, cmd: str, namespace: argparse.Namespace) -> RunConfig:
        """预设 → 环境变量缺省 → --config 文件 → 命令行覆盖"""
        defaults = {
            "seed": int(self.config_manager.get("CATO_SEED", 0)),
            "workers": int(self.config_manager.get("CATO_NUM_WORKERS", 1)),
            "output_dir": os.path.join(str(self.config_manager.get("CATO_OUTPUT_DIR", "./runs")), cmd),
        }
        overrides = self.command_parser.overrides(namespace)
        loss_preset = getattr(namespace, "loss_preset", None)
        if loss_preset is not None:
            if loss_preset not in LOSS_PRESETS:
                raise UsageError(f"未知损失预设: {loss_preset}，可选 {sorted(LOSS_PRESETS)}")
            for name, value in asdict(LOSS_PRESETS[loss_preset]).items():
                overrides.setdefault(f"loss.{name}", value)
        config = load_run_config(namespace.config_path, overrides, defaults)
        # 所有随机性都来自同一个运行种子
        config.data = replace(config.data, seed=config.seed)
        config.theory = replace(config.theory, seed=config.seed)
        return config

    def _dispatch_command(self, cmd: str, namespace: argparse.Namespace, config: RunConfig) -> None:
        command_handlers = {
            "generate": self._handle_generate,
            "train": self._handle_train,
            "eval": self._handle_eval,
            "verify-theory": self._handle_verify_theory,
            "train-pc": self._handle_train_pc,
            "eval-pc": self._handle_eval_pc,
        }

        handler = command_handlers.get(cmd)
        if handler is None:
            raise UsageError(self.command_parser.get_error_message("unknown"))
        with run_log(config.output_dir, cmd):
            handler(namespace, config)

    def _emit(self, title: str, summary: Dict[str, Any]) -> None:
        self.output(format_summary(title, summary))

    def _handle_generate(self, namespace: argparse.Namespace, config: RunConfig) -> None:
        """生成合成 Darcy 数据集，清单最后写入"""
        if os.path.isdir(config.dataset):
            cleanup_temp_files(config.dataset)
        manifest = write_dataset(config.dataset, config.data, workers=config.workers)
        summary = {
            "dataset": os.path.abspath(config.dataset),
            "train": len(manifest["splits"]["train"]),
            "test": len(manifest["splits"]["test"]),
            "manifest_sha256": manifest_digest(config.dataset),
        }
        self._emit("generate", summary)

    def _check_feature_dim(self, expected: int, actual: int, cmd: str) -> None:
        if expected != actual:
            error_msg = self.command_parser.get_error_message(
                cmd, f"配置特征维度 {expected} 与数据特征维度 {actual} 不一致"
            )
            self.logger.error(error_msg)
            raise ShapeError(error_msg)

    def _train_summary(self, result: TrainResult) -> Dict[str, Any]:
        summary: Dict[str, Any] = {
            "checkpoint": result.checkpoint,
            "checkpoint_mb": get_file_size_mb(result.checkpoint),
            "epochs_completed": result.epochs_completed,
            "steps": result.steps,
            "interrupted": result.interrupted,
        }
        if result.final_eval is not None:
            summary["test_rel_l2"] = result.final_eval.mean_rel_l2
        return summary

    def _handle_train(self, namespace: argparse.Namespace, config: RunConfig) -> None:
        """训练结构网格 CATO，写检查点与 JSON-lines 指标"""
        train = load_split(config.dataset, "train")
        test = load_split(config.dataset, "test")
        self._check_feature_dim(config.model.feature_dim, train.feats.shape[-1], "train")
        os.makedirs(config.output_dir, exist_ok=True)
        config.to_json(os.path.join(config.output_dir, RUN_CONFIG_NAME))

        ms = ModelState(config.model, seed=config.seed)
        self.logger.info(f"模型参数量: {ms.parameter_count()}，训练样本 {len(train)}，测试样本 {len(test)}")
        trainer = Trainer(ms, train, test, config.loss, config.optim, config.output_dir, seed=config.seed)
        self._emit("train", self._train_summary(trainer.run()))

    def _checkpoint_path(self, config: RunConfig) -> str:
        return config.checkpoint or os.path.join(config.output_dir, CHECKPOINT_NAME)

    def _handle_eval(self, namespace: argparse.Namespace, config: RunConfig) -> None:
        """评估检查点；oracle/zeros 预测器用于检验度量本身"""
        arrays = load_split(config.dataset, "test", limit=namespace.limit)
        checkpoint = self._checkpoint_path(config)
        ms: Optional[ModelState] = None
        if config.predictor == "model" or os.path.exists(checkpoint):
            if not os.path.exists(checkpoint):
                raise FileNotFoundError(self.command_parser.get_error_message("eval", f"检查点不存在: {checkpoint}"))
            ms = load_model(checkpoint)
        report = evaluate_model(ms, arrays, predictor=config.predictor)

        if ms is not None and namespace.scaling_sizes:
            scaling = attention_scaling(ms.config, parse_int_list(namespace.scaling_sizes, minimum=2), model=ms)
            report.extra["estimated_slope"] = scaling["estimated_slope"]
            report.extra["measured_slope"] = scaling["measured_slope"]
        if ms is not None and namespace.chart_dump and len(arrays):
            zeta = chart_of(ms, arrays.coords[0]).numpy()
            write_chart_csv(os.path.join(config.output_dir, "chart.csv"), arrays.coords[0], zeta)
            plot_chart(os.path.join(config.output_dir, "chart.png"), arrays.coords[0], zeta)
            report.extra["chart_effective_dim"] = chart_spectrum(zeta).effective_dimension

        write_json(os.path.join(config.output_dir, "eval.json"), report.to_dict())
        self._emit("eval", report.to_dict())

    def _handle_verify_theory(self, namespace: argparse.Namespace, config: RunConfig) -> None:
        """
        运行理论校验套件

        Raises:
            BoundViolation: 任一界检查未通过
            FitError: 单块构造失败（宽度预算不足），不会被当作通过
        """
        reports = run_theory_suite(config.theory)
        payload = reports_to_json(reports)
        write_json(os.path.join(config.output_dir, "theory_reports.json"), payload)
        for entry in payload:
            self.output(
                f"{'PASS' if entry['passed'] else 'FAIL'} {entry['name']}: "
                f"measured={entry['measured']:.4e} bound={entry['bound']:.4e}"
            )
        failed: List[str] = [entry["name"] for entry in payload if not entry["passed"]]
        if failed:
            error_msg = f"{len(failed)} 项理论界不成立: {failed}"
            self.logger.error(error_msg)
            raise BoundViolation(error_msg, reports)

    def _handle_train_pc(self, namespace: argparse.Namespace, config: RunConfig) -> None:
        train = load_point_clouds(config.dataset, "train")
        test = load_point_clouds(config.dataset, "test")
        if train:
            self._check_feature_dim(config.pc.feature_dim, train[0][0].feature_dim, "train-pc")
        os.makedirs(config.output_dir, exist_ok=True)
        config.to_json(os.path.join(config.output_dir, RUN_CONFIG_NAME))

        ms = PcModelState(config.pc, seed=config.seed)
        trainer = PcTrainer(ms, train, test, config.optim, config.output_dir, seed=config.seed)
        self._emit("train-pc", self._train_summary(trainer.run()))

    def _handle_eval_pc(self, namespace: argparse.Namespace, config: RunConfig) -> None:
        clouds = load_point_clouds(config.dataset, "test")
        checkpoint = self._checkpoint_path(config)
        ms: Optional[PcModelState] = None
        if config.predictor == "model" or os.path.exists(checkpoint):
            if not os.path.exists(checkpoint):
                raise FileNotFoundError(
                    self.command_parser.get_error_message("eval-pc", f"检查点不存在: {checkpoint}")
                )
            ms = load_pc_model(checkpoint)
        report = evaluate_pc(ms, clouds, predictor=config.predictor)
        write_json(os.path.join(config.output_dir, "eval_pc.json"), report.to_dict())
        self._emit("eval-pc", report.to_dict())
