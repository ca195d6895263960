"""训练循环：AdamW + one-cycle 调度，按轮保存检查点并写 JSON-lines 指标"""

import math
import os
import signal
import threading
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.autodiff import primitives as P
from src.autodiff.optim import OneCycleSchedule, OptimizerState, adamw_step
from src.autodiff.rng import make_rng
from src.autodiff.tensor import backward, get_tape
from src.data.dataset import SplitArrays, normalizer_stats
from src.data.loader import BatchPrefetcher
from src.errors import NumericError
from src.logging.logger_config import logger
from src.model.cato import ModelState, model_forward, save_model
from src.physics.loss import LossReport, LossWeights, loss_val, total_loss
from src.physics.mesh import Mesh
from src.pointcloud.knn import PointCloud
from src.pointcloud.model import PcModelState, pc_model_forward, save_pc_model
from src.training.evaluate import EvalReport, evaluate_model, evaluate_pc
from src.training.metrics import MetricsWriter

CHECKPOINT_NAME = "model.cato1"
METRICS_NAME = "metrics.jsonl"
SHUFFLE_STREAM = 20


@dataclass
class OptimConfig:
    lr: float = 5e-4
    batch_size: int = 4
    epochs: int = 50
    weight_decay: float = 1e-5
    warmup_frac: float = 0.3
    checkpoint_every: int = 10

    def validate(self) -> None:
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 0 or self.checkpoint_every < 1:
            error_msg = f"优化器配置非法: {asdict(self)}"
            logger.error(error_msg)
            raise ValueError(error_msg)
        if self.weight_decay < 0 or not 0.0 <= self.warmup_frac < 1.0:
            error_msg = f"weight_decay 必须非负且 warmup_frac ∈ [0, 1): {asdict(self)}"
            logger.error(error_msg)
            raise ValueError(error_msg)

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class TrainResult:
    checkpoint: str
    epochs_completed: int
    steps: int
    interrupted: bool
    history: List[Dict] = field(default_factory=list)
    final_eval: Optional[EvalReport] = None


class _StopFlag:
    """SIGINT 只置位，训练在当前步结束后停止并写检查点"""

    def __init__(self) -> None:
        self.requested = False
        self._previous = None

    def install(self) -> None:
        if threading.current_thread() is not threading.main_thread():
            return
        self._previous = signal.signal(signal.SIGINT, self._handle)

    def _handle(self, signum, frame) -> None:
        logger.warning("收到中断信号，将在当前步结束后保存检查点并退出")
        self.requested = True

    def restore(self) -> None:
        if self._previous is not None:
            signal.signal(signal.SIGINT, self._previous)
            self._previous = None


def _check_finite(report_total: float, step: int) -> None:
    if not math.isfinite(report_total):
        get_tape().clear()
        error_msg = f"第 {step} 步损失为非有限值 ({report_total})，训练中止"
        logger.error(error_msg)
        raise NumericError(error_msg)


class Trainer:
    """结构网格 CATO 的训练器"""

    def __init__(
        self,
        ms: ModelState,
        train: SplitArrays,
        test: SplitArrays,
        weights: LossWeights,
        optim: OptimConfig,
        output_dir: str,
        seed: int = 0,
    ) -> None:
        """
        Args:
            ms: 待训练模型（就地更新）
            train: 训练划分
            test: 测试划分，每轮结束评估一次
            weights: 损失权重
            optim: 优化器配置
            output_dir: 检查点与指标输出目录
            seed: 打乱顺序用的种子

        Raises:
            ValueError: 配置非法或训练集为空
        """
        optim.validate()
        weights.validate()
        if optim.epochs > 0 and len(train) == 0:
            error_msg = "训练集为空"
            logger.error(error_msg)
            raise ValueError(error_msg)
        self.logger = logger
        self.ms = ms
        self.train = train
        self.test = test
        self.weights = weights
        self.optim = optim
        self.output_dir = output_dir
        self.seed = seed
        steps_per_epoch = max(math.ceil(len(train) / optim.batch_size), 1)
        schedule = OneCycleSchedule(
            max_lr=optim.lr,
            total_steps=max(steps_per_epoch * optim.epochs, 1),
            warmup_frac=optim.warmup_frac,
        )
        self.optimizer = OptimizerState(schedule=schedule, weight_decay=optim.weight_decay)
        self.stop_flag = _StopFlag()
        os.makedirs(output_dir, exist_ok=True)
        self.checkpoint_path = os.path.join(output_dir, CHECKPOINT_NAME)
        self.metrics = MetricsWriter(os.path.join(output_dir, METRICS_NAME))
        if ms.normalizer("target_mean") is None and len(train) > 0:
            ms.set_normalizer(normalizer_stats(train))

    def train_step(self, batch: Dict[str, np.ndarray]) -> Tuple[LossReport, float]:
        """
        Returns:
            (损失报告, 本步学习率)

        Raises:
            NumericError: 损失为 NaN/Inf
        """
        get_tape().clear()
        self.ms.zero_grad()
        preds = model_forward(self.ms, batch["coords"], batch["feats"])
        report = total_loss(preds, batch["target"], Mesh(batch["coords"]), self.weights)
        _check_finite(report.total, self.optimizer.step)
        backward(report.tensor)
        lr = adamw_step(self.optimizer, self.ms.parameters())
        return report, lr

    def save_checkpoint(self) -> None:
        save_model(self.checkpoint_path, self.ms)

    def run(self) -> TrainResult:
        self.stop_flag.install()
        history: List[Dict] = []
        epoch = 0
        interrupted = False
        rng = make_rng(self.seed, stream=SHUFFLE_STREAM)
        try:
            for epoch in range(1, self.optim.epochs + 1):
                self.ms.set_training(True)
                sums: Dict[str, float] = {}
                batches = 0
                lr = self.optimizer.lr
                prefetcher = BatchPrefetcher(self.train.as_dict(), self.optim.batch_size, rng=rng)
                try:
                    for batch in prefetcher:
                        report, lr = self.train_step(batch)
                        for key, value in report.to_dict().items():
                            sums[key] = sums.get(key, 0.0) + float(value)
                        batches += 1
                        if self.stop_flag.requested:
                            break
                finally:
                    prefetcher.close()
                record = {key: value / max(batches, 1) for key, value in sums.items()}
                record.update({"event": "epoch", "epoch": epoch, "step": self.optimizer.step, "lr": lr})
                if len(self.test):
                    evaluation = evaluate_model(self.ms, self.test)
                    record["test_rel_l2"] = evaluation.mean_rel_l2
                    record["test_grad_mse"] = evaluation.extra["grad_mse"]
                self.metrics.write(record)
                history.append(record)
                self.logger.info(
                    f"第 {epoch}/{self.optim.epochs} 轮: 损失 {record.get('total', float('nan')):.4e}，"
                    f"测试相对 L² {record.get('test_rel_l2', float('nan')):.4e}"
                )
                if self.stop_flag.requested:
                    interrupted = True
                    break
                if epoch % self.optim.checkpoint_every == 0:
                    self.save_checkpoint()
        finally:
            self.stop_flag.restore()
            self.ms.set_training(False)

        self.save_checkpoint()
        final_eval = evaluate_model(self.ms, self.test) if len(self.test) else None
        if final_eval is not None:
            self.metrics.write({"event": "final", **final_eval.to_dict()})
        return TrainResult(
            checkpoint=self.checkpoint_path,
            epochs_completed=epoch if not interrupted else epoch - 1,
            steps=self.optimizer.step,
            interrupted=interrupted,
            history=history,
            final_eval=final_eval,
        )


def pc_normalizer_stats(clouds: Sequence[Tuple[PointCloud, np.ndarray]]) -> Dict[str, np.ndarray]:
    feats = np.concatenate([cloud.feats for cloud, _ in clouds if cloud.feats is not None], axis=0)
    targets = np.concatenate([target.ravel() for _, target in clouds])
    feat_std = feats.std(axis=0)
    target_std = targets.std()
    return {
        "feat_mean": feats.mean(axis=0),
        "feat_std": np.where(feat_std > 0.0, feat_std, 1.0),
        "target_mean": np.array([targets.mean()]),
        "target_std": np.array([target_std if target_std > 0.0 else 1.0]),
    }


class PcTrainer:
    """点云 CATO-PC 的训练器，只用相对 L² 数值项"""

    def __init__(
        self,
        ms: PcModelState,
        train: Sequence[Tuple[PointCloud, np.ndarray]],
        test: Sequence[Tuple[PointCloud, np.ndarray]],
        optim: OptimConfig,
        output_dir: str,
        seed: int = 0,
        eps: float = 1e-8,
    ) -> None:
        optim.validate()
        if optim.epochs > 0 and not train:
            error_msg = "点云训练集为空"
            logger.error(error_msg)
            raise ValueError(error_msg)
        self.logger = logger
        self.ms = ms
        self.train = list(train)
        self.test = list(test)
        self.optim = optim
        self.eps = eps
        self.seed = seed
        steps_per_epoch = max(math.ceil(len(self.train) / optim.batch_size), 1)
        schedule = OneCycleSchedule(
            max_lr=optim.lr,
            total_steps=max(steps_per_epoch * optim.epochs, 1),
            warmup_frac=optim.warmup_frac,
        )
        self.optimizer = OptimizerState(schedule=schedule, weight_decay=optim.weight_decay)
        self.stop_flag = _StopFlag()
        os.makedirs(output_dir, exist_ok=True)
        self.checkpoint_path = os.path.join(output_dir, CHECKPOINT_NAME)
        self.metrics = MetricsWriter(os.path.join(output_dir, METRICS_NAME))
        if ms.normalizer("target_mean") is None and self.train and ms.config.feature_dim:
            ms.set_normalizer(pc_normalizer_stats(self.train))

    def train_step(self, batch: Sequence[Tuple[PointCloud, np.ndarray]]) -> Tuple[float, float]:
        get_tape().clear()
        self.ms.zero_grad()
        terms = []
        for cloud, target in batch:
            u_hat, _ = pc_model_forward(self.ms, cloud)
            count = cloud.size
            terms.append(loss_val(P.reshape(u_hat, (1, count, 1)), target.reshape(1, count, 1), self.eps))
        loss = terms[0]
        for term in terms[1:]:
            loss = P.add(loss, term)
        loss = P.scale(loss, 1.0 / len(terms))
        value = loss.item()
        _check_finite(value, self.optimizer.step)
        backward(loss)
        lr = adamw_step(self.optimizer, self.ms.parameters())
        return value, lr

    def run(self) -> TrainResult:
        self.stop_flag.install()
        history: List[Dict] = []
        epoch = 0
        interrupted = False
        rng = make_rng(self.seed, stream=SHUFFLE_STREAM)
        try:
            for epoch in range(1, self.optim.epochs + 1):
                order = rng.permutation(len(self.train))
                losses = []
                lr = self.optimizer.lr
                for start in range(0, len(order), self.optim.batch_size):
                    batch = [self.train[i] for i in order[start : start + self.optim.batch_size]]
                    loss, lr = self.train_step(batch)
                    losses.append(loss)
                    if self.stop_flag.requested:
                        break
                record = {"event": "epoch", "epoch": epoch, "step": self.optimizer.step, "lr": lr}
                record["val"] = float(np.mean(losses)) if losses else 0.0
                if self.test:
                    record["test_rel_l2"] = evaluate_pc(self.ms, self.test).mean_rel_l2
                self.metrics.write(record)
                history.append(record)
                self.logger.info(f"点云第 {epoch}/{self.optim.epochs} 轮: 损失 {record['val']:.4e}")
                if self.stop_flag.requested:
                    interrupted = True
                    break
                if epoch % self.optim.checkpoint_every == 0:
                    save_pc_model(self.checkpoint_path, self.ms)
        finally:
            self.stop_flag.restore()

        save_pc_model(self.checkpoint_path, self.ms)
        final_eval = evaluate_pc(self.ms, self.test) if self.test else None
        if final_eval is not None:
            self.metrics.write({"event": "final", **final_eval.to_dict()})
        return TrainResult(
            checkpoint=self.checkpoint_path,
            epochs_completed=epoch if not interrupted else epoch - 1,
            steps=self.optimizer.step,
            interrupted=interrupted,
            history=history,
            final_eval=final_eval,
        )
