"""后台工作线程：并行生成样本、预取训练批次"""

import queue
import threading
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.logging.logger_config import logger

_STOP = object()


def parallel_map(fn: Callable[[Any], Any], items: Sequence[Any], workers: int = 1) -> List[Any]:
    """
    用 workers 个线程从任务队列中取任务执行，结果按输入顺序返回

    任一任务抛出异常时，等待其余线程退出后重新抛出第一个异常。
    """
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    task_queue: queue.Queue = queue.Queue()
    for index, item in enumerate(items):
        task_queue.put((index, item))
    results: Dict[int, Any] = {}
    errors: List[Tuple[int, BaseException]] = []
    lock = threading.Lock()

    def process_queue() -> None:
        while True:
            try:
                index, item = task_queue.get_nowait()
            except queue.Empty:
                return
            try:
                value = fn(item)
                with lock:
                    results[index] = value
            except Exception as e:
                logger.error(f"工作线程处理第 {index} 个任务时出错: {e}")
                with lock:
                    errors.append((index, e))
            finally:
                task_queue.task_done()

    threads = [threading.Thread(target=process_queue, daemon=True) for _ in range(min(workers, len(items)))]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    if errors:
        raise min(errors, key=lambda pair: pair[0])[1]
    return [results[index] for index in range(len(items))]


class BatchPrefetcher:
    """
    在单个后台线程中按批组装数组，经有界队列交给训练循环

    批次顺序由 rng 决定，与预取深度无关。
    """

    def __init__(
        self,
        arrays: Dict[str, np.ndarray],
        batch_size: int,
        rng: Optional[np.random.Generator] = None,
        prefetch: int = 2,
    ) -> None:
        """
        Args:
            arrays: 首维为样本维的数组字典
            batch_size: 批大小
            rng: 打乱顺序用的随机数发生器，None 表示按原顺序
            prefetch: 队列容量

        Raises:
            ValueError: 批大小非正或数组首维不一致
        """
        sizes = {value.shape[0] for value in arrays.values()}
        if batch_size < 1 or len(sizes) != 1:
            error_msg = f"批大小必须为正且各数组样本数一致: batch={batch_size}, 样本数 {sorted(sizes)}"
            logger.error(error_msg)
            raise ValueError(error_msg)
        self.logger = logger
        self.arrays = arrays
        self.batch_size = batch_size
        self.count = sizes.pop()
        self.order = rng.permutation(self.count) if rng is not None else np.arange(self.count)
        self.batch_queue: queue.Queue = queue.Queue(maxsize=max(prefetch, 1))
        self.queue_running = True
        self._thread = threading.Thread(target=self._produce, daemon=True)
        self._thread.start()

    def __len__(self) -> int:
        return (self.count + self.batch_size - 1) // self.batch_size

    def _produce(self) -> None:
        try:
            for start in range(0, self.count, self.batch_size):
                if not self.queue_running:
                    return
                index = self.order[start : start + self.batch_size]
                batch = {key: value[index] for key, value in self.arrays.items()}
                self.batch_queue.put(batch)
        except Exception as e:
            self.logger.error(f"预取批次时出错: {e}")
            self.batch_queue.put(e)
        finally:
            self.batch_queue.put(_STOP)

    def __iter__(self) -> Iterator[Dict[str, np.ndarray]]:
        while True:
            item = self.batch_queue.get()
            if item is _STOP:
                return
            if isinstance(item, Exception):
                raise item
            yield item

    def close(self) -> None:
        """停止生产并清空队列，使后台线程能够退出"""
        self.queue_running = False
        while self._thread.is_alive():
            try:
                self.batch_queue.get(timeout=0.1)
            except queue.Empty:
                continue
