"""
批次调度模块

把样本序号切成固定大小的批次，串行或用进程池执行。
结果按批次顺序拼回，因此串行和并行的结果逐位一致。
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Callable, List, Tuple

from loewner.ensemble import SweepResult, SweepSettings, sweep_ensemble
from utils.errors import DomainError


def sweep_batch(start: int, count: int, points, a: float, settings: SweepSettings,
                seed: int) -> SweepResult:
    """单个批次的扫描（模块级函数，便于进程池序列化）"""
    return sweep_ensemble(points, a, settings, seed, start=start, count=count)


class CampaignRunner:
    """样本批次调度器"""

    def __init__(self, workers: int = 1, batch_size: int = 256):
        """
        初始化调度器

        Args:
            workers: 进程数，1 表示在当前进程串行执行
            batch_size: 每个批次的样本数
        """
        if workers < 1 or batch_size < 1:
            raise DomainError(f"workers 和 batch_size 必须 >= 1: {workers}, {batch_size}")
        self.workers = workers
        self.batch_size = batch_size
        self.logger = logging.getLogger("sle.runner")

    def batches(self, samples: int, start: int = 0) -> List[Tuple[int, int]]:
        """(起始序号, 样本数) 列表"""
        out = []
        offset = start
        end = start + samples
        while offset < end:
            count = min(self.batch_size, end - offset)
            out.append((offset, count))
            offset += count
        return out

    def map(self, func: Callable, samples: int, start: int = 0, **kwargs) -> list:
        """
        对每个批次调用 func(start, count, **kwargs)

        Args:
            func: 模块级函数
            samples: 样本总数
            start: 第一个样本序号
            **kwargs: 传给 func 的其他参数

        Returns:
            按批次顺序排列的结果
        """
        jobs = self.batches(samples, start)
        task = partial(func, **kwargs)
        self.logger.info(f"开始执行 {len(jobs)} 个批次，共 {samples} 个样本，进程数 {self.workers}")

        if self.workers == 1 or len(jobs) == 1:
            results = []
            for i, (offset, count) in enumerate(jobs, 1):
                results.append(task(offset, count))
                self.logger.debug(f"批次 {i}/{len(jobs)} 完成")
            return results

        with ProcessPoolExecutor(max_workers=self.workers) as pool:
            futures = [pool.submit(task, offset, count) for offset, count in jobs]
            results = []
            for i, future in enumerate(futures, 1):
                results.append(future.result())
                self.logger.debug(f"批次 {i}/{len(jobs)} 完成")
        return results

    def sweep(self, points, a: float, settings: SweepSettings, seed: int, samples: int,
              start: int = 0) -> SweepResult:
        """分批扫描并拼接"""
        parts = self.map(sweep_batch, samples, start, points=list(points), a=a,
                         settings=settings, seed=seed)
        result = SweepResult.concat(parts)
        censored = int(result.censored.sum())
        self.logger.info(f"扫描完成: 样本 {samples}, 点数 {len(result.points)}, "
                         f"结束时仍有存活点的样本 {censored}")
        return result
