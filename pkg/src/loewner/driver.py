"""
驱动函数采样

- 每个样本使用独立的计数器型随机流 Philox(SeedSequence([seed, index]))，
  串行和并行运行结果逐位一致
- DrivingPath 支持均匀网格和记录下来的非均匀节点
- 二进制落盘格式：8 字节小端长度 + JSON 头 + 小端 float64 数组
"""
import json
import logging
import math
import struct
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from loewner.params import SleParams
from utils.errors import ParameterError, ResourceLimitError

logger = logging.getLogger("sle.driver")

# 单条驱动路径的默认步数上限
DEFAULT_STEP_CAP = 10_000_000

DRIVER_KINDS = ('brownian', 'constant', 'custom')


def sample_stream(seed: int, index: int, purpose: int = 0) -> np.random.Generator:
    """
    第 index 个样本的随机流

    purpose 非 0 时得到与驱动增量无关的另一条流（例如抽取实验配置）。
    """
    if seed < 0 or index < 0:
        raise ParameterError(f"seed 和 index 必须非负: seed={seed}, index={index}")
    entropy = [int(seed), int(index)] + ([int(purpose)] if purpose else [])
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


@dataclass
class DrivingPath:
    """离散驱动函数 U_0..U_M（U_0 = 0）"""
    dt: float
    values: np.ndarray
    seed: int = 0
    kind: str = 'brownian'
    times: Optional[np.ndarray] = None  # 非均匀节点；None 表示均匀网格 k*dt

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or len(self.values) < 2:
            raise ParameterError("驱动路径至少需要两个节点")
        if self.values[0] != 0.0:
            raise ParameterError("驱动路径必须满足 U_0 = 0")
        if not self.dt > 0:
            raise ParameterError(f"dt 必须为正: {self.dt}")
        if self.kind not in DRIVER_KINDS:
            raise ParameterError(f"未知驱动类型: {self.kind}")
        if self.times is not None:
            self.times = np.asarray(self.times, dtype=float)
            if self.times.shape != self.values.shape or self.times[0] != 0.0:
                raise ParameterError("times 与 values 长度不一致或 times[0] != 0")
            if np.any(np.diff(self.times) <= 0):
                raise ParameterError("times 必须严格递增")

    @property
    def steps(self) -> int:
        """增量个数 M"""
        return len(self.values) - 1

    @property
    def knots(self) -> np.ndarray:
        """节点时间 t_0..t_M"""
        if self.times is not None:
            return self.times
        return np.arange(len(self.values), dtype=float) * self.dt

    @property
    def horizon(self) -> float:
        return float(self.knots[-1])

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def step_sizes(self) -> np.ndarray:
        """每一步的时长"""
        if self.times is not None:
            return np.diff(self.times)
        return np.full(self.steps, self.dt)

    def truncated(self, t: float) -> "DrivingPath":
        """截取 [0, t] 内的节点（t 之后的部分丢弃）"""
        knots = self.knots
        keep = max(int(np.searchsorted(knots, t, side='right')), 2)
        times = None if self.times is None else self.times[:keep]
        return DrivingPath(dt=self.dt, values=self.values[:keep].copy(), seed=self.seed,
                           kind=self.kind, times=times)

    # ---------- 二进制读写 ----------

    def dump(self, path: str):
        """写入二进制文件"""
        header = {
            'dt': self.dt,
            'seed': int(self.seed),
            'kind': self.kind,
            'count': int(len(self.values)),
            'has_times': self.times is not None,
        }
        blob = json.dumps(header, sort_keys=True).encode('utf-8')
        with open(path, 'wb') as f:
            f.write(struct.pack('<Q', len(blob)))
            f.write(blob)
            f.write(self.values.astype('<f8').tobytes())
            if self.times is not None:
                f.write(self.times.astype('<f8').tobytes())

    @classmethod
    def load(cls, path: str) -> "DrivingPath":
        """从二进制文件读取"""
        with open(path, 'rb') as f:
            (size,) = struct.unpack('<Q', f.read(8))
            header = json.loads(f.read(size).decode('utf-8'))
            count = header['count']
            values = np.frombuffer(f.read(8 * count), dtype='<f8').astype(float)
            times = None
            if header.get('has_times'):
                times = np.frombuffer(f.read(8 * count), dtype='<f8').astype(float)
        return cls(dt=header['dt'], values=values, seed=header['seed'],
                   kind=header['kind'], times=times)


def sample_driver(params: SleParams, horizon: float, dt: float, seed: int,
                  step_cap: int = DEFAULT_STEP_CAP) -> DrivingPath:
    """
    在均匀网格上采样布朗驱动

    Args:
        params: SLE 参数（a 参数化下驱动为标准布朗运动，与 kappa 无关）
        horizon: 时间长度
        dt: 步长
        seed: 随机种子
        step_cap: 步数上限

    Returns:
        M = ceil(horizon/dt) 个增量的 DrivingPath
    """
    if not (horizon > 0 and dt > 0):
        raise ParameterError(f"horizon 和 dt 必须为正: horizon={horizon}, dt={dt}")
    steps = int(math.ceil(horizon / dt - 1e-9))
    if steps > step_cap:
        raise ResourceLimitError(f"驱动步数 {steps} 超过上限 {step_cap}")

    gen = sample_stream(seed, 0)
    increments = math.sqrt(dt) * gen.standard_normal(steps)
    values = np.concatenate(([0.0], np.cumsum(increments)))
    logger.debug(f"采样驱动: kappa={params.kappa:g}, 步数={steps}, dt={dt:g}, seed={seed}")
    return DrivingPath(dt=dt, values=values, seed=seed, kind='brownian')


def constant_driver(horizon: float, dt: float) -> DrivingPath:
    """恒为 0 的驱动（竖直线段）"""
    steps = int(math.ceil(horizon / dt - 1e-9))
    return DrivingPath(dt=dt, values=np.zeros(steps + 1), seed=0, kind='constant')


def custom_driver(values: Sequence[float], dt: float,
                  times: Optional[Sequence[float]] = None) -> DrivingPath:
    """由给定数值构造驱动"""
    return DrivingPath(dt=dt, values=np.asarray(values, dtype=float), seed=0, kind='custom',
                       times=None if times is None else np.asarray(times, dtype=float))


class NormalStreams:
    """
    一批样本的标准正态数缓冲

    每个样本按自己的随机流分块取数，每一步每个样本消耗一个数。
    块大小固定，因此某个样本取到的序列与它所在的批次无关。
    """

    def __init__(self, seed: int, indices: Sequence[int], chunk: int = 1024, purpose: int = 0):
        self.chunk = int(chunk)
        self.generators: List[np.random.Generator] = [sample_stream(seed, i, purpose) for i in indices]
        self._buffer = np.empty((len(self.generators), self.chunk))
        self._cursor = self.chunk

    def __len__(self) -> int:
        return len(self.generators)

    @property
    def exhausted(self) -> bool:
        """当前块已用完，下一次 next() 会重新取数"""
        return self._cursor >= self.chunk

    def next(self) -> np.ndarray:
        """返回每个样本的下一个标准正态数"""
        if self.exhausted:
            for row, gen in enumerate(self.generators):
                self._buffer[row] = gen.standard_normal(self.chunk)
            self._cursor = 0
        column = self._buffer[:, self._cursor].copy()
        self._cursor += 1
        return column

    def keep(self, mask: np.ndarray):
        """只保留 mask 为 True 的样本（批次压缩）"""
        self.generators = [g for g, k in zip(self.generators, mask) if k]
        self._buffer = self._buffer[mask]
