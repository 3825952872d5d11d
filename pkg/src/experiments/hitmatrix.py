"""
二进区间命中矩阵 D_k^n = {T(k/2^n) > T((k-1)/2^n)}，k = 1..2^n

T(0) = 0；截断的吞没时间按 +inf 处理；同一步被吞没视为不命中。
在这些规则下，同一次扫描得到的 n-1 层父区间恰好等于两个子区间的 OR。
"""
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from analytic.hitmap import HitMap
from experiments.events import pair_arrays
from loewner.driver import DrivingPath
from loewner.ensemble import SweepResult
from loewner.flow import flow_points
from loewner.params import SleParams
from utils.errors import DomainError


def grid_points(n: int) -> np.ndarray:
    """k/2^n, k = 1..2^n"""
    return np.arange(1, 2 ** n + 1, dtype=float) / 2 ** n


@dataclass
class HitMatrix:
    """单个样本在第 n 层的命中情况"""
    level: int
    bits: np.ndarray                       # +inf 规则下的 D_k^n
    weights: np.ndarray                    # 截断补全后的取值
    censored: np.ndarray                   # 区间在扫描结束时尚未确定
    gaps: Optional[np.ndarray] = field(default=None, repr=False)  # 网格点结束时的 gap

    @property
    def count(self) -> float:
        """N_n（补全后）"""
        return float(self.weights.sum())

    @property
    def hits(self) -> int:
        return int(self.bits.sum())

    def coarsen(self) -> "HitMatrix":
        """上一层的 bits：父区间 = 两个子区间的 OR"""
        if self.level < 1:
            raise DomainError("第 0 层没有上一层")
        bits = self.bits[0::2] | self.bits[1::2]
        gaps = None if self.gaps is None else self.gaps[1::2]
        return HitMatrix(level=self.level - 1, bits=bits, weights=bits.astype(float),
                         censored=self.censored[0::2].copy(), gaps=gaps)

    def refines(self, parent: "HitMatrix") -> bool:
        """本层是否与 parent 满足细化一致性"""
        if parent.level != self.level - 1:
            return False
        return bool(np.array_equal(self.coarsen().bits, parent.bits))


def hit_matrix(driver: DrivingPath, n: int, params: SleParams) -> HitMatrix:
    """
    由一条驱动路径的一次扫描得到第 n 层命中矩阵（+inf 规则）

    Args:
        driver: 驱动路径
        n: 网格层级
        params: SLE 参数
    """
    if n < 1:
        raise DomainError(f"网格层级必须 >= 1: n={n}")
    state = flow_points(driver, grid_points(n), params.a)
    steps = np.concatenate(([0], state.swallow_step))
    gaps = np.where(state.alive, state.gap, np.nan)
    lo, hi = steps[:-1], steps[1:]
    bits = (lo >= 0) & ((hi < 0) | (hi > lo))
    return HitMatrix(level=n, bits=bits, weights=bits.astype(float), censored=lo < 0, gaps=gaps)


def sweep_level(sweep: SweepResult) -> int:
    """扫描点恰为 grid_points(n) 时返回 n"""
    npts = len(sweep.points)
    n = int(round(np.log2(npts)))
    if 2 ** n != npts or not np.allclose(sweep.points, grid_points(n), rtol=0, atol=1e-15):
        raise DomainError("扫描点不是二进网格")
    return n


def level_outcomes(sweep: SweepResult, n: int, hitmap: HitMap, mode: str = 'complete'):
    """
    从顶层网格扫描中取第 n 层的全部样本（数组形式）

    第 n 层的点对 (x_{k-1}, x_k) 在顶层扫描中的列距为 2^(top-n)。

    Returns:
        (bits, weights, censored, gaps)，前三个形状为 (S, 2^n)，gaps 为第 n 层网格点的 gap
    """
    top = sweep_level(sweep)
    if not 1 <= n <= top:
        raise DomainError(f"层级 {n} 不在 [1, {top}] 内")
    stride = 2 ** (top - n)
    cols = stride * np.arange(1, 2 ** n + 1) - 1
    gaps = sweep.gap[:, cols]
    count = sweep.count
    ones = np.ones((count, 1), dtype=bool)
    lo_cols = cols[:-1]
    inner = sweep.pair_hits(lo_cols, stride) if len(lo_cols) else np.zeros((count, 0), dtype=bool)
    ratio = sweep.pair_ratio(lo_cols, stride) if len(lo_cols) else None
    if ratio is not None:
        ratio = np.concatenate([np.zeros((count, 1)), ratio], axis=1)
    bits = np.concatenate([ones, inner], axis=1)
    lo_alive = np.concatenate([~ones, sweep.alive[:, lo_cols]], axis=1)
    gap_lo = np.concatenate([np.full((count, 1), np.nan), gaps[:, :-1]], axis=1)
    bits, weights, censored = pair_arrays(bits, ratio, lo_alive, gap_lo, gaps, hitmap, mode)
    return bits, weights, censored, gaps


def hit_matrices(sweep: SweepResult, n: int, hitmap: HitMap, mode: str = 'complete') -> List[HitMatrix]:
    """每个样本一个 HitMatrix"""
    bits, weights, censored, gaps = level_outcomes(sweep, n, hitmap, mode)
    return [HitMatrix(level=n, bits=bits[i], weights=weights[i], censored=censored[i], gaps=gaps[i])
            for i in range(sweep.count)]
