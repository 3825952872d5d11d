"""
维数估计与一、二阶矩统计

- dimension_fit：log2 E[N_n] 对 n 的最小二乘斜率，目标 s = 2 - 4a
- first_moment_profile：P(D_k^n) 与精确值 F((k-1)/k) 对比
- second_moment_table：P(D_j ∩ D_k) 及归一化统计量 P·2^{(1-s)n}·(k-j)^{1-s}
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from analytic.hitmap import HitMap, adjacent_from_gaps
from experiments.estimate import mean_estimate
from experiments.hitmatrix import HitMatrix
from utils.errors import DomainError

logger = logging.getLogger("sle.dimension")

MIN_SAMPLES = 50


@dataclass
class DimensionFit:
    """维数拟合结果"""
    levels: List[int]
    counts: List[float]          # 各层平均 N_n
    count_stderr: List[float]
    slope: float
    slope_stderr: float
    intercept: float
    residuals: List[float]
    dropped: List[int] = field(default_factory=list)
    samples: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def level_counts(matrices: Mapping[int, Sequence[HitMatrix]]) -> Dict[int, np.ndarray]:
    """每层每个样本的 N_n"""
    out = {}
    for n, items in matrices.items():
        for m in items:
            if m.level != n:
                raise DomainError(f"第 {n} 层混入了第 {m.level} 层的矩阵")
        out[int(n)] = np.array([m.count for m in items], dtype=float)
    return out


def dimension_fit(matrices: Mapping[int, Sequence[HitMatrix]], min_samples: int = MIN_SAMPLES) -> DimensionFit:
    """
    用 E[N_n] 的对数斜率估计维数

    Args:
        matrices: 层级 -> 该层所有样本的 HitMatrix
        min_samples: 每层最少样本数

    Returns:
        DimensionFit；平均计数为 0 的层被剔除并记录在 dropped 中
    """
    counts = level_counts(matrices)
    if len(counts) < 2:
        raise DomainError(f"至少需要两个层级，实际 {len(counts)} 个")
    for n, c in counts.items():
        if len(c) < min_samples:
            raise DomainError(f"第 {n} 层只有 {len(c)} 个样本，至少需要 {min_samples} 个")

    levels, means, errs, dropped = [], [], [], []
    for n in sorted(counts):
        c = counts[n]
        mean = float(c.mean())
        if mean <= 0:
            logger.warning(f"第 {n} 层计数全为 0，已剔除")
            dropped.append(n)
            continue
        levels.append(n)
        means.append(mean)
        errs.append(float(c.std(ddof=1) / np.sqrt(len(c))))
    if len(levels) < 2:
        raise DomainError("剔除零计数层后不足两个层级")

    y = np.log2(means)
    fit = stats.linregress(levels, y)
    residuals = (y - (fit.intercept + fit.slope * np.asarray(levels))).tolist()
    samples = min(len(c) for c in counts.values())
    logger.info(f"维数拟合: 层级 {levels[0]}..{levels[-1]}, 斜率 {fit.slope:.4f} ± {fit.stderr:.4f}")
    return DimensionFit(levels=levels, counts=means, count_stderr=errs, slope=float(fit.slope),
                        slope_stderr=float(fit.stderr), intercept=float(fit.intercept),
                        residuals=residuals, dropped=dropped, samples=samples)


def interior_cells(n: int, delta: float) -> np.ndarray:
    """满足 delta <= k/2^n <= 1 - delta 的 k（从 1 开始）"""
    if not 0 < delta < 0.5:
        raise DomainError(f"delta 必须在 (0, 1/2) 内: {delta}")
    k = np.arange(1, 2 ** n + 1)
    ratio = k / 2 ** n
    return k[(ratio >= delta) & (ratio <= 1 - delta)]


def _stack(matrices: Sequence[HitMatrix], n: int):
    if not matrices:
        raise DomainError("没有样本")
    for m in matrices:
        if m.level != n:
            raise DomainError(f"期望第 {n} 层，得到第 {m.level} 层")
    bits = np.stack([m.bits for m in matrices])
    weights = np.stack([m.weights for m in matrices])
    censored = np.stack([m.censored for m in matrices])
    return bits, weights, censored


def first_moment_profile(matrices: Sequence[HitMatrix], n: int, delta: float, hitmap: HitMap) -> pd.DataFrame:
    """
    内部区间的 P(D_k^n) 与精确值

    返回的表带有 attrs['C1'] = min_k F((k-1)/k) 2^{(1-s)n}，
    列 above_floor 表示置信上界不低于 C1 2^{-(1-s)n}。
    """
    _, weights, _ = _stack(matrices, n)
    ks = interior_cells(n, delta)
    exact = hitmap.F_real((ks - 1) / ks)
    scale = 2.0 ** (hitmap.p * n)   # 1 - s = 4a - 1
    c1 = float(exact.min() * scale)
    floor = c1 / scale

    rows = []
    for k, truth in zip(ks, exact):
        est = mean_estimate(weights[:, k - 1])
        rows.append({'k': int(k), 'p_hat': est.value, 'stderr': est.stderr, 'ci_lo': est.ci_lo,
                     'ci_hi': est.ci_hi, 'exact': float(truth), 'above_floor': est.ci_hi >= floor})
    frame = pd.DataFrame(rows)
    frame.attrs['C1'] = c1
    return frame


@dataclass
class SecondMomentTable:
    """二阶矩统计"""
    frame: pd.DataFrame          # 每个 (j, k), j < k 一行
    matrix: np.ndarray           # 对称的 P̂(D_j ∩ D_k)，按内部区间编号
    cells: np.ndarray            # 内部区间的 k
    bound: float                 # 可信格子上归一化统计量的最大值
    low_confidence: int


def second_moment_table(matrices: Sequence[HitMatrix], n: int, delta: float,
                        hitmap: Optional[HitMap] = None, mode: str = 'complete',
                        min_joint: int = 10) -> SecondMomentTable:
    """
    内部区间两两同时命中的概率

    Args:
        matrices: 第 n 层所有样本的 HitMatrix
        n: 层级
        delta: 内部区间的边距
        hitmap: 用于相邻且都未确定的区间对的补全；为 None 时按不命中计
        mode: complete / strict
        min_joint: 同时命中样本数低于此值的格子标记为低可信

    Returns:
        SecondMomentTable
    """
    bits, weights, censored = _stack(matrices, n)
    ks = interior_cells(n, delta)
    cols = ks - 1
    S = len(matrices)
    # 已确定的区间用指示量，联合事件不能直接乘各自的条件概率
    A = np.where(censored, weights, bits)[:, cols].astype(float)
    U = censored[:, cols].astype(float)
    B = (A > 0).astype(float)

    # 两个区间都未确定的部分先扣掉，相邻的再用三点恒等式补回
    joint = (A.T @ A - (U * A).T @ (U * A)) / S
    joint_sq = ((A ** 2).T @ (A ** 2) - (U * A ** 2).T @ (U * A ** 2)) / S
    hits = B.T @ B - (U * B).T @ (U * B)
    both_open = U.T @ U

    triple_mean = np.zeros(len(cols) - 1)
    triple_sq = np.zeros(len(cols) - 1)
    triple_hits = np.zeros(len(cols) - 1)
    adjacent = np.diff(ks) == 1
    if mode == 'complete' and hitmap is not None:
        gaps = np.stack([m.gaps if m.gaps is not None else np.full(2 ** n, np.nan) for m in matrices])
        for i in np.flatnonzero(adjacent):
            k = ks[i]
            open_ = (U[:, i] > 0) & (U[:, i + 1] > 0)
            if not open_.any() or k < 2:
                continue
            t = adjacent_from_gaps(gaps[open_, k - 2], gaps[open_, k - 1], gaps[open_, k], hitmap)
            triple_mean[i] = t.sum() / S
            triple_sq[i] = (t ** 2).sum() / S
            triple_hits[i] = (t > 0).sum()
            both_open[i, i + 1] -= open_.sum()
            both_open[i + 1, i] -= open_.sum()
    idx = np.arange(len(cols) - 1)
    for mat, extra in ((joint, triple_mean), (joint_sq, triple_sq), (hits, triple_hits)):
        mat[idx, idx + 1] += extra
        mat[idx + 1, idx] += extra

    expo = hitmap.p if hitmap is not None else None
    rows = []
    for a_i in range(len(ks)):
        for b_i in range(a_i + 1, len(ks)):
            j, k = int(ks[a_i]), int(ks[b_i])
            p = float(joint[a_i, b_i])
            var = max(float(joint_sq[a_i, b_i]) - p * p, 0.0)
            missing = float(both_open[a_i, b_i]) / S
            low = hits[a_i, b_i] < min_joint or missing > 0.01
            row = {'j': j, 'k': k, 'p_hat': p, 'stderr': float(np.sqrt(var / S)),
                   'joint_hits': int(hits[a_i, b_i]), 'missing': missing, 'low_confidence': bool(low)}
            if expo is not None:
                row['normalized'] = p * 2.0 ** (expo * n) * (k - j) ** expo
            rows.append(row)
    frame = pd.DataFrame(rows)

    confident = frame[~frame['low_confidence']] if len(frame) else frame
    bound = float(confident['normalized'].max()) if expo is not None and len(confident) else float('nan')
    low_count = int(frame['low_confidence'].sum()) if len(frame) else 0
    if low_count:
        logger.warning(f"第 {n} 层有 {low_count} 个低可信格子")
    return SecondMomentTable(frame=frame, matrix=joint, cells=ks, bound=bound, low_confidence=low_count)
