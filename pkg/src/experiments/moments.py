"""
二进网格上的维数与一、二阶矩实验

一次扫描跟踪最高层网格 k/2^n_max 的全部点，较低层级直接从同一扫描中取子列，
因此各层的命中矩阵互相一致。
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
import pandas as pd

from analytic.hitmap import expected_hit_count, new_hitmap
from experiments.campaigns import CENSOR_WARNING, base_record, runner_for
from experiments.config import ExperimentConfig
from experiments.dimension import (MIN_SAMPLES, DimensionFit, SecondMomentTable, dimension_fit,
                                   first_moment_profile, second_moment_table)
from experiments.hitmatrix import HitMatrix, grid_points, hit_matrices
from loewner.ensemble import SweepResult

logger = logging.getLogger("sle.dimension")


def sweep_grid(cfg: ExperimentConfig, n: int) -> SweepResult:
    """扫描第 n 层网格的全部点"""
    pts = grid_points(n)
    # 较低层级的点对在顶层网格中的列距都是 2 的幂
    settings = cfg.sweep_settings(pts, strides=tuple(2 ** m for m in range(n)))
    return runner_for(cfg).sweep(pts, cfg.params.a, settings, cfg.seed, cfg.samples)


def _censored_cells(matrices: List[HitMatrix]) -> float:
    return float(np.mean([m.censored.mean() for m in matrices]))


def _censor_warnings(n: int, censored: float) -> List[str]:
    """未确定区间比例超过 CENSOR_WARNING 时返回警告"""
    if censored <= CENSOR_WARNING:
        return []
    msg = f"第 {n} 层有 {censored:.2%} 的区间在 horizon 内未确定"
    logger.warning(msg)
    return [msg]


@dataclass
class DimensionReport:
    fit: DimensionFit
    target: float
    expected: Dict[int, float]            # 精确 E[N_n]
    censored: float = 0.0
    warnings: List[str] = field(default_factory=list)

    def to_records(self, cfg: ExperimentConfig) -> List[dict]:
        out = []
        for n, mean, err in zip(self.fit.levels, self.fit.counts, self.fit.count_stderr):
            record = base_record(cfg, 'dimension')
            record.update({'level': n, 'estimate': mean, 'stderr': err,
                           'exact_or_bound': self.expected[n], 'censored': self.censored})
            out.append(record)
        summary = base_record(cfg, 'dimension-fit')
        summary.update({'slope': self.fit.slope, 'slope_stderr': self.fit.slope_stderr,
                        'intercept': self.fit.intercept, 'target': self.target,
                        'levels': self.fit.levels, 'dropped': self.fit.dropped})
        out.append(summary)
        return out


def dimension_campaign(cfg: ExperimentConfig, min_samples: int = MIN_SAMPLES) -> DimensionReport:
    """
    levels 范围内各层 N_n 的均值与 log2 斜率

    Args:
        cfg: 实验配置（levels、samples、dt）
        min_samples: 每层最少样本数

    Returns:
        DimensionReport，目标斜率为 s = 2 - 4a
    """
    lo, hi = cfg.levels
    hitmap = new_hitmap(cfg.params)
    sweep = sweep_grid(cfg, hi)
    matrices = {n: hit_matrices(sweep, n, hitmap, cfg.censoring) for n in range(lo, hi + 1)}
    fit = dimension_fit(matrices, min_samples=min_samples)
    expected = {n: expected_hit_count(n, hitmap) for n in range(lo, hi + 1)}
    censored = _censored_cells(matrices[hi])

    warnings = []
    if fit.dropped:
        warnings.append(f"维数拟合剔除了计数为 0 的层级 {fit.dropped}")
    warnings += _censor_warnings(hi, censored)
    logger.info(f"第 {hi} 层未确定区间比例 {censored:.4f}")
    for n in fit.levels:
        logger.info(f"第 {n} 层: E[N_n] 估计 {fit.counts[fit.levels.index(n)]:.3f}, 精确 {expected[n]:.3f}")
    target = cfg.params.s
    logger.info(f"维数估计 {fit.slope:.4f} ± {fit.slope_stderr:.4f}（目标 {target:.4f}）")
    return DimensionReport(fit=fit, target=target, expected=expected, censored=censored,
                           warnings=warnings)


@dataclass
class SecondMomentReport:
    level: int
    table: SecondMomentTable
    profile: pd.DataFrame
    censored: float = 0.0
    warnings: List[str] = field(default_factory=list)

    @property
    def bound(self) -> float:
        return self.table.bound

    def to_records(self, cfg: ExperimentConfig) -> List[dict]:
        out = []
        for row in self.profile.itertuples():
            record = base_record(cfg, 'first-moment')
            record.update({'level': self.level, 'k': row.k, 'estimate': row.p_hat, 'stderr': row.stderr,
                           'ci_lo': row.ci_lo, 'ci_hi': row.ci_hi, 'exact_or_bound': row.exact,
                           'above_floor': row.above_floor, 'censored': self.censored})
            out.append(record)
        for row in self.table.frame.itertuples():
            record = base_record(cfg, 'second-moment')
            record.update({'level': self.level, 'j': row.j, 'k': row.k, 'estimate': row.p_hat,
                           'stderr': row.stderr, 'normalized': row.normalized,
                           'joint_hits': row.joint_hits, 'missing': row.missing,
                           'low_confidence': row.low_confidence})
            out.append(record)
        summary = base_record(cfg, 'second-moment-bound')
        summary.update({'level': self.level, 'bound': self.table.bound, 'C1': self.profile.attrs['C1'],
                        'low_confidence': self.table.low_confidence})
        out.append(summary)
        return out


def second_moment_campaign(cfg: ExperimentConfig) -> SecondMomentReport:
    """
    第 grid_level 层内部区间的一阶矩剖面与两两联合命中统计

    Args:
        cfg: 实验配置（grid_level、delta_margin、censoring）
    """
    n = cfg.grid_level
    hitmap = new_hitmap(cfg.params)
    sweep = sweep_grid(cfg, n)
    matrices = hit_matrices(sweep, n, hitmap, cfg.censoring)
    profile = first_moment_profile(matrices, n, cfg.delta_margin, hitmap)
    table = second_moment_table(matrices, n, cfg.delta_margin, hitmap, cfg.censoring)
    censored = _censored_cells(matrices)

    warnings = _censor_warnings(n, censored)
    if table.low_confidence:
        warnings.append(f"第 {n} 层有 {table.low_confidence} 个低可信格子")
    below = int((~profile['above_floor']).sum())
    if below:
        msg = f"第 {n} 层有 {below} 个区间的置信上界低于 C1 2^(-(1-s)n)"
        logger.warning(msg)
        warnings.append(msg)
    logger.info(f"二阶矩: 第 {n} 层归一化统计量上界 {table.bound:.4f}, C1 = {profile.attrs['C1']:.4f}")
    return SecondMomentReport(level=n, table=table, profile=profile, censored=censored,
                              warnings=warnings)
