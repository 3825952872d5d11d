"""
布朗运动出口采样器

二维高斯步，标准差与到边界的距离成正比：
    std = max(ratio * dist, step)
离边界 step/ratio 以内退化为固定步长 step。某一步的线段穿过边界时，
取线段与边界的交点作为出口点。

区域：
- halfplane   上半平面，出口标签 'real'
- strip       带形 0 < Im z < π，标签 'bottom' / 'top'
- slit-strip  带形去掉竖直缝 [0, iφ]，另有标签 'slit'
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from harmonic.formulas import STRIP_HEIGHT
from loewner.driver import NormalStreams
from utils.errors import DomainError, SamplerError

logger = logging.getLogger("sle.harmonic")

DOMAINS = ('halfplane', 'strip', 'slit-strip')
DEFAULT_RATIO = 0.2
DEFAULT_MAX_STEPS = 100_000

# 两个坐标的随机流用途号（0 为驱动增量，1 为实验配置抽样）
X_STREAM = 2
Y_STREAM = 3


@dataclass(frozen=True)
class ExitSample:
    """一次出口采样"""
    label: str
    point: complex
    steps: int


def _check_start(domain: str, z: complex, slit: float):
    if domain not in DOMAINS:
        raise DomainError(f"未知区域: {domain}，可选 {DOMAINS}")
    if z.imag <= 0:
        raise DomainError(f"起点必须在区域内部: {z}")
    if domain != 'halfplane' and z.imag >= STRIP_HEIGHT:
        raise DomainError(f"起点必须在带形内部: {z}")
    if domain == 'slit-strip':
        if not (0 < slit < STRIP_HEIGHT):
            raise DomainError(f"缝高必须在 (0, π) 内: {slit}")
        if z.real == 0 and z.imag <= slit:
            raise DomainError(f"起点落在缝上: {z}")


def _distance(domain: str, x: np.ndarray, y: np.ndarray, slit: float) -> np.ndarray:
    d = y.copy()
    if domain != 'halfplane':
        d = np.minimum(d, STRIP_HEIGHT - y)
    if domain == 'slit-strip':
        dy = np.maximum(y - slit, 0.0)
        d = np.minimum(d, np.hypot(x, dy))
    return d


def brownian_exits(domain: str, z: complex, step: float, seed: int, count: int, start: int = 0,
                   slit: float = math.pi / 2, ratio: float = DEFAULT_RATIO,
                   max_steps: int = DEFAULT_MAX_STEPS) -> List[ExitSample]:
    """
    批量出口采样，第 i 个样本使用随机流 (seed, start + i)

    Args:
        domain: 区域名
        z: 起点
        step: 边界附近的步长
        seed: 随机种子
        count: 样本数
        start: 第一个样本序号
        slit: slit-strip 的缝高 φ
        ratio: 远离边界时步长与距离之比
        max_steps: 单个样本的步数上限

    Returns:
        ExitSample 列表
    """
    z = complex(z)
    _check_start(domain, z, slit)
    if not step > 0:
        raise DomainError(f"step 必须为正: {step}")

    indices = np.arange(start, start + count)
    sx = NormalStreams(seed, indices, purpose=X_STREAM)
    sy = NormalStreams(seed, indices, purpose=Y_STREAM)

    x = np.full(count, z.real)
    y = np.full(count, z.imag)
    steps = np.zeros(count, dtype=np.int64)
    label = np.full(count, '', dtype=object)
    ex = np.full(count, np.nan)
    ey = np.full(count, np.nan)
    live = np.ones(count, dtype=bool)

    while live.any():
        if steps[live].max() >= max_steps:
            raise SamplerError(f"出口采样在 {max_steps} 步内没有结束（区域 {domain}）")
        dx_all = sx.next()
        dy_all = sy.next()
        idx = np.flatnonzero(live)
        px, py = x[idx], y[idx]
        std = np.maximum(ratio * _distance(domain, px, py, slit), step)
        qx = px + std * dx_all[idx]
        qy = py + std * dy_all[idx]
        steps[idx] += 1

        # 线段参数 s ∈ (0, 1]，取最早的穿越
        s_best = np.full(len(idx), np.inf)
        tag = np.full(len(idx), '', dtype=object)

        cross = qy <= 0
        s = np.where(cross, py / np.where(py - qy == 0, 1.0, py - qy), np.inf)
        better = s < s_best
        s_best[better], tag[better] = s[better], 'real' if domain == 'halfplane' else 'bottom'

        if domain != 'halfplane':
            cross = qy >= STRIP_HEIGHT
            s = np.where(cross, (STRIP_HEIGHT - py) / np.where(qy - py == 0, 1.0, qy - py), np.inf)
            better = s < s_best
            s_best[better], tag[better] = s[better], 'top'

        if domain == 'slit-strip':
            flips = (px > 0) != (qx > 0)
            s = np.where(flips, px / np.where(px - qx == 0, 1.0, px - qx), np.inf)
            y_at = py + s * (qy - py)
            s = np.where(flips & (y_at >= 0) & (y_at <= slit), s, np.inf)
            better = s < s_best
            s_best[better], tag[better] = s[better], 'slit'

        out = np.isfinite(s_best)
        if out.any():
            k = idx[out]
            sb = s_best[out]
            ex[k] = px[out] + sb * (qx[out] - px[out])
            ey[k] = py[out] + sb * (qy[out] - py[out])
            label[k] = tag[out]
            live[k] = False
        x[idx[~out]] = qx[~out]
        y[idx[~out]] = qy[~out]

    logger.debug(f"出口采样完成: 区域 {domain}, 样本 {count}, 平均步数 {steps.mean():.1f}")
    return [ExitSample(label=str(label[i]), point=complex(ex[i], ey[i]), steps=int(steps[i]))
            for i in range(count)]


def brownian_exit(domain: str, z: complex, step: float, seed: int, index: int = 0,
                  slit: float = math.pi / 2, ratio: float = DEFAULT_RATIO,
                  max_steps: int = DEFAULT_MAX_STEPS) -> ExitSample:
    """单个样本的出口"""
    return brownian_exits(domain, z, step, seed, 1, start=index, slit=slit, ratio=ratio,
                          max_steps=max_steps)[0]


def exit_frequency(samples: List[ExitSample], labels, lo: Optional[float] = None,
                   hi: Optional[float] = None) -> float:
    """标签属于 labels（且出口横坐标落在 [lo, hi] 内）的比例"""
    if isinstance(labels, str):
        labels = (labels,)
    hits = 0
    for s in samples:
        if s.label not in labels:
            continue
        if lo is not None and s.point.real < lo:
            continue
        if hi is not None and s.point.real > hi:
            continue
        hits += 1
    return hits / len(samples)
