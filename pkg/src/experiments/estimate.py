"""
估计量与置信区间

- 纯 0/1 结果：Wilson 区间，stderr = sqrt(p(1-p)/n)
- 经截断补全后的 [0, 1] 实值结果：样本标准误与正态区间
"""
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from utils.errors import DomainError

CONFIDENCE = 0.99


def z_value(confidence: float = CONFIDENCE) -> float:
    return float(stats.norm.ppf(0.5 + confidence / 2))


@dataclass(frozen=True)
class Estimate:
    """带 99% 置信区间的估计"""
    value: float
    stderr: float
    n: int
    ci_lo: float
    ci_hi: float
    method: str = 'wilson'

    @property
    def ci(self):
        return (self.ci_lo, self.ci_hi)

    def covers(self, target: float) -> bool:
        return self.ci_lo <= target <= self.ci_hi

    def within(self, target: float, sigmas: float) -> bool:
        """|value - target| <= sigmas * stderr"""
        return abs(self.value - target) <= sigmas * self.stderr

    def to_dict(self) -> dict:
        return asdict(self)


def wilson_estimate(hits: int, n: int, confidence: float = CONFIDENCE) -> Estimate:
    """
    Bernoulli 比例的 Wilson 区间

    Args:
        hits: 成功次数
        n: 试验次数
        confidence: 置信水平
    """
    if n < 1:
        raise DomainError(f"样本数必须 >= 1: {n}")
    if not 0 <= hits <= n:
        raise DomainError(f"成功次数越界: {hits}/{n}")
    z = z_value(confidence)
    p = hits / n
    denom = 1 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return Estimate(value=p, stderr=float(np.sqrt(p * (1 - p) / n)), n=n,
                    ci_lo=float(max(0.0, min(p, center - half))),
                    ci_hi=float(min(1.0, max(p, center + half))), method='wilson')


def mean_estimate(values: Sequence[float], confidence: float = CONFIDENCE) -> Estimate:
    """
    [0, 1] 取值结果的均值估计

    全部为 0/1 时退化为 Wilson 区间。
    """
    v = np.asarray(values, dtype=float)
    n = len(v)
    if n < 1:
        raise DomainError("没有样本")
    if np.all((v == 0) | (v == 1)):
        return wilson_estimate(int(v.sum()), n, confidence)
    mean = float(v.mean())
    stderr = float(v.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    z = z_value(confidence)
    return Estimate(value=mean, stderr=stderr, n=n, ci_lo=mean - z * stderr,
                    ci_hi=mean + z * stderr, method='normal')
