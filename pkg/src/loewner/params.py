"""
SLE 参数

采用 a = 2/kappa 的参数化，Loewner 方程为 ∂_t g_t(z) = a / (g_t(z) - B_t)，
驱动函数为标准布朗运动。
"""
from dataclasses import dataclass

from utils.errors import ParameterError

# 命中实验要求 4 < kappa < 8
HITTING_KAPPA_RANGE = (4.0, 8.0)


@dataclass(frozen=True)
class SleParams:
    """SLE(kappa) 参数及其导出指数"""
    kappa: float
    a: float
    s: float      # 目标维数 2 - 4a
    beta: float   # 边界指数 4a - 1

    @property
    def in_hitting_regime(self) -> bool:
        """是否满足 1/4 < a < 1/2"""
        lo, hi = HITTING_KAPPA_RANGE
        return lo < self.kappa < hi

    def require_hitting_regime(self) -> "SleParams":
        """命中类实验的入口检查"""
        if not self.in_hitting_regime:
            lo, hi = HITTING_KAPPA_RANGE
            raise ParameterError(
                f"kappa={self.kappa} 不适用于命中实验，允许区间为 ({lo:g}, {hi:g})"
            )
        return self

    def to_dict(self) -> dict:
        return {'kappa': self.kappa, 'a': self.a, 's': self.s, 'beta': self.beta}


def new_params(kappa: float) -> SleParams:
    """
    由 kappa 构造参数

    Args:
        kappa: SLE 参数，要求 0 < kappa <= 8

    Returns:
        SleParams，其中 a = 2/kappa, s = 2 - 4a, beta = 4a - 1
    """
    kappa = float(kappa)
    if not (0.0 < kappa <= 8.0):
        raise ParameterError(f"kappa={kappa} 超出范围，允许区间为 (0, 8]")

    a = 2.0 / kappa
    return SleParams(kappa=kappa, a=a, s=2.0 - 4.0 * a, beta=4.0 * a - 1.0)
