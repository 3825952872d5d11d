"""
Schwarz–Christoffel 映射 F 与命中概率

    F(z) = c_F ∫_0^{1-z} ξ^{4a-2} (1-ξ)^{-2a} dξ,   c_F = Γ(2a) / (Γ(1-2a) Γ(4a-1))

积分路径取 0 到 1-z 的直线段。F 把上半平面映到以 F(0)=1, F(1)=0, F(∞) 为顶点的三角形，
顶点 F(1) 处的内角为 (4a-1)π。沿直线段从 (0, 1) 连续延拓时三角形落在下半平面，
F(∞) = exp(-i(4a-1)π)。

实轴上用正则化不完全 Beta 函数的闭式，内部点用带端点权重的自适应积分。
"""
import cmath
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import integrate, special

from loewner.params import SleParams
from utils.errors import DomainError, ConsistencyError, ParameterError, QuadratureError

logger = logging.getLogger("sle.analytic")

# 积分目标精度与可接受的最大误差估计
QUAD_TOLERANCE = 1e-13
QUAD_MAX_ERROR = 1e-9


@dataclass(frozen=True)
class HitMap:
    """一组 a 对应的 F 及其归一化常数"""
    a: float
    c_F: float
    tolerance: float = QUAD_TOLERANCE
    max_error: float = QUAD_MAX_ERROR
    limit: int = 200

    @property
    def p(self) -> float:
        """ξ 端点指数加一：4a-1"""
        return 4.0 * self.a - 1.0

    @property
    def q(self) -> float:
        """1-ξ 端点指数加一：1-2a"""
        return 1.0 - 2.0 * self.a

    def F(self, z) -> complex:
        return map_F(z, self)

    def F_real(self, v) -> np.ndarray:
        """F 在 [0, 1] 上的值（向量化，实数）"""
        v = np.asarray(v, dtype=float)
        if np.any((v < 0) | (v > 1)):
            raise DomainError("F_real 只接受 [0, 1] 内的参数")
        return special.betainc(self.p, self.q, 1.0 - v)


def new_hitmap(params, tolerance: float = QUAD_TOLERANCE) -> HitMap:
    """
    构造 HitMap

    Args:
        params: SleParams 或直接给出 a
        tolerance: 积分目标精度

    Returns:
        HitMap，要求 1/4 < a < 1/2
    """
    a = params.a if isinstance(params, SleParams) else float(params)
    if not (0.25 < a < 0.5):
        raise ParameterError(f"a={a} 不在 (1/4, 1/2) 内（即 kappa 不在 (4, 8) 内）")
    c_F = math.gamma(2 * a) / (math.gamma(1 - 2 * a) * math.gamma(4 * a - 1))
    return HitMap(a=a, c_F=c_F, tolerance=tolerance)


def _quad(func, lo: float, hi: float, hitmap: HitMap, **kwargs) -> float:
    value, err = integrate.quad(func, lo, hi, epsabs=hitmap.tolerance, epsrel=hitmap.tolerance,
                                limit=hitmap.limit, **kwargs)
    if not math.isfinite(value) or err > hitmap.max_error:
        raise QuadratureError("F 的数值积分未收敛", err)
    return value


def _interior(z: complex, hitmap: HitMap) -> complex:
    """z 不在实轴上：w = 1-z，F = c_F w^p ∫_0^1 t^{p-1} (1 - t w)^{-2a} dt"""
    p, q = hitmap.p, hitmap.q
    w = 1.0 - z
    arg = math.atan2(w.imag, w.real)
    if w.imag == 0 and w.real < 0:
        arg = -math.pi
    w_p = abs(w) ** p * cmath.exp(1j * p * arg)

    def kernel(t):
        return (1.0 - t * w) ** (q - 1.0)

    # 1 - t w 在 t* = Re(1/w) 附近接近 0（z 贴近负实轴时）
    pieces = [(0.0, 1.0)]
    if z.real < 0:
        t_star = (1.0 / w).real
        if 0.0 < t_star < 1.0:
            pieces = [(0.0, t_star), (t_star, 1.0)]

    total = 0j
    for lo, hi in pieces:
        if lo == 0.0:
            opts = {'weight': 'alg', 'wvar': (p - 1.0, 0.0)}
            re = _quad(lambda t: kernel(t).real, lo, hi, hitmap, **opts)
            im = _quad(lambda t: kernel(t).imag, lo, hi, hitmap, **opts)
        else:
            re = _quad(lambda t: (t ** (p - 1.0) * kernel(t)).real, lo, hi, hitmap)
            im = _quad(lambda t: (t ** (p - 1.0) * kernel(t)).imag, lo, hi, hitmap)
        total += re + 1j * im
    return hitmap.c_F * w_p * total


def map_F(z, hitmap: HitMap) -> complex:
    """
    F(z)，z 在闭上半平面中

    Args:
        z: 复数（实数也可），Im z >= 0
        hitmap: HitMap

    Returns:
        F(z)；z 在 [0, 1] 上时为实数
    """
    z = complex(z)
    if z.imag < 0:
        raise DomainError(f"z 必须在闭上半平面中: {z}")
    p, q = hitmap.p, hitmap.q

    if z.imag == 0:
        x = z.real
        if 0.0 <= x <= 1.0:
            return complex(special.betainc(p, q, 1.0 - x))
        if x > 1.0:
            r = x - 1.0
            return cmath.exp(-1j * math.pi * p) * special.betainc(p, q, r / (1.0 + r))
        # x < 0：先到 ξ = 1 再沿 (1, 1-x) 走过奇点
        tail = special.beta(q, q) * (1.0 - special.betainc(q, q, 1.0 / (1.0 - x)))
        return 1.0 + hitmap.c_F * cmath.exp(-2j * math.pi * hitmap.a) * tail

    return _interior(z, hitmap)


def vertex_infinity(hitmap: HitMap) -> complex:
    """
    F(∞) = lim_{R→∞} F(1+R) = e^{-i(4a-1)π}

    F(1+R) = e^{-i(4a-1)π} I_{R/(1+R)}(p, q)，R → ∞ 时正则化不完全 Beta 函数趋于 1。
    """
    return cmath.exp(-1j * math.pi * hitmap.p)


def hit_prob_interval(y: float, x: float, hitmap: HitMap) -> float:
    """
    曲线命中 [y, x] 的概率 P(T_x > T_y) = F(y/x)

    y == x 时返回 0（退化区间）。
    """
    if not (0 < y <= x):
        raise DomainError(f"要求 0 < y < x: y={y}, x={x}")
    if y == x:
        logger.info(f"退化区间 [{y}, {x}]，命中概率为 0")
        return 0.0
    return float(hitmap.F_real(y / x))


def conditional_hit_prob(g_x: float, g_y: float, u: float, hitmap: HitMap) -> float:
    """
    停时处的条件命中概率 F((g_y - U)/(g_x - U))

    Args:
        g_x: g_τ(x)
        g_y: g_τ(y)
        u: 驱动值 B_τ
        hitmap: HitMap
    """
    if not (u < g_y < g_x):
        raise DomainError(f"要求 u < g_y < g_x: u={u}, g_y={g_y}, g_x={g_x}")
    return float(hitmap.F_real((g_y - u) / (g_x - u)))


def adjacent_two_interval(x1: float, x2: float, x3: float, hitmap: HitMap) -> float:
    """
    P(T_{x1} < T_{x2} < T_{x3}) = F(x1/x2) + F(x2/x3) - F(x1/x3)
    """
    if not (0 < x1 < x2 < x3):
        raise DomainError(f"要求 0 < x1 < x2 < x3: ({x1}, {x2}, {x3})")
    f = hitmap.F_real([x1 / x2, x2 / x3, x1 / x3])
    value = float(f[0] + f[1] - f[2])
    if value < -1e-9 or value > 1 + 1e-9:
        raise ConsistencyError(f"相邻双区间概率越界: {value}")
    return min(max(value, 0.0), 1.0)


def adjacent_from_gaps(g1, g2, g3, hitmap: HitMap) -> np.ndarray:
    """三点都存活时的条件相邻双区间概率（按 gap 计算，向量化）"""
    g1, g2, g3 = (np.asarray(g, dtype=float) for g in (g1, g2, g3))
    value = hitmap.F_real(g1 / g2) + hitmap.F_real(g2 / g3) - hitmap.F_real(g1 / g3)
    return np.clip(value, 0.0, 1.0)


def asympt_const(a: float) -> float:
    """lim_{v→1} F(v)/(1-v)^{4a-1} = Γ(2a) / ((4a-1) Γ(1-2a) Γ(4a-1))"""
    if not (0.25 < a < 0.5):
        raise ParameterError(f"a={a} 不在 (1/4, 1/2) 内")
    return math.gamma(2 * a) / ((4 * a - 1) * math.gamma(1 - 2 * a) * math.gamma(4 * a - 1))


def expected_hit_count(n: int, hitmap: HitMap) -> float:
    """E[N_n] = Σ_{k=1}^{2^n} F((k-1)/k)"""
    k = np.arange(1, 2 ** n + 1, dtype=float)
    return float(hitmap.F_real((k - 1) / k).sum())


def f_table(hitmap: HitMap, grid: Sequence[float]) -> pd.DataFrame:
    """(v, F(v)) 表，v 在 [0, 1] 内"""
    v = np.asarray(grid, dtype=float)
    return pd.DataFrame({'v': v, 'F': hitmap.F_real(v)})
