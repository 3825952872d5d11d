"""
调和测度闭式

- 上半平面中区间 [x1, x2] 的调和测度 (arg(z-x2) - arg(z-x1))/π，端点可以是 ±inf
- 带形 {0 < Im z < π} 从 iθ 出发落在底边的概率 (π-θ)/π
"""
import cmath
import math
from typing import Tuple

from utils.errors import DomainError, OutOfRegimeError

STRIP_HEIGHT = math.pi


def _arg_to(z: complex, x: float) -> float:
    """arg(z - x)，x 可以是 ±inf（取极限）"""
    if x == math.inf:
        return math.pi
    if x == -math.inf:
        return 0.0
    return cmath.phase(z - x)


def hm_halfplane_interval(z: complex, x1: float, x2: float) -> float:
    """
    上半平面中从 z 出发的布朗运动落在 [x1, x2] 上的概率

    Args:
        z: Im z > 0
        x1: 左端点（可为 -inf）
        x2: 右端点（可为 +inf）
    """
    z = complex(z)
    if z.imag <= 0:
        raise DomainError(f"z 必须在上半平面内部: {z}")
    if not x1 < x2:
        raise DomainError(f"要求 x1 < x2: x1={x1}, x2={x2}")
    return (_arg_to(z, x2) - _arg_to(z, x1)) / math.pi


def hm_strip_bottom(theta: float) -> float:
    """带形中从 iθ 出发先碰到实轴的概率 (π-θ)/π"""
    if not (0 <= theta <= STRIP_HEIGHT):
        raise DomainError(f"theta 必须在 [0, π] 内: {theta}")
    return (math.pi - theta) / math.pi


def hm_strip_via_halfplane(z: complex) -> float:
    """用 exp 把带形映到上半平面：底边对应 (0, +inf)"""
    z = complex(z)
    if not (0 < z.imag < STRIP_HEIGHT):
        raise DomainError(f"z 必须在带形内部: {z}")
    return hm_halfplane_interval(cmath.exp(z), 0.0, math.inf)


def arg_interval_bound(z: complex, y: float, eps: float, x: float) -> Tuple[float, float]:
    """
    arg(z-y-eps) - arg(z-y) = arg(1 - eps/(z-y)) 及其上界 (16/3) eps Im z / (x-y)^2

    Args:
        z: |z - x| <= (x-y)/4 且 Im z >= 0
        y: 左端点
        eps: 0 < eps <= (x-y)/2
        x: 右端点

    Returns:
        (lhs, rhs)
    """
    z = complex(z)
    if not y < x:
        raise DomainError(f"要求 y < x: y={y}, x={x}")
    if z.imag < 0:
        raise DomainError(f"z 必须在闭上半平面中: {z}")
    span = x - y
    if abs(z - x) > span / 4 * (1 + 1e-12):
        raise OutOfRegimeError(f"|z - x| = {abs(z - x)} 超过 (x-y)/4 = {span / 4}")
    if not (0 < eps <= span / 2 * (1 + 1e-12)):
        raise OutOfRegimeError(f"eps={eps} 超出 (0, (x-y)/2]")
    lhs = cmath.phase(1 - eps / (z - y))
    rhs = 16.0 / 3.0 * eps * z.imag / span ** 2
    return lhs, rhs
