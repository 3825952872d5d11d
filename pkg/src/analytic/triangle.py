"""
目标三角形与重心 / 三线坐标

F(z) 在三角形 (v0, v1, v∞) 中的重心坐标就是三个吞没概率：
    c0 = P(T_z < T_1), c1 = P(T_z = T_1), c∞ = P(T_z > T_1)
"""
import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from analytic.hitmap import HitMap, map_F, vertex_infinity
from loewner.params import SleParams
from utils.errors import ConsistencyError, DomainError, GeometryError, OutOfRegimeError

logger = logging.getLogger("sle.analytic")

# 重心坐标允许的数值越界
BARYCENTRIC_SLACK = 1e-7


@dataclass(frozen=True)
class Barycentric:
    """三个吞没概率"""
    c0: float
    c1: float
    cinf: float

    @property
    def total(self) -> float:
        return self.c0 + self.c1 + self.cinf


@dataclass(frozen=True)
class Triangle:
    """
    顶点与三条边

    sides[j] = (A, B, C)：边 S_j（顶点 v_j 的对边）所在直线 A*u + B*v + C = 0，
    (A, B) 为单位法向且指向三角形内部。
    """
    v0: complex
    v1: complex
    vinf: complex
    sides: Tuple[Tuple[float, float, float], ...]
    D: Tuple[float, float, float]

    @property
    def vertices(self) -> Tuple[complex, complex, complex]:
        return (self.v0, self.v1, self.vinf)

    def angle(self, j: int) -> float:
        """顶点 j 处的内角"""
        v = self.vertices
        here, p, q = v[j], v[(j + 1) % 3], v[(j + 2) % 3]
        return abs(np.angle((p - here) / (q - here)))

    def side_distance(self, w: complex, j: int) -> float:
        """点 w 到边 S_j 的有向距离（内部为正）"""
        A, B, C = self.sides[j]
        return A * w.real + B * w.imag + C


def _side(p: complex, q: complex, opposite: complex) -> Tuple[float, float, float]:
    normal = complex(-(q - p).imag, (q - p).real)
    length = abs(normal)
    if length < 1e-14:
        raise GeometryError("三角形的边长为 0")
    A, B = normal.real / length, normal.imag / length
    C = -(A * p.real + B * p.imag)
    if A * opposite.real + B * opposite.imag + C < 0:
        A, B, C = -A, -B, -C
    return (A, B, C)


def new_triangle(hitmap: HitMap) -> Triangle:
    """由 F(0) = 1, F(1) = 0, F(∞) 构造三角形"""
    v0, v1, vinf = 1 + 0j, 0j, vertex_infinity(hitmap)
    area = 0.5 * abs(((v1 - v0).conjugate() * (vinf - v0)).imag)
    if area < 1e-12:
        raise GeometryError(f"三角形退化: 面积 {area:.3e}")
    sides = (_side(v1, vinf, v0), _side(vinf, v0, v1), _side(v0, v1, vinf))
    vertices = (v0, v1, vinf)
    heights = []
    for j, side in enumerate(sides):
        A, B, C = side
        heights.append(A * vertices[j].real + B * vertices[j].imag + C)
    D = tuple(1.0 / h for h in heights)
    logger.debug(f"三角形: F(∞) = {vinf:.6f}, 面积 {area:.6f}")
    return Triangle(v0=v0, v1=v1, vinf=vinf, sides=sides, D=D)


def trilinear_constants(triangle: Triangle) -> Tuple[float, float, float]:
    """
    (D_0, D_1, D_∞)：每个吞没概率等于 D_j * dist(F(z), S_j)

    D_j = 1/dist(v_j, S_j)
    """
    out = []
    for j, v in enumerate(triangle.vertices):
        height = triangle.side_distance(v, j)
        if height <= 1e-14:
            raise GeometryError(f"顶点 {j} 到对边的距离为 0")
        out.append(1.0 / height)
    return tuple(out)


def barycentric(z, triangle: Triangle, hitmap: HitMap) -> Barycentric:
    """
    z 处的三个吞没概率

    Args:
        z: 闭上半平面中的点，不能是 0 或 1
        triangle: 目标三角形
        hitmap: HitMap

    Returns:
        Barycentric，三个分量之和为 1
    """
    z = complex(z)
    if z == 0 or z == 1:
        raise DomainError(f"z 不能是三角形顶点的原像: {z}")
    if z.imag < 0:
        raise DomainError(f"z 必须在闭上半平面中: {z}")

    w = map_F(z, hitmap)
    v0, v1, vinf = triangle.vertices
    system = np.array([
        [v0.real, v1.real, vinf.real],
        [v0.imag, v1.imag, vinf.imag],
        [1.0, 1.0, 1.0],
    ])
    c = np.linalg.solve(system, np.array([w.real, w.imag, 1.0]))
    if np.any(c < -BARYCENTRIC_SLACK) or np.any(c > 1 + BARYCENTRIC_SLACK):
        raise ConsistencyError(f"F({z}) = {w} 落在三角形之外: {c}")
    c = np.clip(c, 0.0, 1.0)
    return Barycentric(c0=float(c[0]), c1=float(c[1]), cinf=float(c[2]))


def near_point_asymptote(x: float, y: float, r: float, theta: float, params: SleParams) -> float:
    """
    点 x + r e^{iθ} 先于 y 被吞没的概率的渐近形状（不含常数）

        y^{1-2a} x^{-2a} (x-y)^{4a-2} r sinθ
    """
    if not (0 < y < x):
        raise DomainError(f"要求 0 < y < x: y={y}, x={x}")
    if not (0 <= theta <= math.pi):
        raise DomainError(f"theta 必须在 [0, π] 内: {theta}")
    if r < 0:
        raise DomainError(f"r 必须非负: {r}")
    if r > (x - y) / 4:
        raise OutOfRegimeError(f"r={r} 超出适用范围 r <= (x-y)/4 = {(x - y) / 4}")
    a = params.a
    return y ** (1 - 2 * a) * x ** (-2 * a) * (x - y) ** (4 * a - 2) * r * math.sin(theta)


def point_before_prob(x: float, y: float, r: float, theta: float, hitmap: HitMap,
                      triangle: Triangle) -> float:
    """精确值 P(T_{x + r e^{iθ}} < T_y)，按 y 缩放后取 c0"""
    z = complex(x + r * math.cos(theta), r * math.sin(theta)) / y
    return barycentric(z, triangle, hitmap).c0
