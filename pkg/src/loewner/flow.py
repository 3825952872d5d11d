"""
Loewner 正向流

驱动在每一步内视为常数，点的演化用常驱动精确解：
    gap' = sqrt(gap^2 + 2a*dt)
步末再按驱动跳变重新取基准 gap_new = gap' + u_before - u_after。
导数按同一格式累乘 gap/gap'。
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np

from loewner.driver import DrivingPath
from utils.errors import ConsistencyError, DomainError, ResourceLimitError

logger = logging.getLogger("sle.flow")

# swallow_times_grid 的默认层级上限
GRID_LEVEL_CAP = 16

ALIVE = 'alive'
SWALLOWED = 'swallowed'


def swallow_tol(a: float, dt: float) -> float:
    """吞没阈值 0.1*sqrt(a*dt)（扩散尺度）"""
    return 0.1 * math.sqrt(a * dt)


@dataclass(frozen=True)
class TrackedPoint:
    """实轴上被跟踪的一个点"""
    x0: float
    gap: float            # X_k - U_k
    deriv: float = 1.0    # g'(x0)
    status: str = ALIVE
    step: Optional[int] = None  # 被吞没时的步序号（从 1 开始）

    @property
    def alive(self) -> bool:
        return self.status == ALIVE


@dataclass(frozen=True)
class SwallowTime:
    """吞没时间，censored 表示到 horizon 仍未被吞没"""
    value: float
    step: Optional[int]
    censored: bool
    horizon: float

    @property
    def finite(self) -> bool:
        return not self.censored

    def as_float(self) -> float:
        """截断值按 +inf 处理，便于比较先后"""
        return math.inf if self.censored else self.value


def new_point(x0: float) -> TrackedPoint:
    if not x0 > 0:
        raise DomainError(f"被跟踪点必须在正实轴上: x0={x0}")
    return TrackedPoint(x0=float(x0), gap=float(x0))


def advance_step(point: TrackedPoint, u_before: float, u_after: float, dt: float, a: float,
                 step_index: Optional[int] = None, tol: Optional[float] = None) -> TrackedPoint:
    """
    单步推进一个实轴点

    Args:
        point: 当前状态（必须存活）
        u_before: 步初驱动值（步内保持不变）
        u_after: 步末驱动值
        dt: 步长
        a: 2/kappa
        step_index: 本步序号，用于记录吞没步
        tol: 吞没阈值，默认 0.1*sqrt(a*dt)

    Returns:
        新的 TrackedPoint
    """
    if not point.alive:
        raise DomainError(f"点 {point.x0} 已在第 {point.step} 步被吞没")
    if tol is None:
        tol = swallow_tol(a, dt)

    pre = math.sqrt(point.gap * point.gap + 2.0 * a * dt)
    gap = pre + u_before - u_after
    deriv = point.deriv * point.gap / pre
    if gap <= tol:
        return replace(point, gap=gap, deriv=deriv, status=SWALLOWED, step=step_index)
    return replace(point, gap=gap, deriv=deriv)


@dataclass
class FlowState:
    """一组实轴点在某一时刻的状态（数组形式）"""
    x0: np.ndarray
    gap: np.ndarray
    deriv: np.ndarray
    swallow_step: np.ndarray   # -1 表示未被吞没
    swallow_time: np.ndarray   # 未被吞没为 inf
    time: float

    @property
    def alive(self) -> np.ndarray:
        return self.swallow_step < 0


def flow_points(driver: DrivingPath, x0, a: float, t: Optional[float] = None,
                tol: Optional[float] = None) -> FlowState:
    """
    沿驱动把一组正实数点推进到时刻 t（默认整条路径）

    被吞没的集合始终是按 x0 排列的前缀：同一步里某点被吞没时，
    所有更靠左的存活点一起被吞没。
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    if np.any(x <= 0):
        raise DomainError("被跟踪点必须在正实轴上")
    if tol is None:
        tol = swallow_tol(a, driver.dt)

    knots = driver.knots
    values = driver.values
    t_stop = driver.horizon if t is None else float(t)
    if t_stop < 0:
        raise DomainError(f"时刻必须非负: t={t_stop}")

    gap = x.copy()
    deriv = np.ones_like(x)
    swallow_step = np.full(len(x), -1, dtype=np.int64)
    swallow_time = np.full(len(x), np.inf)
    alive = np.ones(len(x), dtype=bool)
    reached = 0.0

    for k in range(driver.steps):
        t0 = knots[k]
        if t0 >= t_stop or not alive.any():
            break
        t1 = knots[k + 1]
        u0 = values[k]
        u1 = values[k + 1]
        if t1 > t_stop:
            t1, u1 = t_stop, u0  # 步内截断，不发生跳变
        h = t1 - t0

        g = gap[alive]
        pre = np.sqrt(g * g + 2.0 * a * h)
        deriv[alive] *= g / pre
        gap[alive] = pre + u0 - u1
        reached = t1

        hit = alive & (gap <= tol)
        if hit.any():
            newly = alive & (x <= x[hit].max())
            swallow_step[newly] = k + 1
            swallow_time[newly] = t1
            alive &= ~newly

    return FlowState(x0=x, gap=gap, deriv=deriv, swallow_step=swallow_step,
                     swallow_time=swallow_time, time=reached)


def flow_until(driver: DrivingPath, x: float, t: float, a: float) -> TrackedPoint:
    """单点推进到时刻 t，返回 TrackedPoint"""
    state = flow_points(driver, [x], a, t=t)
    step = int(state.swallow_step[0])
    if step >= 0:
        return TrackedPoint(x0=float(x), gap=float(state.gap[0]), deriv=float(state.deriv[0]),
                            status=SWALLOWED, step=step)
    return TrackedPoint(x0=float(x), gap=float(state.gap[0]), deriv=float(state.deriv[0]))


def _to_swallow_times(state: FlowState, horizon: float) -> List[SwallowTime]:
    result = []
    for step, value in zip(state.swallow_step, state.swallow_time):
        if step >= 0:
            result.append(SwallowTime(value=float(value), step=int(step), censored=False, horizon=horizon))
        else:
            result.append(SwallowTime(value=horizon, step=None, censored=True, horizon=horizon))
    return result


def swallow_time(driver: DrivingPath, x: float, a: float) -> SwallowTime:
    """
    单点吞没时间

    Returns:
        第一次 gap 低于阈值的时刻；到 horizon 仍存活则为截断值
    """
    if not x > 0:
        raise DomainError(f"x 必须为正: {x}")
    state = flow_points(driver, [x], a)
    return _to_swallow_times(state, driver.horizon)[0]


def swallow_times_grid(driver: DrivingPath, n: int, a: float,
                       level_cap: int = GRID_LEVEL_CAP) -> List[SwallowTime]:
    """
    二进网格 x = k/2^n (k = 1..2^n) 的吞没时间，一次扫描共享同一驱动

    Args:
        driver: 驱动路径
        n: 网格层级
        a: 2/kappa
        level_cap: 层级上限

    Returns:
        按 k 排列、单调不减的 SwallowTime 列表
    """
    if n < 1:
        raise DomainError(f"网格层级必须 >= 1: n={n}")
    if n > level_cap:
        raise ResourceLimitError(f"网格层级 {n} 超过上限 {level_cap}")

    grid = np.arange(1, 2 ** n + 1, dtype=float) / 2 ** n
    state = flow_points(driver, grid, a)
    times = _to_swallow_times(state, driver.horizon)

    ordered = np.array([s.as_float() for s in times])
    if np.any(np.diff(ordered) < 0):
        raise ConsistencyError("吞没时间在网格上不单调")
    censored = sum(1 for s in times if s.censored)
    if censored:
        logger.debug(f"网格 n={n}: {censored}/{len(times)} 个点到 horizon 仍未被吞没")
    return times


# ---------- 复平面正向映射 ----------

def _upper_sqrt(w2: np.ndarray, w: np.ndarray) -> np.ndarray:
    """取虚部非负的平方根；实轴上与原点同号"""
    s = np.sqrt(w2.astype(complex))
    flip = (s.imag < 0) | ((s.imag == 0) & (w.real < 0))
    return np.where(flip, -s, s)


def forward_map(driver: DrivingPath, z, t: float, a: float):
    """
    g_t(z)：把复数点沿驱动推进到时刻 t

    Args:
        driver: 驱动路径
        z: 上半平面中的点（标量或数组）
        t: 时刻
        a: 2/kappa

    Returns:
        g_t(z)，被吞没的点返回 nan
    """
    scalar = np.ndim(z) == 0
    w = np.atleast_1d(np.asarray(z, dtype=complex)).copy()
    if np.any(w.imag < 0):
        raise DomainError("forward_map 只接受闭上半平面中的点")
    tol = swallow_tol(a, driver.dt)
    knots = driver.knots
    values = driver.values
    lost = np.zeros(len(w), dtype=bool)
    u_now = values[0]

    for k in range(driver.steps):
        t0 = knots[k]
        if t0 >= t:
            break
        t1 = knots[k + 1]
        u0 = values[k]
        u1 = values[k + 1]
        if t1 > t:
            t1, u1 = t, u0
        w = _upper_sqrt(w * w + 2.0 * a * (t1 - t0), w) + u0 - u1
        u_now = u1
        lost |= np.abs(w) <= tol

    g = np.where(lost, np.nan + 0j, w + u_now)
    return complex(g[0]) if scalar else g


def swallow_time_complex(driver: DrivingPath, z: complex, a: float) -> SwallowTime:
    """
    上半平面内点的吞没时间

    若某一步内 w^2 是负实数且 w^2 + 2a*dt >= 0，则根落在步内，
    吞没时刻取 t_k + (-w^2)/(2a)。
    """
    z = complex(z)
    if z.imag <= 0:
        raise DomainError(f"z 必须在上半平面内: {z}")
    tol = swallow_tol(a, driver.dt)
    knots = driver.knots
    values = driver.values
    w = np.array([z])

    for k in range(driver.steps):
        h = knots[k + 1] - knots[k]
        w2 = w[0] * w[0]
        if abs(w2.imag) <= 1e-12 * abs(w2) and w2.real < 0 and w2.real + 2.0 * a * h >= 0:
            value = knots[k] + (-w2.real) / (2.0 * a)
            return SwallowTime(value=float(value), step=k + 1, censored=False, horizon=driver.horizon)
        w = _upper_sqrt(w * w + 2.0 * a * h, w) + values[k] - values[k + 1]
        if abs(w[0]) <= tol:
            return SwallowTime(value=float(knots[k + 1]), step=k + 1, censored=False,
                               horizon=driver.horizon)

    return SwallowTime(value=driver.horizon, step=None, censored=True, horizon=driver.horizon)
