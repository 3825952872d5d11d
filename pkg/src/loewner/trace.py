"""
反向流：曲线上的点与 hull 距离

γ(t) 近似为 g_t^{-1}(U_t + iδ)。从 U_t + iδ 出发沿反向驱动演化到时刻 0，
每一步用常驱动精确逆：h <- U_k + sqrt((h - U_k)^2 - 2a*dt)，取虚部非负的根。
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from loewner.driver import DrivingPath
from loewner.flow import flow_points
from utils.errors import DomainError, SolverError

logger = logging.getLogger("sle.trace")

# hull_distance 中反向流的默认条数上限
DEFAULT_MAX_TRACES = 4000


@dataclass(frozen=True)
class TracePoint:
    """曲线上的近似点"""
    time: float
    point: complex
    mesh: float


def trace_points(driver: DrivingPath, times: Sequence[float], delta: float, a: float) -> np.ndarray:
    """
    一次求多个时刻的曲线点

    对 t ∈ (t_k, t_{k+1}]，步内驱动取 U_k（左连续），第一步只走 t - t_k。

    Args:
        driver: 驱动路径
        times: 时刻，要求 0 <= t <= horizon
        delta: 起点离实轴的高度
        a: 2/kappa

    Returns:
        复数数组，与 times 一一对应
    """
    if not delta > 0:
        raise DomainError(f"delta 必须为正: {delta}")
    ts = np.atleast_1d(np.asarray(times, dtype=float))
    knots = driver.knots
    values = driver.values
    if np.any(ts < 0) or np.any(ts > knots[-1] * (1 + 1e-12)):
        raise DomainError(f"时刻必须在 [0, {knots[-1]}] 内")

    start = np.searchsorted(knots, ts, side='left') - 1
    start = np.minimum(start, driver.steps - 1)
    partial = ts - knots[np.maximum(start, 0)]
    h = np.where(start >= 0, values[np.maximum(start, 0)], 0.0) + 1j * delta

    for j in range(int(start.max()), -1, -1):
        act = start >= j
        full = knots[j + 1] - knots[j]
        step = np.where(start[act] == j, partial[act], full)
        w = h[act] - values[j]
        s = np.sqrt(w * w - 2.0 * a * step)
        s = np.where(s.imag < 0, -s, s)
        h[act] = values[j] + s
        if not np.all(np.isfinite(h[act])):
            bad = int(np.flatnonzero(~np.isfinite(h))[0])
            raise SolverError("反向流出现非有限值", {
                'time': float(ts[bad]), 'step': j, 'delta': delta, 'kind': driver.kind,
            })
    return h


def trace_point(driver: DrivingPath, t: float, delta: float, a: float) -> TracePoint:
    """γ(t) 的近似值；t = 0 时为 iδ"""
    point = complex(trace_points(driver, [t], delta, a)[0])
    return TracePoint(time=float(t), point=point, mesh=float(delta))


@dataclass(frozen=True)
class HullProbe:
    """时刻 t 的实轴边界探测结果"""
    time: float
    s_t: float         # 最大的已吞没网格点（没有则为 0）
    eta_point: float   # s_t 右侧最小的未吞没点
    eta_gap: float     # g_t(eta_point) - U_t
    gap_x: float       # g_t(x) - U_t
    deriv_x: float     # g_t'(x)


def boundary_probe(driver: DrivingPath, t: float, x: float, a: float, mesh: float) -> HullProbe:
    """
    用 [0, x] 上步长为 mesh 的网格扫描一次，再对吞没前沿做一次二分

    Args:
        driver: 驱动路径
        t: 时刻
        x: 目标点，要求在 t 时刻未被吞没
        a: 2/kappa
        mesh: 网格步长

    Returns:
        HullProbe
    """
    if not (x > 0 and mesh > 0):
        raise DomainError(f"x 和 mesh 必须为正: x={x}, mesh={mesh}")
    grid = np.arange(1, int(np.ceil(x / mesh)), dtype=float) * mesh
    grid = grid[grid < x]
    state = flow_points(driver, np.append(grid, x), a, t=t)
    if not state.alive[-1]:
        raise DomainError(f"x={x} 在 t={t} 之前已被吞没")

    gone = np.flatnonzero(~state.alive[:-1])
    s = float(grid[gone[-1]]) if len(gone) else 0.0
    above = np.flatnonzero(state.alive[:-1] & (grid > s))
    if len(above):
        p, p_gap = float(grid[above[0]]), float(state.gap[above[0]])
    else:
        p, p_gap = float(x), float(state.gap[-1])

    mid = 0.5 * (s + p)
    if mid > 0:
        probe = flow_points(driver, [mid], a, t=t)
        if probe.alive[0]:
            p, p_gap = mid, float(probe.gap[0])
        else:
            s = mid

    return HullProbe(time=float(t), s_t=s, eta_point=p, eta_gap=p_gap,
                     gap_x=float(state.gap[-1]), deriv_x=float(state.deriv[-1]))


def hull_distance(driver: DrivingPath, t: float, x: float, a: float, mesh: float,
                  max_traces: int = DEFAULT_MAX_TRACES, probe: Optional[HullProbe] = None) -> float:
    """
    dist(x, ∂K_t) 的近似

    取 (i) 驱动节点处曲线点到 x 的距离，(ii) x - s_t，两者的最小值。
    反向流的起点高度与 mesh 相同。
    """
    if t <= 0:
        return float(x)
    if probe is None:
        probe = boundary_probe(driver, t, x, a, mesh)

    knots = driver.knots
    times = np.append(knots[knots < t], t)
    if len(times) > max_traces:
        logger.debug(f"反向流条数 {len(times)} 超过上限，均匀抽取 {max_traces} 条")
        pick = np.unique(np.linspace(0, len(times) - 1, max_traces).round().astype(int))
        times = times[pick]
    curve = trace_points(driver, times, mesh, a)
    return float(min(np.abs(x - curve).min(), x - probe.s_t))


def koebe_ratio(distance: float, probe: HullProbe) -> float:
    """d_t(x) * g_t'(x) / (g_t(x) - η_t)，理论上落在 [1/4, 4]"""
    spread = probe.gap_x - probe.eta_gap
    if spread <= 0:
        raise DomainError("g_t(x) 必须位于 η_t 右侧")
    return distance * probe.deriv_x / spread
