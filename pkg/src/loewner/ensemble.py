"""
尺度自适应的批量正向流

同一组实轴点对 count 个独立样本一起推进（按样本向量化）。
步长随最左存活点的 gap 调整：
    dt_k = clip(step_ratio^2 * gap_min^2, floor, dt_max)
单步更新与 advance_step 完全相同，只是相邻点的间距按乘法方式携带：
    sep' = sep * (g_i + g_{i+1}) / (g_i' + g_{i+1}')
这样在很大的时刻仍能精确保持点的先后顺序。

gap 过程是 1+2a 维 Bessel 过程，T_x 的尾部很重，固定步长到不了足够大的 horizon；
这里步数只随 horizon 对数增长。

分辨模式（resolve_eps > 0）：
最左存活点 j 与右邻的 gap 比 r = g_j / g_{j+1} 一旦落到 [0, eps) 或 (1-eps, 1]，
点 j 立即退出（记为该步被吞没），并记下此刻 g_j / g_{j+s} 的比值。
点对 (j, j+s) 的命中概率在这个停时的条件值正好是 F(比值)。
此时最左点不再受 dt 下限约束，吞没阈值也随步长缩小，
映射后间距远小于 sqrt(dt) 的点对不会再在同一步里一起被吞没。
最右一个点没有右邻，仍按 dt 下限和吞没阈值处理。
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from loewner.driver import DrivingPath, NormalStreams
from utils.errors import DomainError

logger = logging.getLogger("sle.ensemble")


@dataclass(frozen=True)
class SweepSettings:
    """自适应扫描参数"""
    dt: float                     # 最小步长，也决定吞没阈值
    horizon: float
    step_ratio: float = 0.1
    dt_max: float = math.inf
    max_steps: int = 200_000
    chunk: int = 1024
    resolve_eps: float = 0.0      # 0 表示不分辨，按吞没先后判断
    strides: Optional[Tuple[int, ...]] = None   # 记录比值的列距，None 为全部

    @classmethod
    def for_points(cls, points: Sequence[float], dt: float, horizon_factor: float = 1e12,
                   **kwargs) -> "SweepSettings":
        """horizon 取 horizon_factor * max(points)^2"""
        x_max = float(np.max(points))
        return cls(dt=dt, horizon=horizon_factor * x_max * x_max, **kwargs)

    @property
    def resolving(self) -> bool:
        return self.resolve_eps > 0

    @property
    def fine_floor(self) -> float:
        """分辨模式下最左点的步长下限"""
        return self.dt * self.resolve_eps ** 2

    def pair_strides(self, npts: int) -> Tuple[int, ...]:
        if npts < 2 or not self.resolving:
            return ()
        if self.strides is None:
            return tuple(range(1, npts))
        return tuple(s for s in self.strides if 1 <= s < npts)


@dataclass
class SweepResult:
    """一批样本的扫描结果，数组第一维是样本"""
    points: np.ndarray
    indices: np.ndarray
    swallow_step: np.ndarray   # (S, P)，-1 表示到结束仍存活
    swallow_time: np.ndarray   # (S, P)，存活为 inf
    gap: np.ndarray            # (S, P)，结束时的 gap，被吞没为 nan
    deriv: np.ndarray          # (S, P)
    time: np.ndarray           # (S,) 结束时刻
    steps: np.ndarray          # (S,) 步数
    meta: dict = field(default_factory=dict)
    hit: Optional[np.ndarray] = None     # (S, P)，点 j 退出时判为先于 j+1 被吞没
    ratio: Optional[np.ndarray] = None   # (S, P, L)，退出时的 g_j / g_{j+stride}
    strides: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.hit is None:
            # 同一步被吞没视为同时吞没
            steps = self.swallow_step
            nxt = np.concatenate([steps[:, 1:], np.full((len(steps), 1), -1)], axis=1)
            self.hit = (steps >= 0) & (nxt != steps)

    @property
    def count(self) -> int:
        return len(self.indices)

    @property
    def alive(self) -> np.ndarray:
        return self.swallow_step < 0

    @property
    def censored(self) -> np.ndarray:
        """结束时仍有存活点的样本"""
        return self.alive.any(axis=1)

    def column(self, x: float) -> int:
        """点 x 对应的列号"""
        hits = np.flatnonzero(np.isclose(self.points, x, rtol=0, atol=1e-12))
        if not len(hits):
            raise DomainError(f"扫描中没有点 x={x}")
        return int(hits[0])

    def adjacent_hits(self) -> np.ndarray:
        """相邻点对 (j, j+1) 的命中指示，+inf 规则，形状 (S, P-1)"""
        retired = ~self.alive
        return retired[:, :-1] & (self.hit[:, :-1] | ~retired[:, 1:])

    def pair_hits(self, lo, stride: int) -> np.ndarray:
        """
        点对 (lo, lo+stride) 的命中指示

        T_{lo+stride} > T_lo 当且仅当中间某个相邻点对命中，
        所以同一扫描里粗点对恰为其细分点对的 OR。
        """
        lo = np.atleast_1d(np.asarray(lo, dtype=np.int64))
        if stride < 1 or lo.min() < 0 or lo.max() + stride >= len(self.points):
            raise DomainError(f"列距 {stride} 超出扫描点范围")
        adj = self.adjacent_hits().astype(np.int64)
        cums = np.concatenate([np.zeros((self.count, 1), dtype=np.int64), np.cumsum(adj, axis=1)], axis=1)
        return (cums[:, lo + stride] - cums[:, lo]) > 0

    def pair_ratio(self, lo, stride: int) -> Optional[np.ndarray]:
        """lo 退出时的 g_lo / g_{lo+stride}；非分辨扫描返回 None"""
        if self.ratio is None:
            return None
        if stride not in self.strides:
            raise DomainError(f"扫描没有记录列距 {stride} 的比值，已记录 {self.strides}")
        lo = np.atleast_1d(np.asarray(lo, dtype=np.int64))
        return self.ratio[:, lo, self.strides.index(stride)]

    @classmethod
    def concat(cls, parts: List["SweepResult"]) -> "SweepResult":
        """按批次顺序拼接"""
        if not parts:
            raise DomainError("没有可拼接的扫描结果")
        ratio = None if parts[0].ratio is None else np.concatenate([p.ratio for p in parts])
        return cls(
            points=parts[0].points,
            indices=np.concatenate([p.indices for p in parts]),
            swallow_step=np.concatenate([p.swallow_step for p in parts]),
            swallow_time=np.concatenate([p.swallow_time for p in parts]),
            gap=np.concatenate([p.gap for p in parts]),
            deriv=np.concatenate([p.deriv for p in parts]),
            time=np.concatenate([p.time for p in parts]),
            steps=np.concatenate([p.steps for p in parts]),
            meta=dict(parts[0].meta),
            hit=np.concatenate([p.hit for p in parts]),
            ratio=ratio,
            strides=parts[0].strides,
        )


def _check_points(points: Sequence[float]) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 1 or len(pts) == 0:
        raise DomainError("至少需要一个被跟踪点")
    if pts[0] <= 0 or np.any(np.diff(pts) <= 0):
        raise DomainError("被跟踪点必须为严格递增的正数")
    return pts


def _offsets(seps: np.ndarray, ref: np.ndarray, npts: int) -> np.ndarray:
    """每个点相对最左存活点的偏移（只对存活点有意义）"""
    offs = np.zeros((len(ref), npts))
    if npts > 1:
        active = np.arange(npts - 1)[None, :] >= ref[:, None]
        offs[:, 1:] = np.cumsum(np.where(active, seps, 0.0), axis=1)
    return offs


class _Recorder:
    """退出点的命中判定与比值"""

    def __init__(self, total: int, npts: int, strides: Tuple[int, ...]):
        self.npts = npts
        self.strides = strides
        self.hit = np.zeros((total, npts), dtype=bool)
        self.ratio = np.full((total, npts, len(strides)), np.nan) if strides else None

    def record(self, rows: np.ndarray, mask: np.ndarray, gaps: np.ndarray, hit: np.ndarray,
               after: Optional[np.ndarray] = None):
        """
        mask 标出本步退出的点；gaps 为求比值所用的 gap，
        after 给出时表示 gap 取自步初，步末仍存活的 j+s 比值记为 0（事件已成立）
        """
        r, c = np.nonzero(mask)
        if not len(r):
            return
        self.hit[rows[r], c] = hit[r, c]
        if self.ratio is None:
            return
        for m, s in enumerate(self.strides):
            ok = c + s < self.npts
            rr, cc = r[ok], c[ok]
            with np.errstate(divide='ignore', invalid='ignore'):
                value = gaps[rr, cc] / gaps[rr, cc + s]
            if after is not None:
                value = np.where(after[rr, cc + s], 0.0, value)
            self.ratio[rows[rr], cc, m] = value


def _evolve(pts: np.ndarray, a: float, settings: SweepSettings, seed: int, indices: np.ndarray,
            stop_index: Optional[int] = None, record: bool = False):
    npts = len(pts)
    total = len(indices)
    col = np.arange(npts)
    eps = settings.resolve_eps
    resolving = settings.resolving and npts > 1

    swallow_step = np.full((total, npts), -1, dtype=np.int64)
    swallow_time = np.full((total, npts), np.inf)
    gap_out = np.full((total, npts), np.nan)
    deriv_out = np.ones((total, npts))
    time_out = np.zeros(total)
    steps_out = np.zeros(total, dtype=np.int64)
    recorder = _Recorder(total, npts, settings.pair_strides(npts))

    # 当前活动行的状态
    rows = np.arange(total)
    base = np.full(total, pts[0])
    ref = np.zeros(total, dtype=np.int64)
    seps = np.tile(np.diff(pts), (total, 1))
    deriv = np.ones((total, npts))
    t = np.zeros(total)
    steps = np.zeros(total, dtype=np.int64)

    streams = NormalStreams(seed, indices, chunk=settings.chunk)
    srow = np.arange(total)   # 活动行在随机流缓冲中的行号

    track_times = [0.0]
    track_values = [0.0]
    u_abs = 0.0

    while len(rows):
        if streams.exhausted:
            keep = np.zeros(len(streams), dtype=bool)
            keep[srow] = True
            streams.keep(keep)
            srow = np.arange(len(rows))
        z = streams.next()[srow]
        local = np.arange(len(rows))

        alive = col[None, :] >= ref[:, None]
        gap = base[:, None] + _offsets(seps, ref, npts)

        floor = settings.dt
        if resolving:
            floor = np.where(ref < npts - 1, settings.fine_floor, settings.dt)
        dt_k = np.clip(settings.step_ratio ** 2 * base * base, floor, settings.dt_max)
        # 步长低于 dt 时阈值随之缩小
        tol = 0.1 * np.sqrt(a * np.minimum(dt_k, settings.dt))
        dt_k = np.minimum(dt_k, settings.horizon - t)
        pre = np.sqrt(gap * gap + 2.0 * a * dt_k[:, None])
        du = np.sqrt(dt_k) * z

        if npts > 1:
            seps = seps * (gap[:, :-1] + gap[:, 1:]) / (pre[:, :-1] + pre[:, 1:])
        deriv = np.where(alive, deriv * gap / pre, deriv)
        base_new = pre[local, ref] - du
        gap_new = base_new[:, None] + _offsets(seps, ref, npts)

        t = t + dt_k
        steps = steps + 1
        if record:
            u_abs += float(du[0])
            track_times.append(float(t[0]))
            track_values.append(u_abs)

        hit = alive & (gap_new <= tol[:, None])
        any_hit = hit.any(axis=1)
        last = npts - 1 - np.argmax(hit[:, ::-1], axis=1)
        newly = alive & any_hit[:, None] & (col[None, :] <= last[:, None])
        if newly.any():
            r, c = np.nonzero(newly)
            swallow_step[rows[r], c] = steps[r]
            swallow_time[rows[r], c] = t[r]
            after = alive & ~newly
            nxt = np.concatenate([after[:, 1:], np.ones((len(rows), 1), dtype=bool)], axis=1)
            if resolving:
                # 同一步吞没的点按步初的 gap 比判定
                ratio0 = np.ones_like(gap)
                with np.errstate(divide='ignore', invalid='ignore'):
                    ratio0[:, :-1] = gap[:, :-1] / gap[:, 1:]
                recorder.record(rows, newly, gap, nxt | (ratio0 < 0.5), after=after)
            else:
                recorder.record(rows, newly, gap, nxt, after=after)
        ref = np.where(any_hit, last + 1, ref)

        if resolving:
            # 已退出的列没有意义
            with np.errstate(divide='ignore', invalid='ignore'):
                ratio = gap_new[:, :-1] / gap_new[:, 1:]
            decided = (ratio < eps) | (ratio > 1.0 - eps)
            open_ = (col[None, :-1] >= ref[:, None]) & ~decided
            stop = np.where(open_.any(axis=1), np.argmax(open_, axis=1), npts - 1)
            retire = np.zeros((len(rows), npts), dtype=bool)
            retire[:, :-1] = (col[None, :-1] >= ref[:, None]) & (col[None, :-1] < stop[:, None])
            if retire.any():
                r, c = np.nonzero(retire)
                swallow_step[rows[r], c] = steps[r]
                swallow_time[rows[r], c] = t[r]
                kind = np.zeros_like(retire)
                kind[:, :-1] = ratio < 0.5
                recorder.record(rows, retire, gap_new, kind)
                ref = np.where(retire.any(axis=1), stop, ref)

        base = gap_new[local, np.minimum(ref, npts - 1)]

        done = (ref >= npts) | (t >= settings.horizon) | (steps >= settings.max_steps)
        if stop_index is not None:
            done |= ref > stop_index
        if done.any():
            d = np.flatnonzero(done)
            g = rows[d]
            still = col[None, :] >= ref[d][:, None]
            gap_out[g] = np.where(still, gap_new[d], np.nan)
            deriv_out[g] = deriv[d]
            time_out[g] = t[d]
            steps_out[g] = steps[d]

            keep = ~done
            rows, base, ref, seps = rows[keep], base[keep], ref[keep], seps[keep]
            deriv, t, steps, srow = deriv[keep], t[keep], steps[keep], srow[keep]

    result = SweepResult(
        points=pts, indices=np.asarray(indices, dtype=np.int64), swallow_step=swallow_step,
        swallow_time=swallow_time, gap=gap_out, deriv=deriv_out, time=time_out, steps=steps_out,
        meta={'a': a, 'seed': seed, 'dt': settings.dt, 'horizon': settings.horizon,
              'resolve_eps': eps},
        hit=recorder.hit, ratio=recorder.ratio, strides=recorder.strides,
    )
    track = (np.asarray(track_times), np.asarray(track_values)) if record else None
    return result, track


def sweep_ensemble(points: Sequence[float], a: float, settings: SweepSettings, seed: int,
                   start: int = 0, count: int = 1) -> SweepResult:
    """
    对样本 start..start+count-1 做自适应扫描

    Args:
        points: 严格递增的正实数点
        a: 2/kappa
        settings: 扫描参数
        seed: 随机种子
        start: 第一个样本序号
        count: 样本数

    Returns:
        SweepResult；结果只取决于 (seed, 样本序号)，与分批方式无关
    """
    pts = _check_points(points)
    if count < 1:
        raise DomainError(f"样本数必须 >= 1: {count}")
    indices = np.arange(start, start + count, dtype=np.int64)
    result, _ = _evolve(pts, a, settings, seed, indices)

    censored = int(result.censored.sum())
    logger.debug(f"扫描样本 {start}..{start + count - 1}: 点数={len(pts)}, "
                 f"平均步数={result.steps.mean():.0f}, 截断={censored}")
    return result


def record_sample(points: Sequence[float], a: float, settings: SweepSettings, seed: int,
                  index: int, stop_index: Optional[int] = None) -> Tuple[DrivingPath, SweepResult]:
    """
    单个样本的扫描，同时记录非均匀节点上的驱动

    Args:
        points: 被跟踪点
        a: 2/kappa
        settings: 扫描参数
        seed: 随机种子
        index: 样本序号
        stop_index: 该列的点被吞没后立即停止（例如停在 T_y）

    Returns:
        (DrivingPath, SweepResult)
    """
    pts = _check_points(points)
    result, (times, values) = _evolve(pts, a, settings, seed, np.array([index], dtype=np.int64),
                                      stop_index=stop_index, record=True)
    path = DrivingPath(dt=settings.dt, values=values, seed=seed, kind='brownian', times=times)
    return path, result
