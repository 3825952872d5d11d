"""
吞没先后事件的取值与截断补全

点对 (lo, hi) 的事件是 "T_hi > T_lo"（曲线命中 [lo, hi]）。原点 x = 0 视为第 0 步被吞没。

每个点对有两种取值：
- bits：+inf 规则下的指示量（相邻点对的 OR，天然满足细分一致）
- weights：complete 模式下的条件概率
  - lo 在结束时仍存活：F(g_lo / g_hi)，记为截断
  - lo 按 gap 比退出：F(退出时的 g_lo / g_hi)
  - 其余情况等于 bits
  strict 模式下 weights 等于 bits，截断的点对按 +inf 规则计为不命中

多个点对同时成立的事件（链）：吞没从左到右进行，未确定的点对总是末尾的若干个。
最后一个点对取 weights，其余取 bits；末尾两个相邻点对都未确定时用相邻双区间恒等式；
其余情况计为不命中并标记。
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from analytic.hitmap import HitMap, adjacent_from_gaps
from loewner.ensemble import SweepResult
from utils.errors import DomainError

MODES = ('complete', 'strict')


def _check_mode(mode: str):
    if mode not in MODES:
        raise DomainError(f"未知截断模式: {mode}，可选 {MODES}")


def pair_arrays(bits: np.ndarray, ratio: Optional[np.ndarray], lo_alive: np.ndarray,
                gap_lo: np.ndarray, gap_hi: np.ndarray, hitmap: HitMap, mode: str = 'complete'):
    """
    点对事件（数组形式，形状任意且一致）

    Args:
        bits: +inf 规则下的命中指示
        ratio: lo 退出时的 g_lo / g_hi，没有记录为 nan；None 表示扫描不记录比值
        lo_alive: 结束时 lo 仍存活
        gap_lo, gap_hi: 结束时的 gap
        hitmap: HitMap
        mode: complete / strict

    Returns:
        (bits, weights, unresolved)，unresolved 标记结束时未确定的点对
    """
    _check_mode(mode)
    bits = np.asarray(bits, dtype=bool) & ~lo_alive
    weights = bits.astype(float)
    unresolved = np.asarray(lo_alive, dtype=bool)
    if mode == 'strict':
        return bits, weights, unresolved
    if ratio is not None:
        known = ~unresolved & np.isfinite(ratio)
        if known.any():
            weights[known] = hitmap.F_real(np.clip(ratio[known], 0.0, 1.0))
    if unresolved.any():
        r = gap_lo[unresolved] / gap_hi[unresolved]
        weights[unresolved] = hitmap.F_real(np.clip(r, 0.0, 1.0))
    return bits, weights, unresolved


def _pair_state(sweep: SweepResult, lo: float, hi: float, hitmap: HitMap, mode: str):
    """点对 (lo, hi) 的 (bits, weights, unresolved, g_lo, g_hi)，lo = 0 为原点"""
    c_hi = sweep.column(hi)
    g_hi = sweep.gap[:, c_hi]
    if lo == 0:
        ones = np.ones(sweep.count, dtype=bool)
        return ones, ones.astype(float), ~ones, np.full(sweep.count, np.nan), g_hi
    c_lo = sweep.column(lo)
    stride = c_hi - c_lo
    bits = sweep.pair_hits(c_lo, stride)[:, 0]
    ratio = sweep.pair_ratio(c_lo, stride)
    if ratio is not None:
        ratio = ratio[:, 0]
    g_lo = sweep.gap[:, c_lo]
    bits, weights, unresolved = pair_arrays(bits, ratio, sweep.alive[:, c_lo], g_lo, g_hi, hitmap, mode)
    return bits, weights, unresolved, g_lo, g_hi


@dataclass
class EventOutcome:
    """每个样本的事件取值"""
    values: np.ndarray      # [0, 1]
    censored: np.ndarray    # 结束时事件尚未确定
    missing: np.ndarray     # 未确定且无法补全，按不命中计

    @property
    def censored_fraction(self) -> float:
        return float(self.censored.mean())

    @property
    def missing_fraction(self) -> float:
        return float(self.missing.mean())




def chain_outcome(sweep: SweepResult, pairs: Sequence[Tuple[float, float]], hitmap: HitMap,
                  mode: str = 'complete') -> EventOutcome:
    """
    若干点对事件同时成立

    Args:
        sweep: 扫描结果，须包含所有非零端点
        pairs: 按左端点递增排列的点对 (lo, hi)
        hitmap: HitMap
        mode: complete / strict
    """
    _check_mode(mode)
    if not pairs:
        raise DomainError("事件至少包含一个点对")
    los = [p[0] for p in pairs]
    if any(b <= a for a, b in zip(los, los[1:])):
        raise DomainError("点对必须按左端点严格递增")

    states: List[tuple] = []
    for lo, hi in pairs:
        if not 0 <= lo < hi:
            raise DomainError(f"点对必须满足 0 <= lo < hi: ({lo}, {hi})")
        states.append(_pair_state(sweep, lo, hi, hitmap, mode))

    count = sweep.count
    n_open = np.sum([s[2] for s in states], axis=0)
    censored = n_open > 0

    if mode == 'strict':
        values = np.ones(count)
        for bits, *_ in states:
            values *= bits
        missing = censored.copy()
        values = np.where(censored, 0.0, values)
        return EventOutcome(values=values, censored=censored, missing=missing)

    head = np.ones(count)
    for bits, *_ in states[:-1]:
        head *= bits
    values = head * states[-1][1]

    paired = np.zeros(count, dtype=bool)
    if len(pairs) >= 2 and pairs[-2][1] == pairs[-1][0]:
        ok = (n_open == 2) & states[-2][2] & states[-1][2]
        if ok.any():
            prefix = np.ones(count)
            for bits, *_ in states[:-2]:
                prefix *= bits
            g1, g2, g3 = states[-2][3][ok], states[-2][4][ok], states[-1][4][ok]
            values[ok] = prefix[ok] * adjacent_from_gaps(g1, g2, g3, hitmap)
        paired = ok

    missing = (n_open >= 2) & ~paired
    values = np.where(missing, 0.0, values)
    return EventOutcome(values=values, censored=censored, missing=missing)
