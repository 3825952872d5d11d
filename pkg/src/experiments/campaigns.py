"""
Monte Carlo 实验

每个实验都把模拟结果与精确公式（或只含形状的上界）配对输出。
样本 i 的驱动增量只取决于 (seed, i)，批次划分和进程数不影响结果。
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from analytic.hitmap import HitMap, adjacent_two_interval, hit_prob_interval, new_hitmap
from analytic.triangle import near_point_asymptote
from experiments.config import ExperimentConfig
from experiments.estimate import Estimate, mean_estimate, wilson_estimate
from experiments.events import EventOutcome, chain_outcome
from loewner.driver import sample_stream
from loewner.ensemble import SweepSettings, record_sample
from loewner.trace import boundary_probe, hull_distance, koebe_ratio
from scheduler.runner import CampaignRunner
from utils.errors import DomainError, OutOfRegimeError

logger = logging.getLogger("sle.campaign")

# 截断（无法补全）比例超过该值时给出可靠性警告
CENSOR_WARNING = 0.01

# Koebe 比值的检查区间（理论值 [1/4, 4] 加离散化余量）
KOEBE_BAND = (0.2, 5.0)


def runner_for(cfg: ExperimentConfig) -> CampaignRunner:
    return CampaignRunner(workers=cfg.workers, batch_size=cfg.batch_size)


def base_record(cfg: ExperimentConfig, experiment: str) -> dict:
    """所有结果记录共有的字段（不含时间戳）"""
    params = cfg.params
    return {
        'experiment': experiment,
        'kappa': params.kappa,
        'a': params.a,
        's': params.s,
        'beta': params.beta,
        'n_samples': cfg.samples,
        'seed': cfg.seed,
        'censoring': cfg.censoring,
    }


def estimate_record(cfg: ExperimentConfig, experiment: str, est: Estimate, exact_or_bound: float,
                    censored: float, **extra) -> dict:
    record = base_record(cfg, experiment)
    record.update({
        'estimate': est.value,
        'stderr': est.stderr,
        'ci_lo': est.ci_lo,
        'ci_hi': est.ci_hi,
        'exact_or_bound': exact_or_bound,
        'censored': censored,
    })
    record.update(extra)
    return record


def _check_censoring(name: str, outcome: EventOutcome) -> List[str]:
    """记录截断比例，无法补全的比例超过 1% 时返回警告"""
    logger.info(f"{name}: 截断比例 {outcome.censored_fraction:.4f}, "
                f"无法补全比例 {outcome.missing_fraction:.4f}")
    if outcome.missing_fraction > CENSOR_WARNING:
        msg = f"{name}: {outcome.missing_fraction:.2%} 的样本在 horizon 内未确定"
        logger.warning(msg)
        return [msg]
    return []


def _sweep_event(cfg: ExperimentConfig, points: Sequence[float], pairs, hitmap: HitMap,
                 start: int = 0) -> EventOutcome:
    pts = sorted(set(float(p) for p in points if p > 0))
    sweep = runner_for(cfg).sweep(pts, cfg.params.a, cfg.sweep_settings(pts), cfg.seed,
                                  cfg.samples, start=start)
    return chain_outcome(sweep, pairs, hitmap, cfg.censoring)


# ---------- 单区间 ----------

@dataclass
class OneIntervalResult:
    y: float
    x: float
    estimate: Estimate
    exact: float
    censored: float = 0.0
    warnings: List[str] = field(default_factory=list)

    def to_record(self, cfg: ExperimentConfig) -> dict:
        return estimate_record(cfg, 'hit', self.estimate, self.exact, self.censored, y=self.y, x=self.x)


def one_interval_experiment(cfg: ExperimentConfig, y: float, x: float, start: int = 0) -> OneIntervalResult:
    """
    P(T_x > T_y) 的 Monte Carlo 估计与精确值 F(y/x)

    Args:
        cfg: 实验配置
        y: 左端点
        x: 右端点，要求 0 < y <= x <= 1
        start: 第一个样本序号
    """
    if not (0 < y <= x <= 1):
        raise DomainError(f"要求 0 < y <= x <= 1: y={y}, x={x}")
    hitmap = new_hitmap(cfg.params)
    exact = hit_prob_interval(y, x, hitmap)
    if y == x:
        return OneIntervalResult(y=y, x=x, estimate=wilson_estimate(0, cfg.samples), exact=0.0)

    outcome = _sweep_event(cfg, [y, x], [(y, x)], hitmap, start)
    warnings = _check_censoring(f"单区间 [{y}, {x}]", outcome)
    est = mean_estimate(outcome.values)
    logger.info(f"单区间 [{y}, {x}]: 估计 {est.value:.5f} ± {est.stderr:.5f}, 精确 {exact:.5f}")
    return OneIntervalResult(y=y, x=x, estimate=est, exact=exact,
                             censored=outcome.censored_fraction, warnings=warnings)


# ---------- 双区间 ----------

@dataclass
class TwoIntervalResult:
    y: float
    x: float
    eps: float
    estimate: Estimate
    bound: float
    censored: float = 0.0
    warnings: List[str] = field(default_factory=list)

    def to_record(self, cfg: ExperimentConfig) -> dict:
        return estimate_record(cfg, 'two-hit', self.estimate, self.bound, self.censored,
                               y=self.y, x=self.x, eps=self.eps)


def two_interval_bound(y: float, x: float, eps: float, a: float) -> float:
    """不含常数的上界形状 eps^{2(4a-1)} (x-y)^{1-4a}"""
    return eps ** (2 * (4 * a - 1)) * (x - y) ** (1 - 4 * a)


def two_interval_experiment(cfg: ExperimentConfig, y: float, x: float, eps: float,
                            start: int = 0) -> TwoIntervalResult:
    """
    P(T_y < T_{y+eps}, T_x < T_{x+eps}) 的估计

    Args:
        cfg: 实验配置（delta_margin 限定内部区域）
        y, x: delta < y < x < 1 - delta
        eps: 0 < eps <= (x-y)/2
        start: 第一个样本序号
    """
    delta = cfg.delta_margin
    if not (delta < y < x < 1 - delta):
        raise DomainError(f"要求 {delta} < y < x < {1 - delta}: y={y}, x={x}")
    if not (0 < eps <= (x - y) / 2):
        raise DomainError(f"要求 0 < eps <= (x-y)/2: eps={eps}")
    hitmap = new_hitmap(cfg.params)
    outcome = _sweep_event(cfg, [y, y + eps, x, x + eps], [(y, y + eps), (x, x + eps)], hitmap, start)
    warnings = _check_censoring(f"双区间 y={y}, x={x}, eps={eps}", outcome)
    est = mean_estimate(outcome.values)
    bound = two_interval_bound(y, x, eps, cfg.params.a)
    return TwoIntervalResult(y=y, x=x, eps=eps, estimate=est, bound=bound,
                             censored=outcome.censored_fraction, warnings=warnings)


@dataclass
class DecayFit:
    """双区间概率随 eps 衰减的指数"""
    results: List[TwoIntervalResult]
    exponent: float
    exponent_stderr: float
    target: float


def fit_power(xs: Sequence[float], ys: Sequence[float]) -> Tuple[float, float]:
    """log y 对 log x 的斜率及标准误（跳过非正的 y）"""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    keep = ys > 0
    if keep.sum() < 2:
        raise DomainError("可用于拟合的正值不足两个")
    fit = stats.linregress(np.log(xs[keep]), np.log(ys[keep]))
    return float(fit.slope), float(fit.stderr)


def two_interval_decay(cfg: ExperimentConfig, y: float, x: float, eps_values: Sequence[float]) -> DecayFit:
    """
    对每个 eps 用独立样本（序号错开 samples）估计，再拟合 eps 指数

    目标指数为 2(4a-1)。
    """
    results = [two_interval_experiment(cfg, y, x, e, start=i * cfg.samples)
               for i, e in enumerate(eps_values)]
    exponent, err = fit_power(eps_values, [r.estimate.value for r in results])
    target = 2 * (4 * cfg.params.a - 1)
    logger.info(f"双区间衰减指数 {exponent:.3f} ± {err:.3f}（目标 {target:.3f}）")
    return DecayFit(results=results, exponent=exponent, exponent_stderr=err, target=target)


@dataclass
class AdjacentResult:
    points: Tuple[float, float, float]
    estimate: Estimate
    exact: float
    censored: float = 0.0
    warnings: List[str] = field(default_factory=list)

    def to_record(self, cfg: ExperimentConfig) -> dict:
        x1, x2, x3 = self.points
        return estimate_record(cfg, 'adjacent', self.estimate, self.exact, self.censored,
                               x1=x1, x2=x2, x3=x3)


def adjacent_experiment(cfg: ExperimentConfig, x1: float, x2: float, x3: float,
                        start: int = 0) -> AdjacentResult:
    """P(T_{x1} < T_{x2} < T_{x3}) 的估计与精确值"""
    hitmap = new_hitmap(cfg.params)
    exact = adjacent_two_interval(x1, x2, x3, hitmap)
    outcome = _sweep_event(cfg, [x1, x2, x3], [(x1, x2), (x2, x3)], hitmap, start)
    warnings = _check_censoring(f"相邻双区间 ({x1}, {x2}, {x3})", outcome)
    est = mean_estimate(outcome.values)
    return AdjacentResult(points=(x1, x2, x3), estimate=est, exact=exact,
                          censored=outcome.censored_fraction, warnings=warnings)


# ---------- 近距离事件 ----------

def grid_with(mesh: float, upper: float, extra: Sequence[float]) -> np.ndarray:
    """(0, upper) 内步长 mesh 的网格并上 extra 中的点"""
    grid = np.arange(1, int(np.ceil(upper / mesh)) + 1, dtype=float) * mesh
    grid = grid[grid < upper]
    return np.unique(np.concatenate([grid, np.asarray(extra, dtype=float)]))


def _distance_at_end(path, result, x: float, col_x: int, a: float, mesh: float, max_traces: int) -> float:
    if result.swallow_step[0, col_x] >= 0:
        return 0.0
    try:
        return hull_distance(path, float(result.time[0]), x, a, mesh, max_traces=max_traces)
    except DomainError:
        # 重放时 x 恰好被吞没
        return 0.0


def near_miss_batch(start: int, count: int, x: float, y: float, a: float, settings: SweepSettings,
                    seed: int, mesh: float, max_traces: int = 400):
    """一批样本在 T_y 时刻的 dist(x, K_{T_y})"""
    pts = grid_with(mesh, x, [y, x])
    col_y = int(np.flatnonzero(pts == y)[0])
    col_x = len(pts) - 1
    dist = np.zeros(count)
    censored = np.zeros(count, dtype=bool)
    for i in range(count):
        path, res = record_sample(pts, a, settings, seed, start + i, stop_index=col_y)
        censored[i] = res.swallow_step[0, col_y] < 0
        dist[i] = _distance_at_end(path, res, x, col_x, a, mesh, max_traces)
    return dist, censored


@dataclass
class NearMissResult:
    x: float
    y: float
    table: pd.DataFrame          # 每个半径一行
    exponent: float
    exponent_stderr: float
    censored: float = 0.0
    warnings: List[str] = field(default_factory=list)

    def to_records(self, cfg: ExperimentConfig) -> List[dict]:
        out = []
        for row in self.table.itertuples():
            est = Estimate(value=row.estimate, stderr=row.stderr, n=cfg.samples,
                           ci_lo=row.ci_lo, ci_hi=row.ci_hi)
            out.append(estimate_record(cfg, 'near-miss', est, row.asymptote, self.censored,
                                       x=self.x, y=self.y, r=row.r))
        return out


def near_miss_experiment(cfg: ExperimentConfig, x: float, y: float, radii: Sequence[float],
                         start: int = 0) -> NearMissResult:
    """
    P(dist(x, K_{T_y}) <= r) 的估计，配以线性于 r 的渐近形状

    Args:
        cfg: 实验配置（mesh 为网格与反向流的分辨率）
        x, y: 0 < y < x
        radii: 各半径，要求 r <= (x-y)/4
    """
    if not 0 < y < x:
        raise DomainError(f"要求 0 < y < x: y={y}, x={x}")
    for r in radii:
        if not 0 < r <= (x - y) / 4:
            raise OutOfRegimeError(f"半径 {r} 超出 (0, (x-y)/4]")
    params = cfg.params
    pts = grid_with(cfg.mesh, x, [y, x])
    settings = cfg.sweep_settings(pts, resolve=False)
    parts = runner_for(cfg).map(near_miss_batch, cfg.samples, start, x=x, y=y, a=params.a,
                                settings=settings, seed=cfg.seed, mesh=cfg.mesh,
                                max_traces=cfg.max_traces)
    dist = np.concatenate([p[0] for p in parts])
    censored = np.concatenate([p[1] for p in parts])

    rows = []
    for r in sorted(radii):
        hit = dist <= r
        est = wilson_estimate(int(hit.sum()), len(dist))
        rows.append({'r': r, 'estimate': est.value, 'stderr': est.stderr, 'ci_lo': est.ci_lo,
                     'ci_hi': est.ci_hi,
                     'asymptote': near_point_asymptote(x, y, r, math.pi / 2, params)})
    table = pd.DataFrame(rows)

    warnings = []
    # 截断样本中 d 已经 <= r 的仍然确定命中，其余无法判断
    unresolved = float((censored & (dist > min(radii))).mean())
    if unresolved > CENSOR_WARNING:
        msg = f"近距离实验: {unresolved:.2%} 的样本在 horizon 内 y 未被吞没"
        logger.warning(msg)
        warnings.append(msg)
    try:
        exponent, err = fit_power(table['r'], table['estimate'])
    except DomainError:
        exponent, err = float('nan'), float('nan')
        warnings.append("近距离实验: 正估计不足两个，无法拟合 r 指数")
    logger.info(f"近距离实验 x={x}, y={y}: r 指数 {exponent:.3f} ± {err:.3f}")
    return NearMissResult(x=x, y=y, table=table, exponent=exponent, exponent_stderr=err,
                          censored=float(censored.mean()), warnings=warnings)


# ---------- 尺度律 ----------

@dataclass
class ScalingReport:
    x: float
    statistic: float
    pvalue: float
    used: int
    excluded: int
    coupled: bool

    def to_record(self, cfg: ExperimentConfig) -> dict:
        record = base_record(cfg, 'scaling')
        record.update({'x': self.x, 'ks_statistic': self.statistic, 'p_value': self.pvalue,
                       'used': self.used, 'excluded': self.excluded, 'coupled': self.coupled})
        return record


def scaling_test(cfg: ExperimentConfig, x: float, n_samples: Optional[int] = None,
                 coupled: Optional[bool] = None) -> ScalingReport:
    """
    {T_x} 与 {x^2 T_1} 的双样本 KS 检验

    默认两组用互不重叠的样本序号；coupled 时共用序号。
    任一组截断的样本成对剔除。
    """
    if not x > 0:
        raise DomainError(f"x 必须为正: {x}")
    n = n_samples or cfg.samples
    coupled = cfg.coupled if coupled is None else coupled
    a = cfg.params.a
    runner = runner_for(cfg)

    sweep_x = runner.sweep([x], a, cfg.sweep_settings([x]), cfg.seed, n, start=0)
    sweep_1 = runner.sweep([1.0], a, cfg.sweep_settings([1.0]), cfg.seed, n,
                           start=0 if coupled else n)
    t_x = sweep_x.swallow_time[:, 0]
    t_1 = x * x * sweep_1.swallow_time[:, 0]
    keep = np.isfinite(t_x) & np.isfinite(t_1)
    excluded = int((~keep).sum())
    if keep.sum() < 2:
        raise DomainError("可用样本不足，无法做 KS 检验")
    res = stats.ks_2samp(t_x[keep], t_1[keep])
    logger.info(f"尺度检验 x={x}: KS={res.statistic:.4f}, p={res.pvalue:.4f}, 剔除 {excluded}")
    return ScalingReport(x=x, statistic=float(res.statistic), pvalue=float(res.pvalue),
                         used=int(keep.sum()), excluded=excluded, coupled=coupled)


# ---------- Koebe 距离比与比值估计 ----------

def koebe_batch(start: int, count: int, a: float, dt: float, step_ratio: float, max_steps: int,
                chunk: int, seed: int, mesh: float, max_traces: int = 400):
    """随机抽取 (x, t)，返回 d_t(x) g_t'(x) / (g_t(x) - η_t)；x 已被吞没时为 nan"""
    ratios = np.full(count, np.nan)
    for i in range(count):
        gen = sample_stream(seed, start + i, purpose=1)
        x = float(gen.uniform(0.5, 1.5))
        t = float(gen.uniform(0.05, 0.5)) * x * x
        pts = grid_with(mesh, x, [x])
        settings = SweepSettings(dt=dt, horizon=t, step_ratio=step_ratio, max_steps=max_steps, chunk=chunk)
        path, res = record_sample(pts, a, settings, seed, start + i)
        if res.swallow_step[0, -1] >= 0:
            continue
        t_end = float(res.time[0])
        try:
            probe = boundary_probe(path, t_end, x, a, mesh)
        except DomainError:
            continue
        d = hull_distance(path, t_end, x, a, mesh, max_traces=max_traces, probe=probe)
        ratios[i] = koebe_ratio(d, probe)
    return ratios


@dataclass
class KoebeReport:
    ratios: np.ndarray
    in_band: float
    skipped: int
    band: Tuple[float, float] = KOEBE_BAND

    def to_record(self, cfg: ExperimentConfig) -> dict:
        valid = self.ratios[np.isfinite(self.ratios)]
        record = base_record(cfg, 'koebe')
        record.update({'in_band': self.in_band, 'skipped': self.skipped,
                       'ratio_min': float(valid.min()) if len(valid) else None,
                       'ratio_max': float(valid.max()) if len(valid) else None,
                       'band_lo': self.band[0], 'band_hi': self.band[1]})
        return record


def koebe_check(cfg: ExperimentConfig, configs: Optional[int] = None, start: int = 0) -> KoebeReport:
    """在 configs 个随机 (驱动, t, x) 上检查 Koebe 距离比"""
    n = configs or cfg.samples
    parts = runner_for(cfg).map(koebe_batch, n, start, a=cfg.params.a, dt=cfg.dt,
                                step_ratio=cfg.step_ratio, max_steps=cfg.max_steps,
                                chunk=cfg.chunk, seed=cfg.seed, mesh=cfg.mesh,
                                max_traces=cfg.max_traces)
    ratios = np.concatenate(parts)
    valid = ratios[np.isfinite(ratios)]
    lo, hi = KOEBE_BAND
    in_band = float(((valid >= lo) & (valid <= hi)).mean()) if len(valid) else float('nan')
    skipped = int(len(ratios) - len(valid))
    logger.info(f"Koebe 检查: {len(valid)} 个配置, 落在 [{lo}, {hi}] 内的比例 {in_band:.4f}, 跳过 {skipped}")
    return KoebeReport(ratios=ratios, in_band=in_band, skipped=skipped)


def ratio_batch(start: int, count: int, x: float, y: float, eps: float, a: float,
                settings: SweepSettings, seed: int, mesh: float, max_traces: int = 400):
    """T_y 时刻的 (比值, d)；不可用的样本为 nan"""
    pts = grid_with(mesh, x + eps, [y, x, x + eps])
    col_y = int(np.flatnonzero(pts == y)[0])
    col_x = int(np.flatnonzero(pts == x)[0])
    out = np.full((count, 2), np.nan)
    for i in range(count):
        path, res = record_sample(pts, a, settings, seed, start + i, stop_index=col_y)
        if res.swallow_step[0, col_y] < 0 or res.swallow_step[0, col_x] >= 0:
            continue
        g_x, g_xe = res.gap[0, col_x], res.gap[0, -1]
        try:
            d = hull_distance(path, float(res.time[0]), x, a, mesh, max_traces=max_traces)
        except DomainError:
            continue
        out[i] = ((g_xe - g_x) / g_xe, d)
    return out


@dataclass
class RatioReport:
    upper_ok: float       # 比值 <= 4 eps/d 的比例
    lower_ok: float       # d > 4 eps 时比值 >= (16/41) eps/d 的比例
    used: int
    lower_used: int

    def to_record(self, cfg: ExperimentConfig, x: float, y: float, eps: float) -> dict:
        record = base_record(cfg, 'ratio')
        record.update({'x': x, 'y': y, 'eps': eps, 'upper_ok': self.upper_ok,
                       'lower_ok': self.lower_ok, 'used': self.used, 'lower_used': self.lower_used})
        return record


def ratio_estimate_check(cfg: ExperimentConfig, x: float, y: float, eps: float,
                         start: int = 0) -> RatioReport:
    """
    在 T_y 时刻检查
        (g(x+eps) - g(x)) / (g(x+eps) - U) <= 4 eps / d_{T_y}(x)
    以及 d > 4 eps 时的下界 (16/41) eps / d
    """
    if not 0 < y < x:
        raise DomainError(f"要求 0 < y < x: y={y}, x={x}")
    if not eps > 0:
        raise DomainError(f"eps 必须为正: {eps}")
    pts = grid_with(cfg.mesh, x + eps, [y, x, x + eps])
    parts = runner_for(cfg).map(ratio_batch, cfg.samples, start, x=x, y=y, eps=eps, a=cfg.params.a,
                                settings=cfg.sweep_settings(pts, resolve=False), seed=cfg.seed, mesh=cfg.mesh,
                                max_traces=cfg.max_traces)
    data = np.concatenate(parts)
    data = data[np.isfinite(data).all(axis=1) & (data[:, 1] > 0)]
    ratio, d = data[:, 0], data[:, 1]
    upper = ratio <= 4 * eps / d
    far = d > 4 * eps
    lower = ratio[far] >= (16 / 41) * eps / d[far]
    report = RatioReport(upper_ok=float(upper.mean()) if len(upper) else float('nan'),
                         lower_ok=float(lower.mean()) if len(lower) else float('nan'),
                         used=int(len(ratio)), lower_used=int(far.sum()))
    logger.info(f"比值估计检查: 上界成立 {report.upper_ok:.4f}, 下界成立 {report.lower_ok:.4f}")
    return report
