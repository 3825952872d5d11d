"""
调和测度实验：出口采样频率与闭式对比
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List

import numpy as np
import pandas as pd

from experiments.campaigns import base_record, runner_for
from experiments.config import ExperimentConfig
from experiments.estimate import Estimate, wilson_estimate
from harmonic.exit_sampler import ExitSample, brownian_exits
from harmonic.formulas import hm_halfplane_interval, hm_strip_via_halfplane

logger = logging.getLogger("sle.harmonic")

# 偏差超过该倍数的标准误时给出警告
SIGMA_WARNING = 4.0


def exit_batch(start: int, count: int, domain: str, z: complex, step: float, seed: int,
               slit: float) -> List[ExitSample]:
    return brownian_exits(domain, z, step, seed, count, start=start, slit=slit)


def _events(domain: str, z: complex):
    """(事件名, 判定函数, 闭式值)；没有闭式的事件值为 None"""
    if domain == 'halfplane':
        return [
            ('real[-1,1]', lambda s: -1 <= s.point.real <= 1, hm_halfplane_interval(z, -1.0, 1.0)),
            ('real[0,inf)', lambda s: s.point.real >= 0, hm_halfplane_interval(z, 0.0, math.inf)),
        ]
    if domain == 'strip':
        return [('bottom', lambda s: s.label == 'bottom', hm_strip_via_halfplane(z))]
    return [(label, (lambda s, lab=label: s.label == lab), None) for label in ('bottom', 'top', 'slit')]


@dataclass
class HarmonicReport:
    domain: str
    start: complex
    table: pd.DataFrame
    mean_steps: float
    warnings: List[str] = field(default_factory=list)

    def to_records(self, cfg: ExperimentConfig) -> List[dict]:
        out = []
        for row in self.table.itertuples():
            record = base_record(cfg, 'harmonic')
            record.update({'domain': self.domain, 'start_re': self.start.real, 'start_im': self.start.imag,
                           'event': row.event, 'estimate': row.estimate, 'stderr': row.stderr,
                           'ci_lo': row.ci_lo, 'ci_hi': row.ci_hi, 'exact_or_bound': row.exact})
            out.append(record)
        return out


def harmonic_check(cfg: ExperimentConfig, start: int = 0) -> HarmonicReport:
    """
    从 cfg.start 出发的出口分布与闭式调和测度对比

    Args:
        cfg: 实验配置（domain、start、slit、exit_step、samples）
        start: 第一个样本序号
    """
    z = complex(*cfg.start)
    parts = runner_for(cfg).map(exit_batch, cfg.samples, start, domain=cfg.domain, z=z,
                                step=cfg.exit_step, seed=cfg.seed, slit=cfg.slit)
    samples = [s for part in parts for s in part]

    rows, warnings = [], []
    for name, test, exact in _events(cfg.domain, z):
        hits = sum(1 for s in samples if test(s))
        est: Estimate = wilson_estimate(hits, len(samples))
        rows.append({'event': name, 'estimate': est.value, 'stderr': est.stderr, 'ci_lo': est.ci_lo,
                     'ci_hi': est.ci_hi, 'exact': exact})
        if exact is not None and not est.within(exact, SIGMA_WARNING):
            msg = f"调和测度 {cfg.domain}/{name}: 估计 {est.value:.4f} 与闭式 {exact:.4f} 偏差超过 {SIGMA_WARNING:g}σ"
            logger.warning(msg)
            warnings.append(msg)
        logger.info(f"调和测度 {cfg.domain}/{name}: 估计 {est.value:.4f} ± {est.stderr:.4f}, 闭式 {exact}")
    mean_steps = float(np.mean([s.steps for s in samples]))
    return HarmonicReport(domain=cfg.domain, start=z, table=pd.DataFrame(rows), mean_steps=mean_steps,
                          warnings=warnings)
