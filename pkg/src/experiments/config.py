"""
实验配置

配置文件为 UTF-8 JSON 或 YAML（JSON 是 YAML 的子集，统一用 yaml.safe_load 读取），
命令行参数覆盖文件中的值。未知字段直接拒绝。
"""
import hashlib
import json
import logging
import math
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from loewner.ensemble import SweepSettings
from loewner.params import SleParams, new_params
from utils.errors import ConfigError

logger = logging.getLogger("sle.config")

EXPERIMENTS = ('hit', 'two-hit', 'dimension', 'second-moment', 'near-miss', 'scaling',
               'koebe', 'harmonic', 'tables')

# 不依赖命中区间的实验
NON_HITTING = ('harmonic',)

# 结果与之无关的执行参数，不计入 run_id
EXECUTION_FIELDS = ('workers', 'batch_size')

DEFAULT_DT = 1e-4

# 未显式给出 intervals 时各实验的默认区间
DEFAULT_INTERVALS = {
    'two-hit': [(0.375, 0.625)],
    'near-miss': [(0.25, 0.75)],
}


def level_dt(n: int) -> float:
    """网格层级 n 对应的步长 min(1e-4, 0.1 * 4^-n)"""
    return min(DEFAULT_DT, 0.1 * 4.0 ** (-n))


class ExperimentConfig(BaseModel):
    """一次实验的全部参数"""
    model_config = ConfigDict(extra='forbid')

    experiment: Literal['hit', 'two-hit', 'dimension', 'second-moment', 'near-miss', 'scaling',
                        'koebe', 'harmonic', 'tables'] = 'hit'
    kappa: float = 6.0
    samples: int = Field(2000, ge=1)
    seed: int = Field(0, ge=0)
    dt: Optional[float] = Field(None, gt=0)

    # 网格与区间
    levels: Tuple[int, int] = (4, 11)
    grid_level: int = Field(8, ge=1, le=16)
    delta_margin: float = Field(0.1, gt=0, lt=0.5)
    intervals: List[Tuple[float, float]] = [(0.5, 1.0)]
    eps: List[float] = [1 / 16, 1 / 32, 1 / 64]
    adjacent: Optional[Tuple[float, float, float]] = None
    radii: List[float] = [0.02, 0.04, 0.08]
    scale_x: float = Field(0.5, gt=0)
    coupled: bool = False
    mesh: float = Field(0.01, gt=0)
    max_traces: int = Field(400, ge=2)

    # 调和测度
    domain: Literal['halfplane', 'strip', 'slit-strip'] = 'strip'
    start: Tuple[float, float] = (0.0, math.pi / 2)
    slit: float = Field(math.pi / 2, gt=0, lt=math.pi)
    exit_step: float = Field(1e-3, gt=0)

    # F 表
    grid: str = '0:1:0.01'

    # 扫描与执行
    step_ratio: float = Field(0.1, gt=0, le=1)
    horizon_factor: float = Field(1e12, gt=0)
    max_steps: int = Field(200_000, ge=1)
    batch_size: int = Field(256, ge=1)
    chunk: int = Field(1024, ge=1)
    workers: int = Field(1, ge=1)
    censoring: Literal['complete', 'strict'] = 'complete'
    resolve_eps: float = Field(1e-4, ge=0, lt=0.5)

    @field_validator('levels')
    @classmethod
    def _check_levels(cls, v):
        lo, hi = v
        if not (1 <= lo <= hi <= 16):
            raise ValueError(f"levels 必须满足 1 <= lo <= hi <= 16: {v}")
        return v

    @field_validator('intervals')
    @classmethod
    def _check_intervals(cls, v):
        for y, x in v:
            if not (0 < y <= x):
                raise ValueError(f"区间必须满足 0 < y <= x: ({y}, {x})")
        return v

    @model_validator(mode='after')
    def _check_kappa(self):
        params = new_params(self.kappa)
        if self.experiment not in NON_HITTING:
            params.require_hitting_regime()
        if self.dt is None:
            self.dt = level_dt(self.levels[1]) if self.experiment == 'dimension' else DEFAULT_DT
        if 'intervals' not in self.model_fields_set and self.experiment in DEFAULT_INTERVALS:
            self.intervals = list(DEFAULT_INTERVALS[self.experiment])
        return self

    @property
    def params(self) -> SleParams:
        return new_params(self.kappa)

    def sweep_settings(self, points, resolve: bool = True,
                       strides: Optional[Tuple[int, ...]] = None) -> SweepSettings:
        """
        扫描参数，horizon = horizon_factor * max(points)^2

        resolve=False 时按吞没先后判断（只关心吞没时刻与几何量的实验用这个）；
        strides 为需要记录 gap 比的列距，None 表示全部。
        """
        return SweepSettings.for_points(points, self.dt, self.horizon_factor,
                                        step_ratio=self.step_ratio, max_steps=self.max_steps,
                                        chunk=self.chunk, resolve_eps=self.resolve_eps if resolve else 0.0,
                                        strides=strides)

    def canonical_json(self) -> str:
        """规范化 JSON，不含只影响执行方式的字段"""
        values = self.model_dump(mode='json', exclude=set(EXECUTION_FIELDS))
        return json.dumps(values, sort_keys=True, separators=(',', ':'))

    @property
    def run_id(self) -> str:
        """配置内容的哈希（含 seed，不含 workers / batch_size），前 16 位十六进制"""
        return hashlib.sha256(self.canonical_json().encode('utf-8')).hexdigest()[:16]


def _format_errors(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        where = '.'.join(str(p) for p in e['loc']) or 'config'
        parts.append(f"{where}: {e['msg']}")
    return '; '.join(parts)


def load_config_file(path: str) -> dict:
    """读取 JSON/YAML 配置文件"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"无法读取配置文件 {path}: {e}")
    except yaml.YAMLError as e:
        raise ConfigError(f"配置文件 {path} 格式错误: {e}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"配置文件 {path} 顶层必须是对象")
    return data


def parse_config(path: Optional[str] = None,
                 overrides: Optional[dict] = None) -> Tuple[ExperimentConfig, Dict[str, str]]:
    """
    解析配置

    Args:
        path: 配置文件路径（可选）
        overrides: 命令行给出的字段，值为 None 的忽略

    Returns:
        (ExperimentConfig, 每个字段的来源 default / file / flag)
    """
    data = load_config_file(path) if path else {}
    flags = {k: v for k, v in (overrides or {}).items() if v is not None}
    merged = {**data, **flags}
    try:
        config = ExperimentConfig(**merged)
    except ValidationError as e:
        raise ConfigError(_format_errors(e))

    provenance = {}
    for name in ExperimentConfig.model_fields:
        if name in flags:
            provenance[name] = 'flag'
        elif name in data:
            provenance[name] = 'file'
        else:
            provenance[name] = 'default'
    return config, provenance


def echo_config(config: ExperimentConfig, provenance: Dict[str, str]):
    """把最终配置连同来源写入日志"""
    values = config.model_dump(mode='json')
    for name, value in values.items():
        logger.info(f"配置 {name} = {value!r} ({provenance.get(name, 'default')})")


def parse_grid(text: str) -> np.ndarray:
    """
    解析 'lo:hi:step' 形式的网格（包含两端）

    Args:
        text: 例如 '0:1:0.01'
    """
    try:
        lo, hi, step = (float(s) for s in text.split(':'))
    except ValueError:
        raise ConfigError(f"网格格式应为 lo:hi:step: {text!r}")
    if not (step > 0 and hi >= lo):
        raise ConfigError(f"网格参数不合法: {text!r}")
    count = int(round((hi - lo) / step))
    return lo + step * np.arange(count + 1)
