"""
SLE 实验室 - 命令行入口

每个子命令对应一类实验：解析配置、运行、把结果写入 ResultStore，
并在标准输出打印汇总表。退出码：0 正常，2 有可靠性警告，1 出错。
"""
import argparse
import logging
import os
import sys
from typing import List, Optional, Tuple

import pandas as pd
import yaml

# 添加src目录到路径
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from analytic.hitmap import f_table, new_hitmap
from database.storage import ResultStore
from experiments import campaigns
from experiments.config import ExperimentConfig, echo_config, parse_config, parse_grid
from experiments.exits import harmonic_check
from experiments.moments import dimension_campaign, second_moment_campaign
from utils.errors import SleLabError
from utils.logger import setup_logger

TOOL_VERSION = "1.0.0"

DEFAULT_SETTINGS = 'config/settings.yaml'
RESULTS_ENV = 'SLELAB_RESULTS'

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_WARNING = 2


def load_settings(path: str = DEFAULT_SETTINGS) -> dict:
    """加载进程级设置（日志、结果目录），文件不存在时返回空配置"""
    if not path or not os.path.exists(path):
        return {}
    with open(path, 'r', encoding='utf-8') as f:
        return yaml.safe_load(f) or {}


def setup_logging(settings: dict, level: Optional[str] = None) -> logging.Logger:
    """配置日志，命令行给出的级别优先"""
    log_config = settings.get('logging', {})
    return setup_logger("sle", log_file=log_config.get('file'), level=level or log_config.get('level', 'INFO'))


def results_dir(cli_value: Optional[str], settings: dict) -> str:
    """结果目录：环境变量 > --results > 设置文件 > results/"""
    return (os.environ.get(RESULTS_ENV) or cli_value
            or settings.get('results', {}).get('dir') or 'results')


# ---------- 参数解析 ----------

def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', '-c', help='Experiment config file (JSON or YAML)')
    common.add_argument('--settings', default=DEFAULT_SETTINGS,
                        help=f'Process settings file (default: {DEFAULT_SETTINGS})')
    common.add_argument('--kappa', type=float, help='SLE parameter kappa')
    common.add_argument('--samples', type=int, help='Number of Monte Carlo samples')
    common.add_argument('--seed', type=int, help='Random seed')
    common.add_argument('--dt', type=float, help='Minimum time step')
    common.add_argument('--workers', type=int, help='Worker processes (1 = serial)')
    common.add_argument('--batch-size', type=int, dest='batch_size', help='Samples per batch')
    common.add_argument('--censoring', choices=['complete', 'strict'], help='Censoring rule at the horizon')
    common.add_argument('--horizon-factor', type=float, dest='horizon_factor',
                        help='Horizon as a multiple of max(point)^2')
    common.add_argument('--max-steps', type=int, dest='max_steps', help='Step cap per sample')
    common.add_argument('--results', help=f'Results directory (env {RESULTS_ENV} takes precedence)')
    common.add_argument('--force', action='store_true', help='Overwrite an existing run with the same id')
    common.add_argument('--log-level', dest='log_level', help='Logging level (DEBUG, INFO, WARNING)')
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='SLE swallowing-time and hitting-probability lab')
    sub = parser.add_subparsers(dest='experiment', required=True)
    common = _common_parser()

    p = sub.add_parser('hit', parents=[common], help='One-interval hitting probability vs F(y/x)')
    p.add_argument('--y', type=float, help='Left endpoint')
    p.add_argument('--x', type=float, help='Right endpoint')
    p.add_argument('--adjacent', type=float, nargs=3, metavar=('X1', 'X2', 'X3'),
                   help='Also estimate the adjacent two-interval event')

    p = sub.add_parser('two-hit', parents=[common], help='Two-interval decay in eps')
    p.add_argument('--y', type=float, help='Left interval start')
    p.add_argument('--x', type=float, help='Right interval start')
    p.add_argument('--eps', type=float, nargs='+', help='Interval lengths')
    p.add_argument('--delta', type=float, dest='delta_margin', help='Interior margin')

    p = sub.add_parser('dimension', parents=[common], help='Dimension fit from dyadic hit counts')
    p.add_argument('--levels', type=int, nargs=2, metavar=('LO', 'HI'), help='Grid levels')

    p = sub.add_parser('second-moment', parents=[common], help='Pairwise joint hit statistics')
    p.add_argument('--level', type=int, dest='grid_level', help='Grid level n')
    p.add_argument('--delta', type=float, dest='delta_margin', help='Interior margin')

    p = sub.add_parser('near-miss', parents=[common], help='P(dist(x, K_Ty) <= r)')
    p.add_argument('--y', type=float, help='Point swallowed first')
    p.add_argument('--x', type=float, help='Point whose distance is measured')
    p.add_argument('--radii', type=float, nargs='+', help='Radii r')
    p.add_argument('--mesh', type=float, help='Grid and reverse-flow resolution')

    p = sub.add_parser('scaling', parents=[common], help='KS test of T_x against x^2 T_1')
    p.add_argument('--x', type=float, dest='scale_x', help='Scale factor x')
    p.add_argument('--coupled', action='store_true', default=None, help='Share sample indices')

    p = sub.add_parser('koebe', parents=[common], help='Koebe distance ratio and ratio estimate checks')
    p.add_argument('--mesh', type=float, help='Grid and reverse-flow resolution')
    p.add_argument('--y', type=float, help='Ratio check: point swallowed first')
    p.add_argument('--x', type=float, help='Ratio check: measured point')
    p.add_argument('--eps', type=float, nargs='+', help='Ratio check: eps (first value used)')

    p = sub.add_parser('harmonic', parents=[common], help='Brownian exit sampler vs closed forms')
    p.add_argument('--domain', choices=['halfplane', 'strip', 'slit-strip'], help='Domain')
    p.add_argument('--start', type=float, nargs=2, metavar=('RE', 'IM'), help='Starting point')
    p.add_argument('--slit', type=float, help='Slit height for slit-strip')
    p.add_argument('--step', type=float, dest='exit_step', help='Step size near the boundary')

    p = sub.add_parser('tables', parents=[common], help='Emit a CSV table of F on [0, 1]')
    p.add_argument('--grid', help='Grid lo:hi:step (default 0:1:0.01)')
    return parser


# 只有这些参数不属于实验配置
PROCESS_ARGS = ('config', 'settings', 'results', 'force', 'log_level', 'y', 'x')


def overrides_from_args(args: argparse.Namespace) -> dict:
    """命令行中属于实验配置的字段"""
    values = {k: v for k, v in vars(args).items() if k not in PROCESS_ARGS and v is not None}
    y, x = getattr(args, 'y', None), getattr(args, 'x', None)
    if y is not None or x is not None:
        if y is None or x is None:
            raise SleLabError("--y 和 --x 必须同时给出")
        values['intervals'] = [(y, x)]
    return values


# ---------- 实验调度 ----------

class SleLab:
    """按子命令运行实验并收集结果记录"""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.logger = logging.getLogger("sle.main")
        self.warnings: List[str] = []

    def run(self) -> Tuple[List[dict], pd.DataFrame]:
        """
        运行实验

        Returns:
            (结果记录, 用于打印的汇总表)
        """
        handler = getattr(self, '_run_' + self.config.experiment.replace('-', '_'))
        records = handler()
        summary = pd.DataFrame(records)
        return records, summary

    def _run_hit(self) -> List[dict]:
        cfg = self.config
        records = []
        for i, (y, x) in enumerate(cfg.intervals):
            res = campaigns.one_interval_experiment(cfg, y, x, start=i * cfg.samples)
            self.warnings.extend(res.warnings)
            records.append(res.to_record(cfg))
        if cfg.adjacent:
            res = campaigns.adjacent_experiment(cfg, *cfg.adjacent, start=len(cfg.intervals) * cfg.samples)
            self.warnings.extend(res.warnings)
            records.append(res.to_record(cfg))
        return records

    def _run_two_hit(self) -> List[dict]:
        cfg = self.config
        records = []
        for y, x in cfg.intervals:
            fit = campaigns.two_interval_decay(cfg, y, x, cfg.eps)
            for res in fit.results:
                self.warnings.extend(res.warnings)
                record = res.to_record(cfg)
                record.update({'exponent': fit.exponent, 'exponent_stderr': fit.exponent_stderr,
                               'exponent_target': fit.target})
                records.append(record)
        return records

    def _run_dimension(self) -> List[dict]:
        report = dimension_campaign(self.config)
        self.warnings.extend(report.warnings)
        return report.to_records(self.config)

    def _run_second_moment(self) -> List[dict]:
        report = second_moment_campaign(self.config)
        self.warnings.extend(report.warnings)
        return report.to_records(self.config)

    def _run_near_miss(self) -> List[dict]:
        cfg = self.config
        records = []
        for y, x in cfg.intervals:
            res = campaigns.near_miss_experiment(cfg, x, y, cfg.radii)
            self.warnings.extend(res.warnings)
            for record in res.to_records(cfg):
                record.update({'exponent': res.exponent, 'exponent_stderr': res.exponent_stderr})
                records.append(record)
        return records

    def _run_scaling(self) -> List[dict]:
        report = campaigns.scaling_test(self.config, self.config.scale_x)
        if report.excluded > campaigns.CENSOR_WARNING * (report.used + report.excluded):
            self.warnings.append(f"尺度检验剔除了 {report.excluded} 个截断样本")
        return [report.to_record(self.config)]

    def _run_koebe(self) -> List[dict]:
        cfg = self.config
        report = campaigns.koebe_check(cfg)
        records = [report.to_record(cfg)]
        if not report.in_band >= 1.0:  # 没有可用样本时为 nan
            self.warnings.append(f"Koebe 比值落在区间内的比例为 {report.in_band:.4f}")
        y, x = cfg.intervals[0]
        if y < x:
            ratio = campaigns.ratio_estimate_check(cfg, x, y, cfg.eps[0])
            records.append(ratio.to_record(cfg, x, y, cfg.eps[0]))
        return records

    def _run_harmonic(self) -> List[dict]:
        report = harmonic_check(self.config)
        self.warnings.extend(report.warnings)
        return report.to_records(self.config)

    def _run_tables(self) -> List[dict]:
        table = f_table(new_hitmap(self.config.params), parse_grid(self.config.grid))
        table.to_csv(sys.stdout, index=False)
        return table.to_dict('records')


def run(argv: Optional[List[str]] = None) -> int:
    """解析参数并运行，返回退出码"""
    args = build_parser().parse_args(argv)
    settings = load_settings(args.settings)
    setup_logging(settings, args.log_level)
    logger = logging.getLogger("sle.main")

    try:
        config, provenance = parse_config(args.config, overrides_from_args(args))
        echo_config(config, provenance)
        store = ResultStore(results_dir(args.results, settings))
        manifest = store.begin(config.run_id, config.model_dump(mode='json'), TOOL_VERSION, force=args.force)

        lab = SleLab(config)
        try:
            records, summary = lab.run()
        except Exception:
            store.finish(manifest, status='failed')
            raise
        store.append(manifest, records)
        store.finish(manifest, status='warning' if lab.warnings else 'ok')
    except SleLabError as e:
        logger.error(f"运行失败: {e}")
        return EXIT_ERROR
    except Exception as e:
        logger.exception(f"未预期的错误: {e}")
        return EXIT_ERROR

    done = f"run_id: {manifest.run_id}  records: {manifest.records}  results: {store.runs_dir}"
    if config.experiment == 'tables':
        # 标准输出只留 CSV
        logger.info(done)
    else:
        with pd.option_context('display.max_columns', None, 'display.width', 200):
            print(summary.to_string(index=False))
        print(done)
    if lab.warnings:
        for w in lab.warnings:
            logger.warning(w)
        return EXIT_WARNING
    return EXIT_OK


def main():
    """主函数"""
    sys.exit(run())


if __name__ == '__main__':
    main()
