"""
Monte Carlo 实验测试（小样本，固定种子）
"""
import math

import numpy as np
import pytest

from analytic.hitmap import adjacent_two_interval, expected_hit_count, new_hitmap
from analytic.triangle import barycentric, new_triangle
from experiments.campaigns import (adjacent_experiment, fit_power, grid_with, koebe_check,
                                   near_miss_experiment, one_interval_experiment, ratio_estimate_check,
                                   scaling_test, two_interval_bound, two_interval_decay,
                                   two_interval_experiment)
from experiments.config import ExperimentConfig
from experiments.exits import harmonic_check
from experiments.moments import dimension_campaign, second_moment_campaign
from loewner.ensemble import SweepSettings, record_sample
from loewner.flow import swallow_time_complex
from loewner.params import new_params
from utils.errors import DomainError, OutOfRegimeError


def config(**kwargs) -> ExperimentConfig:
    base = dict(seed=7, dt=1e-3, horizon_factor=1e6, batch_size=64)
    base.update(kwargs)
    return ExperimentConfig(**base)


class TestOneInterval:
    def test_kappa_six_half(self):
        cfg = config(samples=400)
        res = one_interval_experiment(cfg, 0.5, 1.0)
        assert res.exact == pytest.approx(0.5, abs=1e-12)
        assert abs(res.estimate.value - 0.5) < 4 * math.sqrt(0.25 / 400)
        record = res.to_record(cfg)
        assert record['exact_or_bound'] == pytest.approx(0.5)
        assert record['y'] == 0.5 and record['x'] == 1.0

    def test_degenerate(self):
        res = one_interval_experiment(config(samples=10), 0.5, 0.5)
        assert res.exact == 0.0
        assert res.estimate.value == 0.0

    def test_domain(self):
        with pytest.raises(DomainError):
            one_interval_experiment(config(samples=10), 0.6, 0.4)
        with pytest.raises(DomainError):
            one_interval_experiment(config(samples=10), 0.5, 1.5)


class TestTwoInterval:
    def test_bound_shape(self):
        a = 1 / 3
        assert two_interval_bound(0.3, 0.6, 0.01, a) == pytest.approx(0.01 ** (2 / 3) * 0.3 ** (-1 / 3))

    def test_small_run(self):
        cfg = config(samples=60)
        res = two_interval_experiment(cfg, 0.375, 0.625, 1 / 16)
        assert 0 <= res.estimate.value <= 1
        assert res.bound > 0

    def test_domain(self):
        cfg = config(samples=10)
        with pytest.raises(DomainError):
            two_interval_experiment(cfg, 0.05, 0.6, 0.01)
        with pytest.raises(DomainError):
            two_interval_experiment(cfg, 0.3, 0.6, 0.2)

    def test_fit_power(self):
        xs = [0.1, 0.2, 0.4]
        slope, err = fit_power(xs, [3 * x ** 1.5 for x in xs])
        assert slope == pytest.approx(1.5)
        assert err == pytest.approx(0.0, abs=1e-9)
        with pytest.raises(DomainError):
            fit_power(xs, [0.0, 0.0, 1.0])


class TestScaling:
    def test_scale_invariance(self):
        report = scaling_test(config(samples=300, dt=1e-4), 0.5)
        assert report.pvalue > 1e-3
        assert report.used + report.excluded == 300
        assert not report.coupled

    def test_positive_scale(self):
        with pytest.raises(DomainError):
            scaling_test(config(samples=10), 0.0)


class TestNearMiss:
    def test_grid_with(self):
        grid = grid_with(0.25, 1.0, [0.3, 1.0])
        assert grid.tolist() == [0.25, 0.3, 0.5, 0.75, 1.0]

    def test_small_run(self):
        cfg = config(samples=8, mesh=0.05, max_traces=50)
        res = near_miss_experiment(cfg, 0.75, 0.25, [0.05, 0.1])
        assert res.table['r'].tolist() == [0.05, 0.1]
        est = res.table['estimate'].to_numpy()
        # 半径越大，事件越容易发生
        assert est[0] <= est[1]
        assert len(res.to_records(cfg)) == 2

    def test_radius_regime(self):
        with pytest.raises(OutOfRegimeError):
            near_miss_experiment(config(samples=2), 0.75, 0.25, [0.2])


class TestKoebe:
    def test_structure(self):
        cfg = config(samples=4, mesh=0.05, max_traces=50)
        report = koebe_check(cfg)
        assert report.ratios.shape == (4,)
        assert report.skipped <= 4
        record = report.to_record(cfg)
        assert record['band_lo'] == 0.2 and record['band_hi'] == 5.0

    def test_ratio_check_domain(self):
        with pytest.raises(DomainError):
            ratio_estimate_check(config(samples=2), 0.3, 0.6, 0.01)


class TestHarmonic:
    def test_strip(self):
        cfg = config(experiment='harmonic', samples=400, domain='strip', exit_step=1e-2)
        report = harmonic_check(cfg)
        row = report.table.iloc[0]
        assert row['event'] == 'bottom'
        assert row['exact'] == pytest.approx(0.5)
        assert abs(row['estimate'] - 0.5) < 4 * math.sqrt(0.25 / 400) + 0.02
        assert report.mean_steps > 0
        assert len(report.to_records(cfg)) == 1

    def test_slit_strip_has_no_closed_form(self):
        cfg = config(experiment='harmonic', samples=50, domain='slit-strip',
                     start=(0.5, math.pi / 4), exit_step=1e-2)
        report = harmonic_check(cfg)
        assert report.table['event'].tolist() == ['bottom', 'top', 'slit']
        assert report.table['exact'].isna().all()
        assert report.table['estimate'].sum() == pytest.approx(1.0)


class TestGridCampaigns:
    def test_dimension(self):
        cfg = config(experiment='dimension', samples=60, levels=(2, 4), dt=1e-4)
        report = dimension_campaign(cfg)
        assert report.fit.levels == [2, 3, 4]
        assert report.target == pytest.approx(2 - 4 / 3)
        records = report.to_records(cfg)
        assert records[-1]['experiment'] == 'dimension-fit'
        assert [r['level'] for r in records[:-1]] == [2, 3, 4]
        # 计数随层级增长
        assert np.all(np.diff(report.fit.counts) >= 0)

    def test_second_moment(self):
        cfg = config(experiment='second-moment', samples=60, grid_level=4, delta_margin=0.25, dt=1e-4)
        report = second_moment_campaign(cfg)
        assert report.profile['k'].tolist() == list(range(4, 13))
        assert len(report.table.frame) == 9 * 8 // 2
        kinds = {r['experiment'] for r in report.to_records(cfg)}
        assert kinds == {'first-moment', 'second-moment', 'second-moment-bound'}

    def test_mean_counts_match_exact(self):
        """各层 E[N_n] 与精确值 Σ F((k-1)/k) 一致，拟合斜率与精确计数的斜率一致"""
        cfg = config(experiment='dimension', samples=200, levels=(2, 5), resolve_eps=1e-3,
                     horizon_factor=1e8, batch_size=200)
        report = dimension_campaign(cfg)
        hitmap = new_hitmap(cfg.params)
        for n, mean, err in zip(report.fit.levels, report.fit.counts, report.fit.count_stderr):
            exact = expected_hit_count(n, hitmap)
            assert report.expected[n] == pytest.approx(exact)
            assert abs(mean - exact) < 4 * err + 0.03 * exact
        levels = np.arange(2, 6)
        exact_slope = np.polyfit(levels, np.log2([expected_hit_count(n, hitmap) for n in levels]), 1)[0]
        assert abs(report.fit.slope - exact_slope) < 0.1


class TestExactOracles:
    def test_adjacent_intervals(self):
        cfg = config(samples=800, batch_size=800, resolve_eps=1e-3)
        res = adjacent_experiment(cfg, 0.25, 0.5, 1.0)
        hitmap = new_hitmap(cfg.params)
        assert res.exact == pytest.approx(adjacent_two_interval(0.25, 0.5, 1.0, hitmap))
        assert abs(res.estimate.value - res.exact) < 4 * res.estimate.stderr + 0.03

    def test_two_interval_decay_exponent(self):
        cfg = config(samples=1500, batch_size=1500, resolve_eps=1e-3)
        fit = two_interval_decay(cfg, 0.375, 0.625, [1 / 16, 1 / 32, 1 / 64])
        assert fit.target == pytest.approx(2 / 3)
        values = [r.estimate.value for r in fit.results]
        assert values[0] > values[1] > values[2] > 0
        assert abs(fit.exponent - fit.target) < 0.4

    def test_barycentric_at_i(self):
        """z = i 先于 1 被吞没的频率与重心坐标 c0 一致"""
        params = new_params(6.0)
        hitmap = new_hitmap(params)
        c0 = barycentric(1j, new_triangle(hitmap), hitmap).c0
        settings = SweepSettings.for_points([1.0], dt=1e-4)
        before, used = 0, 0
        for index in range(300):
            path, res = record_sample([1.0], params.a, settings, seed=17, index=index)
            if res.swallow_step[0, 0] < 0:
                continue
            used += 1
            t_1 = float(res.swallow_time[0, 0])
            t_z = swallow_time_complex(path, 1j, params.a)
            # 同一个环同时吞没 z 和 1 时数值上可能相差几步
            if not t_z.censored and t_z.value < t_1 * (1 - 1e-3):
                before += 1
        assert used > 280
        p_hat = before / used
        assert abs(p_hat - c0) < 4 * math.sqrt(c0 * (1 - c0) / used) + 0.05


class TestGeometricChecks:
    def test_koebe_in_band(self):
        cfg = config(samples=12, mesh=0.05, max_traces=50)
        report = koebe_check(cfg)
        assert report.skipped < 12
        assert report.in_band >= 0.75

    def test_near_miss_exponent(self):
        cfg = config(samples=400, mesh=0.01, max_traces=100, batch_size=400)
        res = near_miss_experiment(cfg, 0.75, 0.25, [0.02, 0.04, 0.08])
        assert np.all(np.diff(res.table['estimate'].to_numpy()) >= 0)
        assert abs(res.exponent - 1.0) < 0.5
