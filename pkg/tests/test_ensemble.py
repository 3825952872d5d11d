"""
自适应扫描引擎测试

吞没时间的精确分布：T_x = x^2 / (2G)，G ~ Gamma(1/2 - a)。
"""
import numpy as np
import pytest
from scipy import stats

from loewner.ensemble import SweepResult, SweepSettings, record_sample, sweep_ensemble
from loewner.flow import flow_points
from utils.errors import DomainError

A6 = 1 / 3


def bessel_cdf(x: float, a: float):
    """P(T_x <= t)"""
    return lambda t: stats.gamma.sf(x * x / (2 * np.asarray(t, dtype=float)), 0.5 - a)


@pytest.fixture(scope='module')
def ensemble():
    settings = SweepSettings.for_points([1.0], dt=1e-4, horizon_factor=1e12)
    return sweep_ensemble([0.25, 0.5, 1.0], A6, settings, seed=21, start=0, count=400)


class TestSweep:
    def test_shapes(self, ensemble):
        assert ensemble.swallow_step.shape == (400, 3)
        assert ensemble.count == 400
        assert list(ensemble.indices[:3]) == [0, 1, 2]

    def test_ordering(self, ensemble):
        times = ensemble.swallow_time
        assert np.all(np.diff(times, axis=1) >= 0)

    def test_bessel_law(self, ensemble):
        t = ensemble.swallow_time[:, 2]
        res = stats.kstest(t, bessel_cdf(1.0, A6))
        assert res.pvalue > 1e-3

    def test_bessel_law_kappa_seven(self):
        a = 2 / 7
        settings = SweepSettings.for_points([0.5], dt=1e-4)
        sweep = sweep_ensemble([0.5], a, settings, seed=3, count=300)
        res = stats.kstest(sweep.swallow_time[:, 0], bessel_cdf(0.5, a))
        assert res.pvalue > 1e-3

    def test_censored_rows_keep_gaps(self):
        settings = SweepSettings(dt=1e-4, horizon=0.01)
        sweep = sweep_ensemble([0.5, 1.0], A6, settings, seed=0, count=20)
        assert np.all(sweep.time <= 0.01 + 1e-15)
        alive = sweep.alive
        assert np.all(np.isfinite(sweep.gap[alive]))
        assert np.all(np.isnan(sweep.gap[~alive]))
        assert np.all(sweep.gap[alive] > 0)

    def test_batch_independence(self):
        settings = SweepSettings.for_points([1.0], dt=1e-4, horizon_factor=1e6)
        whole = sweep_ensemble([0.5, 1.0], A6, settings, seed=8, start=0, count=6)
        parts = SweepResult.concat([
            sweep_ensemble([0.5, 1.0], A6, settings, seed=8, start=0, count=2),
            sweep_ensemble([0.5, 1.0], A6, settings, seed=8, start=2, count=4),
        ])
        assert np.array_equal(whole.swallow_step, parts.swallow_step)
        assert np.array_equal(whole.swallow_time, parts.swallow_time)
        assert np.array_equal(whole.gap, parts.gap, equal_nan=True)

    def test_rejects_unsorted_points(self):
        settings = SweepSettings(dt=1e-4, horizon=1.0)
        with pytest.raises(DomainError):
            sweep_ensemble([0.5, 0.25], A6, settings, seed=0)
        with pytest.raises(DomainError):
            sweep_ensemble([0.0, 0.25], A6, settings, seed=0)

    def test_column_lookup(self, ensemble):
        assert ensemble.column(0.5) == 1
        with pytest.raises(DomainError):
            ensemble.column(0.3)


class TestRecordSample:
    def test_matches_ensemble(self):
        settings = SweepSettings.for_points([1.0], dt=1e-4, horizon_factor=1e6)
        sweep = sweep_ensemble([0.5, 1.0], A6, settings, seed=4, start=5, count=1)
        path, res = record_sample([0.5, 1.0], A6, settings, seed=4, index=5)
        assert np.array_equal(sweep.swallow_step, res.swallow_step)
        assert path.steps == int(res.steps[0])
        assert path.horizon == pytest.approx(float(res.time[0]))

    def test_stop_index(self):
        settings = SweepSettings.for_points([1.0], dt=1e-4)
        path, res = record_sample([0.25, 1.0], A6, settings, seed=2, index=0, stop_index=0)
        if res.swallow_step[0, 0] >= 0:
            assert res.time[0] == pytest.approx(res.swallow_time[0, 0])
            assert res.swallow_step[0, 1] < 0 or res.swallow_step[0, 1] == res.swallow_step[0, 0]

    def test_replay_agrees(self):
        """记录下来的驱动用逐步正向流重放，得到相同的 gap"""
        settings = SweepSettings(dt=1e-4, horizon=0.05)
        path, res = record_sample([0.8, 1.0], A6, settings, seed=6, index=1)
        state = flow_points(path, [0.8, 1.0], A6)
        alive = res.swallow_step[0] < 0
        assert np.array_equal(state.alive, alive)
        assert np.allclose(state.gap[alive], res.gap[0, alive], rtol=1e-9)


@pytest.fixture(scope='module')
def resolved():
    settings = SweepSettings.for_points([1.0], dt=1e-3, horizon_factor=1e12, resolve_eps=1e-3)
    return sweep_ensemble([0.25, 0.5, 1.0], A6, settings, seed=13, count=200)


class TestResolution:
    def test_plain_sweep_has_no_ratios(self, ensemble):
        assert ensemble.ratio is None
        assert ensemble.strides == ()
        assert ensemble.pair_ratio(0, 1) is None

    def test_strides(self, resolved):
        assert resolved.strides == (1, 2)
        assert resolved.ratio.shape == (200, 3, 2)
        settings = SweepSettings(dt=1e-3, horizon=1.0, resolve_eps=1e-3, strides=(1, 4))
        assert settings.pair_strides(3) == (1,)
        assert settings.pair_strides(1) == ()

    def test_retired_points_have_ratios(self, resolved):
        retired = ~resolved.alive
        r1 = resolved.pair_ratio(0, 1)[:, 0]
        r2 = resolved.pair_ratio(0, 2)[:, 0]
        assert np.all(np.isfinite(r1[retired[:, 0]]))
        assert np.all((r1[retired[:, 0]] >= 0) & (r1[retired[:, 0]] <= 1))
        # g_0 / g_2 <= g_0 / g_1
        both = retired[:, 0] & (r2 > 0)
        assert np.all(r2[both] <= r1[both] + 1e-12)
        # 最右的点没有右邻
        assert np.all(np.isnan(resolved.ratio[:, 2, :]))

    def test_retirement_is_decided(self, resolved):
        """按 gap 比退出的点对，比值落在 [0, eps) 或 (1-eps, 1]，命中判定与比值一致"""
        retired = ~resolved.alive[:, 0]
        r1 = resolved.pair_ratio(0, 1)[retired, 0]
        decided = (r1 < 1e-3) | (r1 > 1 - 1e-3)
        assert decided.mean() > 0.95
        assert np.array_equal(resolved.hit[retired, 0][decided], r1[decided] < 0.5)

    def test_ordering(self, resolved):
        assert np.all(np.diff(resolved.swallow_time, axis=1) >= 0)

    def test_last_point_bessel_law(self, resolved):
        """退出规则不改变驱动，最右点仍服从 Bessel 吞没时间分布"""
        t = resolved.swallow_time[:, 2]
        res = stats.kstest(t, bessel_cdf(1.0, A6))
        assert resolved.censored.mean() < 0.05
        assert res.pvalue > 1e-3

    def test_pair_hits_are_or_of_adjacent(self, resolved):
        adj = resolved.adjacent_hits()
        assert adj.shape == (200, 2)
        wide = resolved.pair_hits(0, 2)[:, 0]
        assert np.array_equal(wide, adj[:, 0] | adj[:, 1])
        with pytest.raises(DomainError):
            resolved.pair_hits(1, 2)

    def test_missing_stride_rejected(self):
        settings = SweepSettings(dt=1e-3, horizon=1.0, resolve_eps=1e-3, strides=(1,))
        sweep = sweep_ensemble([0.25, 0.5, 1.0], A6, settings, seed=0, count=3)
        assert sweep.pair_ratio(0, 1).shape == (3, 1)
        with pytest.raises(DomainError):
            sweep.pair_ratio(0, 2)

    def test_batch_independence(self):
        settings = SweepSettings.for_points([1.0], dt=1e-3, horizon_factor=1e6, resolve_eps=1e-3)
        whole = sweep_ensemble([0.5, 1.0], A6, settings, seed=8, start=0, count=5)
        parts = SweepResult.concat([
            sweep_ensemble([0.5, 1.0], A6, settings, seed=8, start=0, count=3),
            sweep_ensemble([0.5, 1.0], A6, settings, seed=8, start=3, count=2),
        ])
        assert np.array_equal(whole.swallow_step, parts.swallow_step)
        assert np.array_equal(whole.hit, parts.hit)
        assert np.array_equal(whole.ratio, parts.ratio, equal_nan=True)
        assert parts.strides == (1,)
