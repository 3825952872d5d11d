"""
估计量与置信区间测试
"""
import numpy as np
import pytest

from experiments.estimate import mean_estimate, wilson_estimate, z_value
from utils.errors import DomainError


def test_z_value_99():
    assert z_value() == pytest.approx(2.5758, abs=1e-4)


def test_wilson_contains_point_estimate():
    est = wilson_estimate(30, 100)
    assert est.value == pytest.approx(0.3)
    assert est.ci_lo < 0.3 < est.ci_hi
    assert est.stderr == pytest.approx(np.sqrt(0.3 * 0.7 / 100))
    assert est.method == 'wilson'


def test_wilson_extremes():
    zero = wilson_estimate(0, 50)
    assert zero.ci_lo == 0.0
    assert zero.ci_hi > 0.0
    full = wilson_estimate(50, 50)
    assert full.ci_hi == 1.0
    assert full.ci_lo < 1.0


def test_wilson_rejects_bad_counts():
    with pytest.raises(DomainError):
        wilson_estimate(5, 0)
    with pytest.raises(DomainError):
        wilson_estimate(6, 5)


def test_mean_of_indicators_uses_wilson():
    est = mean_estimate([0, 1, 1, 0, 1])
    assert est.method == 'wilson'
    assert est.value == pytest.approx(0.6)


def test_mean_of_completed_values():
    values = np.array([0.0, 1.0, 0.25, 0.75, 0.5])
    est = mean_estimate(values)
    assert est.method == 'normal'
    assert est.value == pytest.approx(0.5)
    assert est.stderr == pytest.approx(values.std(ddof=1) / np.sqrt(5))
    assert est.covers(0.5)
    assert est.within(0.5, 0.1)


def test_mean_requires_samples():
    with pytest.raises(DomainError):
        mean_estimate([])


def test_wilson_coverage():
    """重复抽样下 99% Wilson 区间覆盖真值的频率接近名义水平"""
    rng = np.random.default_rng(11)
    p, n = 0.3, 100
    hits = rng.binomial(n, p, size=2000)
    covered = [wilson_estimate(int(h), n).covers(p) for h in hits]
    assert 0.975 <= np.mean(covered) <= 0.998


def test_mean_interval_coverage():
    rng = np.random.default_rng(12)
    truth = 2 / 7   # Beta(2, 5) 的均值
    covered = [mean_estimate(rng.beta(2, 5, size=200)).covers(truth) for _ in range(1000)]
    assert 0.97 <= np.mean(covered) <= 1.0
