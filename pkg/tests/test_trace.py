"""
反向流与 hull 距离测试
"""
import math

import numpy as np
import pytest

from loewner.driver import custom_driver
from loewner.trace import (boundary_probe, hull_distance, koebe_ratio, trace_point, trace_points)
from utils.errors import DomainError

A6 = 1 / 3


class TestTracePoints:
    def test_zero_driver_vertical_segment(self, zero_driver):
        # 零驱动的 hull 是竖直线段 [0, i sqrt(2at)]
        for t in (0.3, 1.0, 2.0):
            p = trace_point(zero_driver, t, 1e-6, A6)
            assert abs(p.point - 1j * math.sqrt(2 * A6 * t)) < 1e-5

    def test_time_zero(self, zero_driver):
        assert trace_point(zero_driver, 0.0, 0.01, A6).point == pytest.approx(0.01j)

    def test_vectorised_matches_scalar(self, zero_driver):
        times = [0.1, 0.55, 1.7]
        many = trace_points(zero_driver, times, 1e-3, A6)
        for t, z in zip(times, many):
            assert z == pytest.approx(trace_point(zero_driver, t, 1e-3, A6).point)

    def test_bad_input(self, zero_driver):
        with pytest.raises(DomainError):
            trace_points(zero_driver, [0.5], 0.0, A6)
        with pytest.raises(DomainError):
            trace_points(zero_driver, [5.0], 1e-3, A6)

    def test_converges_as_delta_shrinks(self):
        """光滑驱动下 delta -> 0 时曲线点收敛"""
        dt = 1e-3
        driver = custom_driver(0.5 * np.sin(3 * dt * np.arange(1001)), dt=dt)
        t = 0.7234
        p1, p2, p3 = (trace_point(driver, t, delta, A6).point for delta in (1e-2, 1e-3, 1e-4))
        assert abs(p2 - p3) < abs(p1 - p2)
        assert abs(p2 - p3) < 1e-3
        assert p3.imag > 0


class TestHullDistance:
    def test_zero_driver(self, zero_driver):
        d = hull_distance(zero_driver, 1.0, 0.7, A6, mesh=1e-3, max_traces=50)
        assert d == pytest.approx(0.7, abs=2e-3)

    def test_time_zero(self, zero_driver):
        assert hull_distance(zero_driver, 0.0, 0.4, A6, mesh=1e-3) == 0.4

    def test_probe_after_jump(self):
        driver = custom_driver([0.0, 0.0, 0.5, 0.5], dt=1e-3)
        probe = boundary_probe(driver, 3e-3, 1.0, A6, mesh=0.05)
        assert 0.4 <= probe.s_t < 0.55
        assert probe.eta_point > probe.s_t
        assert hull_distance(driver, 3e-3, 1.0, A6, mesh=0.05, probe=probe) <= 1.0 - probe.s_t

    def test_swallowed_target(self):
        driver = custom_driver([0.0, 0.0, 0.5, 0.5], dt=1e-3)
        with pytest.raises(DomainError):
            boundary_probe(driver, 3e-3, 0.2, A6, mesh=0.05)

    def test_koebe_ratio_zero_driver(self, zero_driver):
        probe = boundary_probe(zero_driver, 1.0, 1.0, A6, mesh=0.01)
        d = hull_distance(zero_driver, 1.0, 1.0, A6, mesh=0.01, max_traces=50, probe=probe)
        assert 0.25 <= koebe_ratio(d, probe) <= 4.0
