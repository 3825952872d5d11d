"""
正向流、吞没时间与复平面映射测试
"""
import math

import numpy as np
import pytest

from loewner.driver import constant_driver, custom_driver, sample_driver
from loewner.flow import (advance_step, flow_points, flow_until, forward_map, new_point,
                          swallow_time, swallow_time_complex, swallow_times_grid, swallow_tol)
from loewner.params import new_params
from utils.errors import ConsistencyError, DomainError, ResourceLimitError

A6 = 1 / 3


class TestAdvanceStep:
    def test_constant_driver_update(self):
        p = advance_step(new_point(0.5), 0.0, 0.0, 0.01, A6, step_index=1)
        assert p.alive
        assert p.gap == pytest.approx(math.sqrt(0.25 + 2 * A6 * 0.01), rel=1e-14)
        assert p.deriv == pytest.approx(0.5 / p.gap, rel=1e-14)

    def test_jump_swallows(self):
        p = new_point(0.01)
        p = advance_step(p, 0.0, 0.02, 1e-4, A6, step_index=7)
        assert not p.alive
        assert p.step == 7

    def test_dead_point_rejected(self):
        p = advance_step(new_point(0.01), 0.0, 0.02, 1e-4, A6, step_index=1)
        with pytest.raises(DomainError):
            advance_step(p, 0.0, 0.0, 1e-4, A6)

    def test_point_must_be_positive(self):
        with pytest.raises(DomainError):
            new_point(0.0)

    def test_tolerance_scale(self):
        assert swallow_tol(0.25, 1e-4) == pytest.approx(0.1 * math.sqrt(0.25e-4))


class TestZeroDriver:
    def test_gap_closed_form(self, zero_driver):
        x = np.array([0.1, 0.5, 1.0])
        state = flow_points(zero_driver, x, A6)
        assert np.all(state.alive)
        t = zero_driver.horizon
        assert np.allclose(state.gap, np.sqrt(x * x + 2 * A6 * t), rtol=1e-10)
        assert np.allclose(state.deriv, x / np.sqrt(x * x + 2 * A6 * t), rtol=1e-10)

    def test_partial_step(self, zero_driver):
        p = flow_until(zero_driver, 0.3, 0.12345, A6)
        assert p.gap == pytest.approx(math.sqrt(0.09 + 2 * A6 * 0.12345), rel=1e-10)

    def test_never_swallowed(self, zero_driver):
        st = swallow_time(zero_driver, 0.2, A6)
        assert st.censored
        assert st.as_float() == math.inf
        assert st.value == zero_driver.horizon

    def test_forward_map_real_and_complex(self, zero_driver):
        t = 1.5
        for z in (0.7 + 0j, 0.3 + 0.4j, -0.5 + 0.2j, 2j):
            expected = np.sqrt(complex(z) ** 2 + 2 * A6 * t)
            if expected.imag < 0 or (expected.imag == 0 and z.real < 0):
                expected = -expected
            got = forward_map(zero_driver, z, t, A6)
            assert abs(got - expected) <= 1e-8 * abs(expected)

    def test_hydrodynamic_normalisation(self, zero_driver):
        z = 1e4 + 1e4j
        g = forward_map(zero_driver, z, 1.0, A6)
        # g_t(z) = z + at/z + O(1/z^2)
        assert abs((g - z) * z - A6) < 1e-3

    def test_interior_swallow_time(self):
        driver = constant_driver(2.0, 1e-3)
        st = swallow_time_complex(driver, 1j, A6)
        assert not st.censored
        assert st.value == pytest.approx(1 / (2 * A6), abs=1e-6)

    def test_interior_requires_upper_half(self, zero_driver):
        with pytest.raises(DomainError):
            swallow_time_complex(zero_driver, 0.5 + 0j, A6)


class TestBrownianDriver:
    def test_prefix_closure(self):
        driver = sample_driver(new_params(6.0), 4.0, 1e-3, seed=2)
        x = np.linspace(0.02, 1.0, 50)
        state = flow_points(driver, x, A6)
        gone = ~state.alive
        # 被吞没的点构成前缀
        if gone.any():
            last = np.flatnonzero(gone).max()
            assert gone[:last + 1].all()
        times = np.where(gone, state.swallow_time, np.inf)
        assert np.all(np.diff(times) >= 0)

    def test_swallow_time_on_knot(self):
        driver = sample_driver(new_params(6.0), 4.0, 1e-3, seed=4)
        st = swallow_time(driver, 0.05, A6)
        if st.finite:
            assert st.value == pytest.approx(driver.knots[st.step])

    def test_grid_monotone(self):
        driver = sample_driver(new_params(6.0), 2.0, 1e-3, seed=9)
        times = swallow_times_grid(driver, 5, A6)
        assert len(times) == 32
        values = [t.as_float() for t in times]
        assert values == sorted(values)

    def test_grid_level_cap(self, zero_driver):
        with pytest.raises(ResourceLimitError):
            swallow_times_grid(zero_driver, 17, A6)

    def test_jump_driver(self):
        # 第二步驱动跳到 0.5，越过 x = 0.1 和 0.2
        driver = custom_driver([0.0, 0.0, 0.5, 0.5], dt=1e-3)
        state = flow_points(driver, [0.1, 0.2, 1.0], A6)
        assert list(state.swallow_step) == [2, 2, -1]
        assert state.swallow_time[0] == pytest.approx(2e-3)

    def test_monotonicity_is_checked(self, monkeypatch):
        import loewner.flow as flow

        driver = sample_driver(new_params(6.0), 0.5, 1e-3, seed=1)
        real = flow.flow_points

        def scrambled(*args, **kwargs):
            state = real(*args, **kwargs)
            state.swallow_step[:] = -1
            state.swallow_step[-1] = 3
            state.swallow_time[:] = np.inf
            state.swallow_time[-1] = 0.003
            return state

        monkeypatch.setattr(flow, 'flow_points', scrambled)
        with pytest.raises(ConsistencyError):
            swallow_times_grid(driver, 2, A6)
