"""
批次调度测试
"""
import numpy as np
import pytest

from loewner.ensemble import SweepSettings, sweep_ensemble
from scheduler.runner import CampaignRunner
from utils.errors import DomainError

A6 = 1 / 3


def square(start, count, offset=0):
    return [(i + offset) ** 2 for i in range(start, start + count)]


class TestCampaignRunner:
    def test_batches(self):
        runner = CampaignRunner(batch_size=4)
        assert runner.batches(10) == [(0, 4), (4, 4), (8, 2)]
        assert runner.batches(3, start=5) == [(5, 3)]
        assert runner.batches(0) == []

    def test_invalid_settings(self):
        with pytest.raises(DomainError):
            CampaignRunner(workers=0)
        with pytest.raises(DomainError):
            CampaignRunner(batch_size=0)

    def test_map_keeps_order(self):
        runner = CampaignRunner(batch_size=3)
        parts = runner.map(square, 7, offset=1)
        assert [v for part in parts for v in part] == [i * i for i in range(1, 8)]

    def test_serial_matches_parallel(self):
        settings = SweepSettings.for_points([1.0], dt=1e-3, horizon_factor=1e4)
        points = [0.25, 0.5, 1.0]
        serial = CampaignRunner(workers=1, batch_size=3).sweep(points, A6, settings, seed=12, samples=8)
        parallel = CampaignRunner(workers=2, batch_size=3).sweep(points, A6, settings, seed=12, samples=8)
        assert np.array_equal(serial.swallow_step, parallel.swallow_step)
        assert np.array_equal(serial.gap, parallel.gap, equal_nan=True)
        assert serial.indices.tolist() == list(range(8))

    def test_batch_size_irrelevant(self):
        settings = SweepSettings.for_points([1.0], dt=1e-3, horizon_factor=1e4)
        whole = sweep_ensemble([0.5, 1.0], A6, settings, seed=3, count=7)
        split = CampaignRunner(batch_size=2).sweep([0.5, 1.0], A6, settings, seed=3, samples=7)
        assert np.array_equal(whole.swallow_time, split.swallow_time)
