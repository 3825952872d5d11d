"""
测试公共配置：把 src 加入路径并提供共享夹具
"""
import os
import sys

import pytest

SRC = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'src')
if SRC not in sys.path:
    sys.path.insert(0, SRC)

from analytic.hitmap import new_hitmap  # noqa: E402
from database.storage import ResultStore  # noqa: E402
from loewner.driver import constant_driver  # noqa: E402
from loewner.params import new_params  # noqa: E402


@pytest.fixture(params=[5.0, 6.0, 7.0], ids=['kappa5', 'kappa6', 'kappa7'])
def hitmap(request):
    """kappa = 5, 6, 7 的 HitMap"""
    return new_hitmap(new_params(request.param))


@pytest.fixture
def hitmap6():
    return new_hitmap(new_params(6.0))


@pytest.fixture
def zero_driver():
    """恒为 0 的驱动，horizon 2，dt 1e-3"""
    return constant_driver(2.0, 1e-3)


@pytest.fixture
def store(tmp_path):
    s = ResultStore(str(tmp_path / 'results'))
    yield s
    s.close()
