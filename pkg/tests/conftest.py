import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from bfbm.constants import make_hurst_params, params_from_alpha  # noqa: E402
from bfbm.renewal import build_renewal_table  # noqa: E402
from utils.workers import set_worker_count  # noqa: E402


@pytest.fixture(scope="session")
def p85():
    return make_hurst_params(0.85)


@pytest.fixture(scope="session")
def p75():
    return make_hurst_params(0.75)


@pytest.fixture(scope="session")
def p35():
    """alpha = 0.35, the urn exponent used by most urn tests"""
    return params_from_alpha(0.35)


@pytest.fixture(scope="session")
def tbl35():
    return build_renewal_table(0.35, 1 << 15)


@pytest.fixture
def single_worker():
    """Run replicas inline, restoring a small pool afterwards"""
    set_worker_count(1)
    yield
    set_worker_count(2)
