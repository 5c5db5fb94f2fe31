import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ttarecovery.model import make_problem, synthetic_preset  # noqa: E402


@pytest.fixture
def canonical():
    return synthetic_preset()


@pytest.fixture
def noiseless():
    """sigma = zeta = 0, alpha = L = 1, one shift of 3."""
    return make_problem(alpha=1.0, zeta=0.0, sigma=0.0, delta_W=3.0, eps=1.0, radius_r=10.0)
