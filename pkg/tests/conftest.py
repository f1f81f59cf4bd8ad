import math

import numpy as np
import pytest

from lambertdrag.friction import FrictionField

CBRT_9_2 = (9 / 2) ** (1 / 3)  # radius of the zero-energy radial orbit one time unit after collision


@pytest.fixture
def zero():
    return FrictionField.zero()


@pytest.fixture
def rng():
    return np.random.default_rng(20260419)


def parabolic_state(direction=(1.0, 0.0)):
    """t=0 state of r(t) = (9/2)^(1/3) (t+1)^(2/3) along ``direction``."""
    u = np.asarray(direction, dtype=float)
    u = u / math.hypot(*u)
    return CBRT_9_2 * u, (2.0 / 3.0) * CBRT_9_2 * u
