import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from carinf.core import Dataset, TargetProportions  # noqa: E402
from carinf.randomizers import assign  # noqa: E402
from carinf.rng import RngSeed  # noqa: E402


def make_dataset(seed, n=120, K=2, S=3, scheme="SRS", hetero=True):
    """Random dataset with every cell occupied (re-drawn otherwise)."""
    rng = np.random.default_rng(seed)
    props = np.full(K + 1, 1.0 / (K + 1))
    tp = TargetProportions.constant(props, S)
    for attempt in range(100):
        s = rng.integers(1, S + 1, size=n)
        a = assign(scheme, s, tp, RngSeed(seed, attempt))
        if np.all(np.bincount(a * S + s - 1, minlength=(K + 1) * S) > 0):
            break
    else:
        raise RuntimeError("could not fill every cell")
    scale = 1.0 + a * 0.5 if hetero else 1.0
    y = 0.3 * s + 0.7 * a * (s - 2) + scale * rng.standard_normal(n)
    return Dataset(y, a, s, K, S)


@pytest.fixture
def dataset():
    return make_dataset(0)
