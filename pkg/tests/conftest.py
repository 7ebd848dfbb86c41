import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("sclc", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "sclc"))


@pytest.fixture
def g():
    return np.random.default_rng(1234)


def random_positive_matrix(g, n, spread=4.0, skew=0.3):
    """Well-conditioned matrix with spectrum in the open right half plane."""
    q, _ = np.linalg.qr(g.standard_normal((n, n)))
    d = g.uniform(0.5, spread, n)
    s = g.standard_normal((n, n))
    return q @ np.diag(d) @ q.T + skew * (s - s.T) / max(1.0, np.linalg.norm(s - s.T, 2))
