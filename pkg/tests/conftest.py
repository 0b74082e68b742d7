import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

from lpbfspatter.fieldstore import GridMeta, make_bundle  # noqa: E402


def bundle_from(alpha_g, alpha_l=None, T=None, p=None, rho=None, u=None, spacing=1.0,
                time=0.0):
    """Bundle with the given (nz, ny, nx) gas fraction; the rest is solid."""
    alpha_g = np.asarray(alpha_g, dtype=np.float64)
    nz, ny, nx = alpha_g.shape
    meta = GridMeta(nx, ny, nz, spacing, spacing, spacing, time=time)
    alpha_l = np.zeros_like(alpha_g) if alpha_l is None else np.asarray(alpha_l, float)
    alpha_s = 1.0 - alpha_g - alpha_l
    full = lambda v, d: np.full(alpha_g.shape, d) if v is None else np.asarray(v, float)  # noqa: E731
    u = np.zeros(alpha_g.shape + (3,)) if u is None else np.asarray(u, float)
    return make_bundle(meta, alpha_g=alpha_g, alpha_s=alpha_s, alpha_l=alpha_l,
                       T=full(T, 300.0), p=full(p, 101325.0), rho=full(rho, 7000.0),
                       ux=u[..., 0], uy=u[..., 1], uz=u[..., 2])


@pytest.fixture
def make():
    return bundle_from


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS):
        terminalreporter.write_line(line)
