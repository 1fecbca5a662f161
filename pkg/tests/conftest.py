import json
from pathlib import Path

import numpy as np
import pytest

from deepdist import distributions

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def special_values():
    return json.loads((FIXTURES / "special_values.json").read_text())


@pytest.fixture
def no_nu_floor(monkeypatch):
    """Lift the production nu > 2 floor (used only for the Cauchy special case)."""
    monkeypatch.setattr(distributions, "NU_FLOOR", 0.0)


def central_difference(f, x, h=1e-6):
    """Numerical gradient of the scalar function ``f`` at array ``x``."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f(x)
        x[idx] = old - h
        fm = f(x)
        x[idx] = old
        g[idx] = (fp - fm) / (2.0 * h)
    return g


def assert_grad_close(analytic, numeric, rtol=1e-5, atol=1e-8):
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    err = np.abs(analytic - numeric)
    bound = atol + rtol * np.maximum(np.abs(analytic), np.abs(numeric))
    bad = err > bound
    assert not bad.any(), (
        f"{bad.sum()} gradient entries differ; worst abs err {err.max():.3e}, "
        f"analytic {analytic[bad][:3]}, numeric {numeric[bad][:3]}"
    )


def three_sigma_band(p, trials):
    s = np.sqrt(p * (1 - p) / trials)
    return p - 3 * s, p + 3 * s
