import numpy as np
import pytest

from crystalwulff import load_preset
from crystalwulff.presets import PRESETS

# filled by tests/test_acceptance.py, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {msg}")


@pytest.fixture(scope="session")
def presets():
    return {name: load_preset(name) for name in PRESETS}


@pytest.fixture(params=PRESETS)
def preset(request):
    return load_preset(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def mc_volume(contains, lo, hi, n, rng):
    """Monte-Carlo volume of ``{contains}`` inside the box ``[lo, hi]``, with its std error."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    pts = rng.uniform(lo, hi, size=(n, len(lo)))
    hit = contains(pts)
    box = float(np.prod(hi - lo))
    p = hit.mean()
    return box * p, box * np.sqrt(p * (1 - p) / n)


def inside(P, pts):
    return np.all(pts @ P.normals.T <= P.offsets, axis=1)
