import sys
from pathlib import Path

import numpy as np
import pytest

# Add repository root to path
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from linwalk.model import SeededRng, simulate, spec_from_degrees


@pytest.fixture
def two_turn_spec():
    """Three segments with change points at 50 and 100."""
    return spec_from_degrees("lw", [35, -115, 20], [1, 2, 1], sigma2=4.0, horizon=150, change_points=[50, 100])


@pytest.fixture
def null_lw_spec():
    return spec_from_degrees("lw", [35], [1.0], sigma2=0.25, horizon=400)


def noisy_line(theta_deg, r, sigma2, T, seed=0, kind="lw"):
    spec = spec_from_degrees(kind, [theta_deg], [r], sigma2=sigma2, horizon=T)
    return simulate(spec, SeededRng(seed))


def lag_autocorr(x, lag):
    x = np.asarray(x, dtype=float) - np.mean(x)
    return float(np.dot(x[:-lag], x[lag:]) / np.dot(x, x))
