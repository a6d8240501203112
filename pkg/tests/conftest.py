import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from crossbt.marketdata import PriceMatrix, SynthSpec, generate_synthetic


@pytest.fixture
def tiny_panel() -> PriceMatrix:
    """The 3-day, 2-asset panel used by the worked engine examples."""
    return PriceMatrix(
        ("1", "2", "3"), ("A", "B"), np.array([[10.0, 20.0], [11.0, 19.0], [12.0, 18.0]])
    )


@pytest.fixture
def small_universe() -> PriceMatrix:
    """6 assets, 300 days, 6 sectors; enough history for short-window signals."""
    return generate_synthetic(
        SynthSpec(n_assets=6, n_days=300, seed=42, annual_vol=0.25, annual_drift=0.08)
    )


@pytest.fixture
def bucket_universe() -> PriceMatrix:
    """36 assets over 6 sectors for stratification tests."""
    return generate_synthetic(
        SynthSpec(n_assets=36, n_days=260, seed=5, annual_vol=0.3, annual_drift=0.05)
    )
