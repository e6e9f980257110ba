from __future__ import annotations

import pytest

from hindsight_lab.rng import substream


@pytest.fixture
def rng():
    return substream(12345, "tests")
