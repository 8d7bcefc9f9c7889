import sys
from datetime import datetime, timezone
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from offlinefind.keys import SeededEntropy, generate_master

T0 = datetime(2025, 3, 10, 12, 0, 0, tzinfo=timezone.utc)


@pytest.fixture
def master():
    return generate_master(SeededEntropy(1234), creation_time=T0)


@pytest.fixture
def t0():
    return T0
