import math

import pytest
from hypothesis import settings

from qdemon import PhysicalParams

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def params():
    return PhysicalParams()


@pytest.fixture
def ideal():
    return PhysicalParams(t1=math.inf)
