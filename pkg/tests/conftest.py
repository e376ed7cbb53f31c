import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

import pytest

from netplace.scenarios import chain_scenario


@pytest.fixture
def chain():
    return chain_scenario()
