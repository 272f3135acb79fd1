import os
import sys

import jax
import pytest

jax.config.update("jax_enable_x64", True)
sys.path.insert(0, os.path.dirname(__file__))

from krstab.soliton import fixture  # noqa: E402


@pytest.fixture(scope="session")
def kc():
    return fixture("koiso-cao")


@pytest.fixture(scope="session")
def sphere():
    return fixture("round-sphere-2")


@pytest.fixture(scope="session")
def cp1cp1():
    return fixture("cp1xcp1")


@pytest.fixture(scope="session")
def fs2():
    return fixture("fubini-study-2")
