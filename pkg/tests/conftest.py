import pytest

from scanvar.kernels import Observable

import helpers


@pytest.fixture
def e1():
    return helpers.e1_family()


@pytest.fixture
def e1_f():
    return Observable(helpers.E1_F)
