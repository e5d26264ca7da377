import numpy as np
import pytest

from toruslab.linear_model import IntMatrix2, classify
from toruslab.models import (CuParams, ManeParams, build_linear, build_mane_cu,
                             build_mane_sc, build_nonspecial)

MAT = IntMatrix2(3, 1, 1, 1)
LAM = -2.6
K_STRIP = 216  # choose_k(mu1, mu2, -2.6); pinned to keep the suite fast


@pytest.fixture(scope="session")
def spec():
    return classify(MAT)


@pytest.fixture(scope="session")
def linear_model(spec):
    return build_linear(MAT)


@pytest.fixture(scope="session")
def g0(spec):
    return build_mane_sc(MAT, ManeParams(abs(spec.mu_s), abs(spec.mu_u),
                                         LAM, K_STRIP))


@pytest.fixture(scope="session")
def g1(g0):
    return build_nonspecial(g0)


@pytest.fixture(scope="session")
def cu_model(spec):
    return build_mane_cu(MAT, CuParams())


@pytest.fixture(scope="session")
def h_g0(g0):
    from toruslab.semiconj import solve_H

    return solve_H(g0, 60, 30)


@pytest.fixture(scope="session")
def h_g1(g1):
    from toruslab.semiconj import solve_H

    return solve_H(g1, 60, 30)


@pytest.fixture(scope="session")
def h_linear(linear_model):
    from toruslab.semiconj import solve_H

    return solve_H(linear_model, 10, 10)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
