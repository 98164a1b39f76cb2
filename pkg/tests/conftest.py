import numpy as np
import pytest

from coagfrag.config import builtin_configs
from coagfrag.grid import build_grid
from coagfrag.kernels import (
    BreakupKernelSpec,
    CoagKernelSpec,
    CollisionKernelSpec,
    KernelSet,
)


def make_kset(k1=1.0, omega=0.0, k2=1.0, alpha=0.5, beta=0.5, nu=0.0, n=10.0) -> KernelSet:
    return KernelSet(
        coag=CoagKernelSpec(k1=k1, omega=omega),
        coll=CollisionKernelSpec(k2=k2, alpha=alpha, beta=beta),
        brk=BreakupKernelSpec(nu=nu),
        n=n,
    )


@pytest.fixture(scope="session")
def configs():
    return builtin_configs()


@pytest.fixture(scope="session")
def small_grid():
    return build_grid(1e-2, 10.0, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
