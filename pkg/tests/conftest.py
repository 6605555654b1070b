import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def membrane():
    from obstakl import applications as ap
    return ap.build_membrane()


@pytest.fixture(scope="session")
def membrane_l3(membrane):
    from obstakl.fem import DofBasis
    from obstakl.solver import pdas_solve
    from obstakl.mesh import init_square_symmetric
    m = init_square_symmetric(3)
    V, Q = DofBasis.p2b(m), DofBasis.p0(m)
    sol, rep = pdas_solve(membrane, V, Q)
    return m, sol, rep


@pytest.fixture(scope="session")
def ipn_sdf():
    from obstakl.applications import torsion_sdf
    return torsion_sdf()


@pytest.fixture(scope="session")
def torsion_mesh0(ipn_sdf):
    from obstakl.applications import torsion_mesh
    return torsion_mesh(4e-3, ipn_sdf)


def rng(seed=0):
    return np.random.default_rng(seed)
