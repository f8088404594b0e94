import numpy as np
import pytest

from mobius_sphere import io
from mobius_sphere.tables import load_tables, shipped_scheme_path


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


@pytest.fixture(scope="session")
def scheme():
    return io.load_scheme(shipped_scheme_path())


@pytest.fixture(scope="session")
def tables8():
    return load_tables(8)


@pytest.fixture(scope="session")
def tables16():
    return load_tables(16)


@pytest.fixture(scope="session")
def table_dir(tmp_path_factory):
    """A populated table cache for B = 8 and 16, shared by CLI tests."""
    from mobius_sphere.tables import precompute

    root = tmp_path_factory.mktemp("tables")
    for B in (8, 16):
        precompute(B, directory=root)
    return root


def rel_l2(a, b):
    return float(np.linalg.norm(np.ravel(a - b)) / np.linalg.norm(np.ravel(b)))
