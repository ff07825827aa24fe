import numpy as np
import pytest

from pshflow.grid import Grid
from pshflow.recipes import conformal_metric, flat_metric, kahler_metric, parse_trig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_hermitian(rng, n, size=(), scale=1.0):
    a = rng.standard_normal(size + (n, n)) + 1j * rng.standard_normal(size + (n, n))
    return scale * (a + np.swapaxes(a.conj(), -1, -2)) / 2


def random_positive(rng, n, size=()):
    a = rng.standard_normal(size + (n, n)) + 1j * rng.standard_normal(size + (n, n))
    return a @ np.swapaxes(a.conj(), -1, -2) + 0.5 * np.eye(n)


def metric_family(kind: str, n: int, N: int):
    """Test metrics whose spectral error at (n, N) sits well inside the tolerances."""
    grid = Grid(n, N)
    if kind == "flat":
        return flat_metric(grid)
    if kind == "conformal":
        a = 0.01 if n == 3 else 0.2
        return conformal_metric(grid, parse_trig(f"{a} cos(x1 + y2) + {a} sin(x2)", n))
    if kind == "kahler":
        a = 0.001 if n == 3 else 0.002
        return kahler_metric(grid, parse_trig(f"{a} cos(x1 - y2) + {a} sin(y1 + x2)", n))
    raise ValueError(kind)
