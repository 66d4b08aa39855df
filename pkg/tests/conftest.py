import numpy as np
import pytest

from conservative_nbody.model import CartesianState, ExtendedState, Parameters, init_extended, layout

ACCEPTANCE_LINES: list[str] = []


def random_cartesian(rng, n=3, min_sep=0.7, box=1.0, vscale=0.5, t=None):
    """Unit-scale Cartesian state with every pair at least ``min_sep`` apart."""
    while True:
        pos = rng.uniform(-box, box, size=(n, 3))
        lay = layout(Parameters(np.ones(n)))
        if lay.distances(pos).min() >= min_sep:
            break
    vel = rng.uniform(-vscale, vscale, size=(n, 3))
    return CartesianState(rng.uniform(-1, 1) if t is None else t, pos, vel)


def random_params(rng, n=3):
    return Parameters(rng.uniform(0.5, 2.0, size=n), rng.uniform(0.5, 2.0))


def random_extended(rng, n=3, on_manifold=True, **kw):
    c = random_cartesian(rng, n, **kw)
    if on_manifold:
        return init_extended(c, Parameters(np.ones(n)))
    P = n * (n - 1) // 2
    return ExtendedState(c.t, c.pos, c.vel, rng.uniform(0.5, 2.0, P), rng.uniform(0.5, 2.0, P))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
