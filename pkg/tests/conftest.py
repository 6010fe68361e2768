import numpy as np
import pytest

from gospa_planner import BernoulliDiracPrior, PosteriorState, SensorModel


def random_posterior(rng: np.random.Generator, n: int | None = None, spread: float = 8.0,
                     p0: float | None = None) -> PosteriorState:
    """Arbitrary normalised posterior over ``n`` Dirac hypotheses."""
    n = int(rng.integers(1, 21)) if n is None else n
    pts = rng.normal(0.0, spread, size=(n, 2))
    w = rng.dirichlet(np.ones(n))
    q = float(rng.random()) if p0 is None else p0
    return PosteriorState(np.concatenate([[q], (1 - q) * w]), w, w @ pts, pts)


def random_prior(rng: np.random.Generator, n: int, r: float = 0.8, spread: float = 6.0,
                 center=(0.0, 0.0)) -> BernoulliDiracPrior:
    pts = np.asarray(center) + rng.normal(0.0, spread, size=(n, 2))
    return BernoulliDiracPrior(r, rng.dirichlet(np.ones(n)), pts)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def sensor():
    return SensorModel.isotropic(10.0, 0.6, 0.0, 1e-10)


@pytest.fixture
def clutter_sensor():
    return SensorModel.isotropic(10.0, 0.8, 0.01, 1e-2)



def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
