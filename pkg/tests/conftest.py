import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from srlte.estimators import RestrictionSpec  # noqa: E402
from srlte.model import Dataset, fit_mle  # noqa: E402
from srlte.simulation import first_difference, gen_design, gen_response, stream  # noqa: E402

FIXTURE_BETA = np.array([0.3, 0.6, 0.4, -0.2, 0.6])
FIXTURE_BETA = FIXTURE_BETA / np.linalg.norm(FIXTURE_BETA)


def make_p4(seed=7, n=100, rho=0.99):
    rng = stream(seed, 99)
    X = gen_design(n, 4, rho, rng)
    y = gen_response(X, FIXTURE_BETA, rng)
    return Dataset(X, y)


@pytest.fixture(scope="session")
def p4_data():
    return make_p4()


@pytest.fixture(scope="session")
def p4_fit(p4_data):
    fit = fit_mle(p4_data)
    assert fit.converged
    return fit


@pytest.fixture(scope="session")
def p4_restriction():
    H = first_difference(4)
    h = H @ FIXTURE_BETA + np.array([0.1, -0.3, 0.2])
    return RestrictionSpec(H, h, np.eye(3))


@pytest.fixture(scope="session")
def small_data():
    """n = 20, p = 2, not separated."""
    rng = np.random.default_rng(11)
    P = rng.standard_normal((20, 2))
    y = (rng.random(20) < 1 / (1 + np.exp(-(0.3 + P @ [1.0, -0.7])))).astype(float)
    return Dataset.from_predictors(P, y)


@pytest.fixture(scope="session")
def default_report():
    """The default grid at 1000 replications, shared by the slow checks."""
    from srlte.simulation import SimulationConfig, run_simulation

    return run_simulation(SimulationConfig(reps=1000))
