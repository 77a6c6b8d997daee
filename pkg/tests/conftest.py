import math

import numpy as np
import pytest

from pslb.env import Instance, NoiseModel, make_example_5_1

PHI = math.pi / 8


@pytest.fixture
def ex51():
    return make_example_5_1(2, PHI)


@pytest.fixture
def ex51_noiseless():
    return make_example_5_1(2, PHI, noise=NoiseModel("none"))


def single_context(theta, arms=((1.0, 0.0), (0.0, 1.0)), noise="none", lmin=3000, lmax=5000):
    """Stationary one-context instance."""
    return Instance(
        arms=np.array(arms, dtype=float),
        thetas=np.array(theta, dtype=float)[:, None],
        probs=[1.0],
        lmin=lmin,
        lmax=lmax,
        schedule={"kind": "stationary"},
        noise=NoiseModel(noise),
    )


def random_spanning_arms(rng, d_max=6, k_max=20):
    while True:
        d = int(rng.integers(1, d_max + 1))
        K = int(rng.integers(d, k_max + 1))
        X = rng.normal(size=(K, d))
        if np.linalg.matrix_rank(X) == d:
            return X


# One verdict line per acceptance criterion, printed after the run.
ACCEPTANCE = {}


def verdict(number, ok, detail):
    ACCEPTANCE[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    assert ok, detail


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
