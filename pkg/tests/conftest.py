import numpy as np
import pytest

from kronmem.core import KroneckerCovariance
from kronmem.mem import MemModel, ParcelPrior

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def random_spd(rng, n, cond=10.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = np.geomspace(1.0, cond, n)
    S = (Q * w) @ Q.T
    return 0.5 * (S + S.T)


def random_model(rng, L=4, J=3, K=10, P=2, gaussian=False):
    """Small MEM model with random SPD factors and a random column split."""
    cuts = np.sort(rng.choice(np.arange(1, K), size=P - 1, replace=False))
    parcels = np.split(rng.permutation(K), cuts)
    noise = KroneckerCovariance(random_spd(rng, L), random_spd(rng, J))
    G = rng.standard_normal((J, K))
    priors = []
    for idx in parcels:
        Kp = idx.size
        v = float(rng.uniform(0.2, 2.0))
        if gaussian:
            priors.append(ParcelPrior.gaussian(L, Kp, v, alpha=float(rng.uniform(0.05, 0.95))))
        else:
            priors.append(ParcelPrior(float(rng.uniform(0.05, 0.95)), v,
                                      rng.standard_normal((L, Kp)),
                                      random_spd(rng, L, 5.0), random_spd(rng, Kp, 5.0)))
    return MemModel(G, noise, priors, parcels)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
