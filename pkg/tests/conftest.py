import numpy as np
import pytest

from certopt.harmonic import ChebPoly, TrigPoly
from certopt.model import KSoSModel


def random_model(rng, dim=1, blocks=1, block_size=4, rank=2, scale=2.0, basis="torus"):
    if basis == "torus":
        pos = rng.random((blocks, block_size, dim))
    else:
        pos = rng.uniform(0.0, 0.5, (blocks, block_size, dim))
    fac = rng.standard_normal((blocks, rank, block_size))
    return KSoSModel(pos, fac, scale, basis)


def random_trig(rng, dim=1, degree=3, n_terms=None):
    axis = np.arange(-degree, degree + 1)
    box = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), -1).reshape(-1, dim)
    reps = np.array([w for w in box.tolist() if next((v > 0 for v in w if v), True)])
    if n_terms is not None:
        reps = reps[rng.choice(len(reps), n_terms, replace=False)]
    coeffs = rng.standard_normal(len(reps)) + 1j * rng.standard_normal(len(reps))
    return TrigPoly.hermitian_completion(reps, coeffs, dim)


def random_cheb(rng, dim=1, degree=3):
    axis = np.arange(degree + 1)
    freqs = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), -1).reshape(-1, dim)
    return ChebPoly(freqs, rng.standard_normal(len(freqs)), dim)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
