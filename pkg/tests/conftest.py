import numpy as np
import pytest

from bose_expand.model import PairPotential, benchmark_model, build_mode_set


@pytest.fixture
def bench():
    return benchmark_model(10)


@pytest.fixture
def bench_k2():
    return benchmark_model(10, K=2)


def zero_potential_model(N=10, K=1, d=1):
    modes = build_mode_set(d, K)
    m = benchmark_model(N, K=K, d=d)
    return m.with_potential(PairPotential.constant(0.0, modes))


def condensate(modes):
    phi = np.zeros(modes.size, dtype=complex)
    phi[modes.zero_index] = 1.0
    return phi
