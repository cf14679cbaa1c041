import itertools

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from bose_expand.fock import (TruncationError, UnsupportedBasisError, assemble_hamiltonian,
                              basis_dimension, enumerate_basis, excitation_basis,
                              excitation_decompose, excitation_reconstruct, hermiticity_defect,
                              dump_operator_csv, one_body_operator, restrict)
from bose_expand.model import CapacityError, CutoffModel, PairPotential, build_mode_set

from conftest import condensate, zero_potential_model


def gaussian_model(N, K=1, d=1, amplitude=1.3, width=0.2):
    modes = build_mode_set(d, K)
    return CutoffModel(modes, PairPotential.gaussian(amplitude, width, modes), N)


@pytest.mark.parametrize("M,N,dim", [(3, 0, 1), (3, 2, 6), (3, 20, 231), (5, 4, 70)])
def test_basis_dimension(M, N, dim):
    assert basis_dimension(M, N) == dim
    d = {3: 1, 5: 1}[M]
    K = {3: 1, 5: 2}[M]
    basis = enumerate_basis(build_mode_set(d, K), N)
    assert basis.dim == dim
    assert np.all(basis.states.sum(axis=1) == N)
    assert len({tuple(s) for s in basis.states}) == dim


def test_basis_budget():
    with pytest.raises(CapacityError):
        enumerate_basis(build_mode_set(1, 2), 40, budget=1000)


def test_basis_lookup_roundtrip():
    basis = enumerate_basis(build_mode_set(1, 2), 6)
    for i, s in enumerate(basis.states):
        assert basis.index(s) == i


def first_quantized_two_body(model):
    """H on (C^M)^{x2} built from plane-wave matrix elements, N = 2."""
    modes = model.modes
    M = modes.size
    kin = modes.kinetic()
    H = np.zeros((M * M, M * M))
    for a, b in itertools.product(range(M), repeat=2):
        H[a * M + b, a * M + b] += kin[a] + kin[b]
        for c, d in itertools.product(range(M), repeat=2):
            k = modes.momenta[c] - modes.momenta[a]
            if np.array_equal(modes.momenta[a] + modes.momenta[b], modes.momenta[c] + modes.momenta[d]):
                H[c * M + d, a * M + b] += model.potential(k) / (model.N - 1)
    return H


def symmetric_embedding(basis):
    M = basis.modes.size
    P = np.zeros((M * M, basis.dim))
    for j, occ in enumerate(basis.states):
        modes = [m for m in range(M) for _ in range(occ[m])]
        perms = set(itertools.permutations(modes))
        for a, b in perms:
            P[a * M + b, j] = 1.0
        P[:, j] /= np.linalg.norm(P[:, j])
    return P


@pytest.mark.parametrize("K,d", [(1, 1), (2, 1), (1, 2)])
def test_two_body_matches_first_quantized(K, d):
    model = gaussian_model(2, K=K, d=d)
    basis = enumerate_basis(model.modes, 2)
    H2 = assemble_hamiltonian(model, basis).toarray()
    P = symmetric_embedding(basis)
    H1 = P.T @ first_quantized_two_body(model) @ P
    assert np.allclose(H2, H1, atol=1e-12)


def test_hamiltonian_hermitian_and_blocks():
    model = gaussian_model(6, K=2)
    basis = enumerate_basis(model.modes, 6)
    H = assemble_hamiltonian(model, basis)
    assert hermiticity_defect(H) <= 1e-14
    P = basis.total_momentum()
    coo = H.tocoo()
    assert np.all(P[coo.row] == P[coo.col])


def test_number_conserved():
    model = gaussian_model(5, K=1, d=2)
    basis = enumerate_basis(model.modes, 5)
    H = assemble_hamiltonian(model, basis)
    Nop = one_body_operator(np.eye(model.modes.size), basis)
    assert np.allclose(Nop.diagonal(), 5)
    assert abs(H @ Nop - Nop @ H).max() <= 1e-10


def test_zero_potential_is_diagonal():
    model = zero_potential_model(N=4, K=2)
    basis = enumerate_basis(model.modes, 4)
    H = assemble_hamiltonian(model, basis)
    assert sp.triu(H, 1).nnz == 0
    assert np.allclose(H.diagonal(), basis.states @ model.modes.kinetic())


def test_shift():
    model = gaussian_model(4)
    a = assemble_hamiltonian(model).toarray()
    b = assemble_hamiltonian(model, shift=2.5).toarray()
    assert np.allclose(a - b, 2.5 * np.eye(len(a)))


def test_decompose_condensate_and_single_excitation():
    modes = build_mode_set(1, 1)
    basis = enumerate_basis(modes, 5)
    psi = np.zeros(basis.dim, complex)
    psi[basis.index([0, 5, 0])] = 1.0
    chi, exc = excitation_decompose(psi, basis, condensate(modes))
    assert np.allclose(chi, exc.vacuum())
    psi[:] = 0
    psi[basis.index([1, 4, 0])] = 1.0
    chi, exc = excitation_decompose(psi, basis, condensate(modes))
    assert chi[exc.index([1, 0])] == 1.0
    assert exc.sectors[np.flatnonzero(chi)[0]] == 1


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_decompose_reconstruct_roundtrip(seed):
    rng = np.random.default_rng(seed)
    modes = build_mode_set(1, 2)
    N = int(rng.integers(2, 7))
    basis = enumerate_basis(modes, N)
    psi = rng.standard_normal(basis.dim) + 1j * rng.standard_normal(basis.dim)
    psi /= np.linalg.norm(psi)
    chi, exc = excitation_decompose(psi, basis, condensate(modes))
    assert np.linalg.norm(chi) == pytest.approx(1.0)
    back = excitation_reconstruct(chi, exc, N, basis)
    assert np.array_equal(back, psi)


def test_reconstruct_rejects_high_sectors():
    modes = build_mode_set(1, 1)
    exc = excitation_basis(modes, 6)
    chi = np.zeros(exc.dim, complex)
    chi[exc.sector_slice(5).start] = 1.0
    with pytest.raises(TruncationError):
        excitation_reconstruct(chi, exc, 4)
    out = excitation_reconstruct(chi, exc, 5)
    assert np.linalg.norm(out) == pytest.approx(1.0)


def test_restrict_projects():
    modes = build_mode_set(1, 1)
    exc = excitation_basis(modes, 4)
    chi = np.ones(exc.dim, complex)
    small, sb = restrict(chi, exc, 2)
    assert sb.dim == int(np.sum(exc.sectors <= 2))
    assert np.allclose(small, 1.0)


def test_non_homogeneous_condensate_rejected():
    modes = build_mode_set(1, 1)
    basis = enumerate_basis(modes, 3)
    phi = np.array([0.6, 0.8, 0.0], complex)
    with pytest.raises(UnsupportedBasisError):
        excitation_decompose(np.ones(basis.dim), basis, phi)


def test_csv_dump(tmp_path):
    model = gaussian_model(3)
    H = assemble_hamiltonian(model)
    path = tmp_path / "h.csv"
    dump_operator_csv(H, path)
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    assert len(rows) == H.nnz
    back = sp.coo_matrix((rows[:, 2] + 1j * rows[:, 3], (rows[:, 0].astype(int), rows[:, 1].astype(int))),
                         shape=H.shape)
    assert abs(back - H).max() == 0.0
    assert path.read_text().splitlines()[0] == "row,col,re,im"
