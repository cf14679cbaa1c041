import numpy as np
import pytest
import scipy.linalg as sla

from bose_expand.bogoliubov import assemble_H0, bogoliubov_map, chi0_state
from bose_expand.dynamics import (IntegrationAccuracyError, QuenchSpec, chi0_at,
                                  chi1_vector_at, envelope_fit, evolve_bogoliubov, evolve_hartree,
                                  hartree_convergence_order, norm_error_report, norm_errors,
                                  quench_errors_over_time, quench_pipeline)
from bose_expand.fock import excitation_basis, word_operator
from bose_expand.ladder import ann, cre
from bose_expand.model import CutoffModel, PairPotential, benchmark_model, build_mode_set
from bose_expand.oracle import StepSizeError
from bose_expand.perturbation import assemble_H1, compute_chi1, embed

from conftest import condensate, zero_potential_model


def gaussian_model(N=10, K=2):
    modes = build_mode_set(1, K)
    return CutoffModel(modes, PairPotential.gaussian(2.0, 0.15, modes), N)


def test_homogeneous_condensate_is_stationary():
    model = gaussian_model()
    traj = evolve_hartree(condensate(model.modes), model, [0.0, 0.5, 1.0], dt=1e-2)
    assert traj.homogeneous
    assert np.allclose(traj.phi[:, 0], 1.0, atol=1e-13)
    assert np.allclose(traj.mu, model.potential((0,)))
    d = traj.drift()
    assert d["mass"] <= 1e-13 and d["energy"] <= 1e-12


def test_free_flow_phases():
    model = zero_potential_model(K=2)
    phi = np.array([0.0, 0.6, 0.0, 0.8j, 0.0])
    t = 0.37
    traj = evolve_hartree(phi, model, [t], dt=1e-3)
    n = traj.grid
    for amp, m in zip(phi, model.modes.momenta):
        got = traj.phi[-1][int(m[0]) % n]
        assert got == pytest.approx(amp * np.exp(-1j * 4 * np.pi**2 * m[0] ** 2 * t), abs=1e-12)


def test_split_step_second_order():
    model = gaussian_model()
    phi = np.zeros(5, complex)
    phi[2], phi[3] = np.sqrt(0.9), np.sqrt(0.1)
    assert hartree_convergence_order(phi, model, 0.2, 1e-3) >= 1.9
    with pytest.raises(StepSizeError):
        evolve_hartree(phi, model, [0.2], dt=0.05, tol=1e-9)


def test_mode_flow_without_quench_is_stationary():
    model = gaussian_model()
    bmap = bogoliubov_map(model)
    grid = np.linspace(0, 1, 101)
    prop = evolve_bogoliubov(bmap, None, model, grid, dt=1e-2)
    assert np.allclose(np.abs(prop.U), bmap.u, atol=1e-10)
    assert np.allclose(np.abs(prop.W), bmap.v, atol=1e-10)
    assert np.allclose(prop.U[-1], bmap.u * np.exp(-1j * bmap.eps), atol=1e-9)
    chi = chi0_state(bmap)
    later = chi0_at(bmap, prop, 100, chi.basis.cap)
    assert abs(np.vdot(chi.vector, later.vector)) == pytest.approx(1.0, abs=1e-8)


def test_quench_from_free_gas_matches_closed_form_and_dense():
    free = zero_potential_model()
    after = benchmark_model(10, value=5.0)
    bmap = bogoliubov_map(free)
    grid = np.linspace(0, 0.2, 41)
    prop = evolve_bogoliubov(bmap, None, after, grid, dt=5e-3)
    H0 = assemble_H0(after)
    A, B = H0.A[0], H0.B[0]
    eps = np.sqrt(A**2 - B**2)
    occ = np.abs(prop.W[:, 0]) ** 2
    assert np.allclose(occ, (B / eps * np.sin(eps * grid)) ** 2, atol=1e-10)
    basis = excitation_basis(after.modes, 30)
    H = word_operator(H0.as_operator(), basis).toarray()
    n_p = word_operator({(cre(0), ann(0)): 1.0}, basis).toarray()
    psi = sla.expm(-1j * grid[-1] * H) @ basis.vacuum()
    assert np.vdot(psi, n_p @ psi).real == pytest.approx(occ[-1], abs=1e-10)


def test_mode_flow_errors():
    model = benchmark_model(10)
    bmap = bogoliubov_map(model)
    with pytest.raises(StepSizeError):
        evolve_bogoliubov(bmap, None, model, [0.0, 0.015], dt=1e-2)
    with pytest.raises(IntegrationAccuracyError):
        evolve_bogoliubov(bmap, None, model, [0.0, 0.01], dt=1e-2, max_defect=-1.0)


def test_quench_pipeline_invariants():
    model = gaussian_model()
    after, bmap, traj, prop, dyn = quench_pipeline(model, QuenchSpec(scale=2.0), 0.2)
    assert prop.max_defect() <= 1e-10
    assert traj.homogeneous
    i = len(prop.times) - 1
    chi0 = chi0_at(bmap, prop, i, 16)
    c1, b1 = chi1_vector_at(dyn, bmap, i, chi0)
    assert abs(np.vdot(embed(chi0.vector, chi0.basis, b1), c1)) <= 1e-12
    assert np.linalg.norm(c1) == pytest.approx(dyn.norms()[i], rel=1e-5)


def test_chi1_vanishes_without_cubic_term():
    _, _, _, _, dyn = quench_pipeline(benchmark_model(10), QuenchSpec(vhat_after=2.0), 0.1)
    assert np.all(dyn.norms() == 0.0)


def test_chi1_norm_constant_without_quench():
    model = gaussian_model()
    _, bmap, _, _, dyn = quench_pipeline(model, QuenchSpec(), 0.2)
    static = compute_chi1(bmap, assemble_H1(model)).norm()
    assert np.allclose(dyn.norms(), static, rtol=1e-6)


def test_pattern_blocks_shapes():
    model = gaussian_model()
    _, bmap, _, prop, dyn = quench_pipeline(model, QuenchSpec(scale=1.5), 0.05)
    blocks = dyn.pattern_blocks(len(prop.times) - 1, model.modes.momenta)
    assert len(blocks) == 2 + 8
    assert blocks[(1,)].shape == (4,) and blocks[(1, -1, 1)].shape == (4, 4, 4)


def test_no_quench_reproduces_static_error():
    model = benchmark_model(10)
    errs = quench_errors_over_time(model, QuenchSpec(), 10, [0.0, 1e-3])
    assert errs[1] == pytest.approx(errs[0], rel=1e-3)


def test_norm_errors_short_time():
    model = benchmark_model(10)
    rep = norm_error_report(model, QuenchSpec(vhat_after=2.0), [6, 8, 10, 12], 0.1)
    assert max(rep.norm_drift) <= 1e-10
    assert rep.symplectic_defect <= 1e-8
    # K = 1 has no cubic term: orders 0 and 1 coincide
    assert rep.error0 == rep.error1
    e0, e1, _ = norm_errors(model, QuenchSpec(vhat_after=2.0), 14, 0.1)
    assert e0 < rep.error0[-1]


def test_envelope_fit():
    t = np.linspace(0, 2, 9)
    fit = envelope_fit(t, 1e-3 * np.exp(0.7 * t) * (1 + 0.1 * np.sin(5 * t)))
    assert fit["below"]
    assert 0.4 < fit["C"] < 1.5


def test_nonpositive_time_rejected():
    with pytest.raises(ValueError):
        quench_pipeline(benchmark_model(10), QuenchSpec(scale=2.0), 0.0)
    with pytest.raises(ValueError):
        quench_pipeline(benchmark_model(10), QuenchSpec(scale=2.0), -1.0)
