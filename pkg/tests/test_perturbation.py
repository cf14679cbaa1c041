import numpy as np
import pytest

from bose_expand.bogoliubov import bogoliubov_map, chi0_state
from bose_expand.ladder import ann, cre
from bose_expand.model import CutoffModel, PairPotential, benchmark_model, build_mode_set
from bose_expand.oracle import fit_power_law, richardson, solve_ground_state
from bose_expand.perturbation import (assemble_H1, assemble_H2, chi1_vector, compute_chi1,
                                      embed, energy_coefficients, expansion_residual,
                                      monomial_report, parity_structure, verify_half_order)

from conftest import zero_potential_model

E1_K1 = -0.012493731654268859


def gaussian_model(N, K=2):
    modes = build_mode_set(1, K)
    return CutoffModel(modes, PairPotential.gaussian(2.0, 0.15, modes), N)


def test_zero_potential_has_no_corrections():
    m = zero_potential_model(K=2)
    assert assemble_H1(m) == {}
    assert assemble_H2(m) == {}
    assert energy_coefficients(m) == {"e_H": 0.0, "E0": 0.0, "E1": 0.0}


def test_cubic_term_vanishes_at_smallest_cutoff():
    # no two nonzero modes of the K = 1 set add up to a third
    assert assemble_H1(benchmark_model(10)) == {}


@pytest.mark.parametrize("model", [benchmark_model(10, K=2), gaussian_model(10), gaussian_model(10, K=3)])
def test_structure(model):
    mom = model.modes.momenta
    H1, H2 = assemble_H1(model), assemble_H2(model)
    r1, r2 = monomial_report(H1, mom), monomial_report(H2, mom)
    assert r1["momentum_conserving"] and r2["momentum_conserving"]
    assert r1["degrees"] == [3] and r1["parity"] == [1]
    assert r2["parity"] == [0] and set(r2["degrees"]) <= {2, 4}
    assert parity_structure(H1) <= {-1, 1}
    assert parity_structure(H2) <= {-2, 0, 2}
    assert verify_half_order(bogoliubov_map(model), H1) <= 1e-10


def test_half_order_negative_control():
    model = benchmark_model(10, K=2)
    bmap = bogoliubov_map(model)
    bad = dict(assemble_H1(model))
    bad[(cre(0), ann(0))] = 1.0
    assert verify_half_order(bmap, bad) == pytest.approx(bmap.v[0] ** 2, rel=1e-12)


def test_E1_frozen_value():
    assert energy_coefficients(benchmark_model(10))["E1"] == pytest.approx(E1_K1, rel=1e-12)


@pytest.mark.parametrize("model,Ns", [(benchmark_model(10), range(8, 26, 2)),
                                      (benchmark_model(10, K=2), range(6, 17, 2)),
                                      (gaussian_model(10), range(6, 17, 2))])
def test_E1_matches_exact_diagonalization(model, Ns):
    c = energy_coefficients(model)
    y = [N * (solve_ground_state(model.with_N(N)).energy - N * c["e_H"] - c["E0"]) for N in Ns]
    fit, _ = richardson(list(Ns), y)
    assert fit == pytest.approx(c["E1"], rel=0.02)


def test_chi1_orthogonal_and_norm_consistent():
    model = gaussian_model(10)
    bmap = bogoliubov_map(model)
    chi = compute_chi1(bmap, assemble_H1(model))
    assert chi.norm() > 0
    chi0 = chi0_state(bmap, threshold=1e-14)
    vec, big = chi1_vector(chi, bmap, chi0)
    assert abs(np.vdot(embed(chi0.vector, chi0.basis, big), vec)) <= 1e-12
    assert np.linalg.norm(vec) == pytest.approx(chi.norm(), rel=1e-6)
    # sector cutoff of chi0 does not move the realized norm
    coarse = chi0_state(bmap, threshold=1e-8)
    vc, _ = chi1_vector(chi, bmap, coarse)
    assert np.linalg.norm(vc) == pytest.approx(np.linalg.norm(vec), rel=1e-4)


def test_theta3_symmetric():
    model = gaussian_model(10)
    t = compute_chi1(bogoliubov_map(model), assemble_H1(model)).theta3
    for perm in [(1, 0, 2), (0, 2, 1), (2, 1, 0)]:
        assert np.allclose(t, t.transpose(perm))


def test_E1_mirror_invariant():
    # v(k) -> v(-k) relabels p -> -p; the coefficient is unchanged
    modes = build_mode_set(1, 2)
    pot = PairPotential.gaussian(2.0, 0.15, modes)
    mirrored = PairPotential({tuple(-x for x in k): v for k, v in pot.coefficients.items()})
    a = energy_coefficients(CutoffModel(modes, pot, 10))["E1"]
    b = energy_coefficients(CutoffModel(modes, mirrored, 10))["E1"]
    assert a == pytest.approx(b, rel=1e-12)


def test_expansion_residual_scaling():
    Ns = [6, 8, 10, 12, 14]
    pts = [(N, expansion_residual(benchmark_model(N, K=2))) for N in Ns]
    rep = fit_power_law(pts, expected_slope=-1.5, band=0.25)
    assert rep.passed, rep.as_dict()
