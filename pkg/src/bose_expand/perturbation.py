"""Cubic and quartic terms of the excitation Hamiltonian and the first-order corrections.

With the condensate in the zero mode, conjugating H_N - N e_H by the excitation
map replaces each a_0 by sqrt(N - n_exc). Expanding those square roots and
1/(N-1) in powers of N^{-1/2} gives

    H_exc = H0 + N^{-1/2} H1 + N^{-1} H2 + O(N^{-3/2})

with H1 cubic and H2 a mix of quadratic and quartic words (see ``assemble_Hj``).
All sums run over nonzero modes inside the cutoff.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np
import scipy.sparse as sp

from .bogoliubov import BogoliubovMap, QuasifreeState, assemble_H0, require_homogeneous
from .fock import (ExcitationBasis, cached_excitation_basis, excitation_hamiltonian, excitation_reconstruct,
                   restrict, word_operator)
from .hartree import HartreeState
from .ladder import (add, ann, creation_part, cre, degree_counts, is_momentum_conserving,
                     normal_order, substitute, vacuum_expectation)
from .model import CutoffModel


class SingularResolventError(ZeroDivisionError):
    pass


def _nonzero_index_maps(model: CutoffModel):
    modes = model.modes
    nz = [int(i) for i in modes.nonzero]
    zero = np.zeros(modes.dimension, dtype=np.int64)
    v0 = model.potential(zero)
    vp = {i: model.potential(modes.momenta[i]) for i in nz}
    return modes, nz, v0, vp


def assemble_H1(model: CutoffModel, hartree: HartreeState | None = None) -> dict:
    """sum v(k) (a*_k a*_{q-k} a_q + h.c.) over nonzero k, q, q-k."""
    require_homogeneous(model, hartree)
    modes, nz, _, vp = _nonzero_index_maps(model)
    op = defaultdict(float)
    for q in nz:
        for k in nz:
            r = modes.index(modes.momenta[q] - modes.momenta[k])
            if r is None or r == modes.zero_index or vp[k] == 0.0:
                continue
            op[(cre(k), cre(r), ann(q))] += vp[k]
            op[(cre(q), ann(r), ann(k))] += vp[k]
    return normal_order(op)


def assemble_H2(model: CutoffModel, hartree: HartreeState | None = None) -> dict:
    require_homogeneous(model, hartree)
    modes, nz, v0, vp = _nonzero_index_maps(model)
    neg = modes.negation
    op = defaultdict(float)
    for p in nz:
        for q in nz:
            # (v0/2)(N^2 - N) - sum_p (v0 + v(p)) n_p (N - 1), both written as :n_p n_q:
            op[(cre(p), cre(q), ann(q), ann(p))] += 0.5 * v0 - (v0 + vp[p])
    for k in nz:
        mk = int(neg[k])
        if vp[k] == 0.0:
            continue
        # pair terms a*a*(1/2 - N) + (1/2 - N) a a, times v(k)/2
        op[(cre(k), cre(mk))] += 0.25 * vp[k]
        op[(ann(k), ann(mk))] += 0.25 * vp[k]
        for q in nz:
            op[(cre(k), cre(mk), cre(q), ann(q))] -= 0.5 * vp[k]
            op[(cre(q), ann(q), ann(k), ann(mk))] -= 0.5 * vp[k]
    mom = modes.momenta
    for p in nz:
        for q in nz:
            for k in modes.difference_vectors():
                vk = model.potential(k)
                if vk == 0.0:
                    continue
                a = modes.index(mom[p] + np.array(k))
                b = modes.index(mom[q] - np.array(k))
                if a is None or b is None or a == modes.zero_index or b == modes.zero_index:
                    continue
                op[(cre(a), cre(b), ann(q), ann(p))] += 0.5 * vk
    return normal_order(op)


def assemble_Hj(model: CutoffModel, hartree: HartreeState | None, j: int) -> dict:
    if j == 0:
        return normal_order(assemble_H0(model, hartree).as_operator())
    if j == 1:
        return assemble_H1(model, hartree)
    if j == 2:
        return assemble_H2(model, hartree)
    raise ValueError("only j in {0, 1, 2} is assembled")


def monomial_report(op: dict, momenta: np.ndarray) -> dict:
    """Counts and structural flags used by the parity and momentum checks."""
    degrees = sorted({len(w) for w in op})
    return {
        "count": len(op),
        "degrees": degrees,
        "momentum_conserving": all(is_momentum_conserving(w, momenta) for w in op),
        "parity": sorted({len(w) % 2 for w in op}),
    }


def expansion_residual(model: CutoffModel, max_sector: int = 1) -> float:
    """max over the unit vectors xi of sectors <= max_sector of ||(H_exc - H0 - N^{-1/2} H1 - N^{-1} H2) xi||."""
    N = model.N
    v0 = model.potential(np.zeros(model.modes.dimension, dtype=int))
    H, exc = excitation_hamiltonian(model, N * v0 / 2)
    approx = add(assemble_Hj(model, None, 0), assemble_H1(model), assemble_H2(model),
                 weights=[1.0, N**-0.5, 1.0 / N])
    D = (H - word_operator(approx, exc))[:, np.flatnonzero(exc.sectors <= max_sector)]
    return float(np.sqrt(np.asarray(abs(D.multiply(D.conj())).sum(axis=0))).max())


def verify_half_order(bmap: BogoliubovMap, H1: dict) -> float:
    """<chi0, H1 chi0> = <Omega, U0 H1 U0^* Omega>, by symbolic normal ordering."""
    U, V = bmap.rotation()
    rotated = substitute(H1, U, V, bmap.partner)
    return float(abs(vacuum_expectation(rotated)))


@dataclass(frozen=True)
class ChiOne:
    modes: np.ndarray
    theta1: np.ndarray = field(repr=False)  # over bmap.modes
    theta3: np.ndarray = field(repr=False)  # symmetric, over bmap.modes^3
    pre1: np.ndarray = field(repr=False)  # rotated H1|Omega>, one-particle part
    pre3: np.ndarray = field(repr=False)  # rotated H1|Omega>, symmetric three-particle part

    def creation_polynomial(self) -> dict:
        """Theta1 a* + Theta3 a*a*a* as a ladder polynomial (acts on the vacuum)."""
        op = defaultdict(complex)
        for i, p in enumerate(self.modes):
            if self.theta1[i] != 0:
                op[(cre(p),)] += self.theta1[i]
        n = len(self.modes)
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    t = self.theta3[i, j, k]
                    if t != 0:
                        op[(cre(self.modes[i]), cre(self.modes[j]), cre(self.modes[k]))] += t
        return normal_order(op)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.theta1) ** 2) + 6 * np.sum(np.abs(self.theta3) ** 2)))


def rotated_vacuum_components(op: dict, U: dict, V: dict, partner: dict, modes: np.ndarray):
    """One- and three-particle components of (frame-rotated op)|Omega> as (vector, symmetric tensor)."""
    rotated = substitute(op, U, V, partner)
    parts = creation_part(rotated)
    pos = {int(p): i for i, p in enumerate(modes)}
    n = len(modes)
    w1 = np.zeros(n, dtype=complex)
    w3 = np.zeros((n, n, n), dtype=complex)
    for (f,), c in parts.get(1, {}).items():
        w1[pos[f[0]]] += c
    for word, c in parts.get(3, {}).items():
        idx = tuple(pos[m] for m, _ in word)
        perms = set(permutations(idx))
        for perm in perms:
            w3[perm] += c / len(perms)
    other = [k for k in parts if k not in (1, 3)]
    if other:
        raise ValueError(f"unexpected {other}-particle components in a cubic term")
    return w1, w3


def compute_chi1(bmap: BogoliubovMap, H1: dict) -> ChiOne:
    if np.any(bmap.eps <= 0):
        raise SingularResolventError("vanishing Bogoliubov mode energy")
    U, V = bmap.rotation()
    w1, w3 = rotated_vacuum_components(H1, U, V, bmap.partner, bmap.modes)
    eps = bmap.eps
    denom3 = eps[:, None, None] + eps[None, :, None] + eps[None, None, :]
    return ChiOne(np.asarray(bmap.modes), -w1 / eps, -w3 / denom3, w1, w3)


def compute_E1(bmap: BogoliubovMap, H1: dict, H2: dict) -> float:
    """<chi0, H2 chi0> + <chi0, H1 Q0 (E0 - H0)^{-1} H1 chi0>, both in the rotated frame."""
    U, V = bmap.rotation()
    first = vacuum_expectation(substitute(H2, U, V, bmap.partner))
    chi = compute_chi1(bmap, H1)
    eps = bmap.eps
    denom3 = eps[:, None, None] + eps[None, :, None] + eps[None, None, :]
    second = -np.sum(np.abs(chi.pre1) ** 2 / eps) - 6.0 * np.sum(np.abs(chi.pre3) ** 2 / denom3)
    return float(np.real(first) + second)


def energy_coefficients(model: CutoffModel) -> dict:
    """e_H, E0, E1 for the homogeneous torus model."""
    from .bogoliubov import diagonalize
    bmap = diagonalize(assemble_H0(model))
    H1, H2 = assemble_H1(model), assemble_H2(model)
    v0 = model.potential(np.zeros(model.modes.dimension, dtype=int))
    return {"e_H": 0.5 * v0, "E0": bmap.E0, "E1": compute_E1(bmap, H1, H2)}


# --- realizing excitation vectors -----------------------------------------------

def apply_polynomial(op: dict, vector: np.ndarray, basis: ExcitationBasis, cap: int) -> tuple[np.ndarray, ExcitationBasis]:
    """op @ vector, computed on a basis enlarged to sectors <= cap."""
    big = cached_excitation_basis(basis.modes, cap)
    x = embed(vector, basis, big)
    return word_operator(op, big) @ x, big


def embed(vector: np.ndarray, small: ExcitationBasis, big: ExcitationBasis) -> np.ndarray:
    out = np.zeros(big.dim, dtype=complex)
    out[big.lookup.find(small.states)] = vector
    return out


def chi1_vector(chi: ChiOne, bmap: BogoliubovMap, chi0: QuasifreeState,
                U: dict | None = None, V: dict | None = None) -> tuple[np.ndarray, ExcitationBasis]:
    """chi1 = U0^*(Theta1 a* + Theta3 a*a*a*)Omega realized next to chi0.

    ``U, V`` give the inverse frame map a_p -> U a_p + V a*_{-p}; the default is
    the static one (u_p, +v_p).
    """
    if U is None:
        U, V = bmap.coefficient("u"), bmap.coefficient("v")
    op = substitute(chi.creation_polynomial(), U, V, bmap.partner)
    return apply_polynomial(op, chi0.vector, chi0.basis, chi0.basis.cap + 3)


def operator_matrix(op: dict, basis: ExcitationBasis) -> sp.csr_matrix:
    return word_operator(op, basis)


def assemble_psi_N_ell(chi: np.ndarray, basis: ExcitationBasis, N: int, occupation=None) -> np.ndarray:
    """U^*(chi restricted to sectors <= N): the N-body coefficient of that order."""
    if basis.cap > N:
        chi, basis = restrict(chi, basis, N)
    return excitation_reconstruct(chi, basis, N, occupation)


def parity_structure(op: dict) -> set:
    return {degree_counts(w)[0] - degree_counts(w)[1] for w in op}

