"""Quadratic (Bogoliubov) Hamiltonian of the homogeneous condensate and its diagonalization.

Sign conventions: the map that diagonalizes the quadratic Hamiltonian acts as
``a_p -> u_p a_p - v_p a*_{-p}`` with ``u_p = cosh(theta_p)``,
``v_p = sinh(theta_p)``, ``tanh(2 theta_p) = B(p)/A(p)``, so ``v_p B(p) >= 0``.
The quasi-free ground state is annihilated by ``u_p a_p + v_p a*_{-p}``;
its pair amplitude is ``c_p = -v_p/u_p``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fock import ExcitationBasis, cached_excitation_basis
from .hartree import HartreeState
from .ladder import ann, cre
from .model import CutoffModel, ModeSet


class UnsupportedModelError(ValueError):
    pass


class InstabilityError(ValueError):
    def __init__(self, mode, A, B):
        super().__init__(f"unstable mode {mode}: A = {A!r} <= |B| = {abs(B)!r}")
        self.mode = mode


class CutoffTooSmallError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadraticHamiltonian:
    """A(p) n_p + B(p)/2 (a*_p a*_{-p} + h.c.) summed over the nonzero modes."""
    model: CutoffModel = field(repr=False)
    modes: np.ndarray  # indices into the ModeSet
    A: np.ndarray
    B: np.ndarray

    @property
    def partner(self) -> dict:
        neg = self.model.modes.negation
        return {int(p): int(neg[p]) for p in self.modes}

    def as_operator(self) -> dict:
        op = {}
        for p, a, b in zip(self.modes, self.A, self.B):
            p = int(p)
            q = self.partner[p]
            op[(cre(p), ann(p))] = op.get((cre(p), ann(p)), 0.0) + a
            if b != 0.0:
                w = tuple(sorted([cre(p), cre(q)]))
                op[w] = op.get(w, 0.0) + 0.5 * b
                w = tuple(sorted([ann(p), ann(q)]))
                op[w] = op.get(w, 0.0) + 0.5 * b
        return op


@dataclass(frozen=True)
class BogoliubovMap:
    mode_set: ModeSet = field(repr=False)
    modes: np.ndarray
    partner: dict
    u: np.ndarray
    v: np.ndarray
    eps: np.ndarray
    A: np.ndarray
    B: np.ndarray

    @property
    def c(self) -> np.ndarray:
        return -self.v / self.u

    @property
    def E0(self) -> float:
        return 0.5 * float(np.sum(self.eps - self.A))

    def coefficient(self, name: str) -> dict:
        return {int(p): float(x) for p, x in zip(self.modes, getattr(self, name))}

    def rotation(self) -> tuple[dict, dict]:
        """(U, V) of the frame change a_p -> U_p a_p + V_p a*_{-p}."""
        return self.coefficient("u"), {int(p): -float(x) for p, x in zip(self.modes, self.v)}

    def pairs(self) -> list[tuple[int, int]]:
        seen, out = set(), []
        for p in self.modes:
            p = int(p)
            if p in seen:
                continue
            q = self.partner[p]
            seen.update((p, q))
            out.append((p, q))
        return out


def require_homogeneous(model, hartree: HartreeState | None):
    if not isinstance(model, CutoffModel):
        raise UnsupportedModelError("the quadratic Hamiltonian is implemented on the torus only")
    if hartree is not None and not hartree.is_homogeneous:
        raise UnsupportedModelError("homogeneous torus condensate required")


def assemble_H0(model: CutoffModel, hartree: HartreeState | None = None) -> QuadraticHamiltonian:
    require_homogeneous(model, hartree)
    idx = model.modes.nonzero
    vhat = model.potential.at_modes(model.modes)[idx]
    A = model.modes.kinetic()[idx] + vhat
    B = vhat.astype(float)
    return QuadraticHamiltonian(model, idx, A, B)


def diagonalize(H0: QuadraticHamiltonian) -> BogoliubovMap:
    A, B = np.asarray(H0.A, float), np.asarray(H0.B, float)
    for p, a, b in zip(H0.modes, A, B):
        if not a > abs(b):
            raise InstabilityError(tuple(H0.model.modes.momenta[p]), a, b)
    eps = np.sqrt(A**2 - B**2)
    theta = 0.5 * np.arctanh(B / A)
    u, v = np.cosh(theta), np.sinh(theta)
    return BogoliubovMap(H0.model.modes, np.asarray(H0.modes), H0.partner, u, v, eps, A, B)


def bogoliubov_map(model: CutoffModel) -> BogoliubovMap:
    return diagonalize(assemble_H0(model))


@dataclass(frozen=True)
class QuasifreeState:
    basis: ExcitationBasis = field(repr=False)
    vector: np.ndarray = field(repr=False)
    defect: float

    def sector_weights(self) -> np.ndarray:
        return np.bincount(self.basis.sectors, weights=np.abs(self.vector) ** 2,
                           minlength=self.basis.cap + 1)


def pair_amplitudes(bmap: BogoliubovMap, basis: ExcitationBasis, c=None, prefactor=None) -> np.ndarray:
    """Unnormalized prod_pairs g_p c_p^{m_p} on paired configurations (n_p = n_{-p}).

    ``c`` and ``prefactor`` default to the static pair amplitudes and 1; the
    dynamics passes time-dependent complex values keyed by the pair's first mode.
    """
    pairs = bmap.pairs()
    if c is None:
        c = {p: bmap.coefficient("c")[p] for p, _ in pairs}
    amp = np.ones(basis.dim, dtype=complex)
    paired = np.ones(basis.dim, dtype=bool)
    for p, q in pairs:
        cp, cq = basis.column(p), basis.column(q)
        m = basis.states[:, cp]
        paired &= m == basis.states[:, cq]
        amp *= np.asarray(c[p], dtype=complex) ** m
        if prefactor is not None:
            amp *= prefactor[p]
    amp[~paired] = 0.0
    return amp


def chi0_state(bmap: BogoliubovMap, k_max: int = 12, threshold: float = 1e-8,
               adaptive: bool = True, k_limit: int = 96) -> QuasifreeState:
    """Squeezed pair state on the excitation basis with sectors <= k_max."""
    c = bmap.c
    if np.any(np.abs(c) >= 1):
        raise InstabilityError(None, 0, 1)
    total = float(np.prod([1.0 / (1.0 - bmap.coefficient("c")[p] ** 2) for p, _ in bmap.pairs()]))
    while True:
        basis = cached_excitation_basis(bmap.mode_set, k_max)
        amp = pair_amplitudes(bmap, basis)
        kept = float(np.sum(np.abs(amp) ** 2))
        defect = max(0.0, 1.0 - kept / total)
        if defect < threshold:
            return QuasifreeState(basis, amp / np.sqrt(kept), defect)
        if not adaptive or 2 * k_max > k_limit:
            raise CutoffTooSmallError(f"sector cutoff {k_max} leaves defect {defect:.3e}")
        k_max *= 2


def number_moments(state: QuasifreeState, order: int) -> float:
    """<chi, N_exc^k chi> on the kept sectors."""
    if order not in (1, 2, 3, 4):
        raise ValueError("order must be 1..4")
    w = np.abs(state.vector) ** 2
    return float(np.sum(w * state.basis.sectors.astype(float) ** order) / np.sum(w))
