"""Occupation-number bases, second-quantized assembly and the excitation map."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from math import comb

import numpy as np
import scipy.sparse as sp

from .model import CapacityError, CutoffModel, ModeSet

DIMENSION_BUDGET = 500_000


class UnsupportedBasisError(ValueError):
    pass


class TruncationError(ValueError):
    pass


def _compositions(total: int, parts: int) -> np.ndarray:
    """All non-negative integer vectors of length ``parts`` summing to ``total``."""
    if parts == 1:
        return np.array([[total]], dtype=np.int64)
    rows = []
    for first in range(total, -1, -1):
        rest = _compositions(total - first, parts - 1)
        rows.append(np.column_stack([np.full(len(rest), first, dtype=np.int64), rest]))
    return np.vstack(rows)


class _Lookup:
    """Maps occupation vectors to row positions through an integer code."""

    def __init__(self, states: np.ndarray, base: int):
        self.base = base
        width = states.shape[1]
        if base ** width < 2**62:
            self.weights = base ** np.arange(width, dtype=np.int64)
            codes = states @ self.weights
            self.order = np.argsort(codes, kind="stable")
            self.sorted_codes = codes[self.order]
            self.table = None
        else:
            self.weights = None
            self.table = {tuple(s): i for i, s in enumerate(states.tolist())}

    def find(self, vectors: np.ndarray) -> np.ndarray:
        """Positions of ``vectors`` (rows); -1 where absent."""
        if self.table is not None:
            return np.array([self.table.get(tuple(v), -1) for v in vectors.tolist()], dtype=np.int64)
        valid = np.all((vectors >= 0) & (vectors < self.base), axis=1)
        codes = vectors @ self.weights
        pos = np.searchsorted(self.sorted_codes, codes)
        pos = np.minimum(pos, len(self.sorted_codes) - 1)
        hit = valid & (self.sorted_codes[pos] == codes)
        out = np.full(len(vectors), -1, dtype=np.int64)
        out[hit] = self.order[pos[hit]]
        return out


@dataclass(frozen=True)
class OccupationBasis:
    modes: ModeSet
    N: int
    states: np.ndarray = field(repr=False)
    lookup: _Lookup = field(repr=False, compare=False)

    @property
    def dim(self) -> int:
        return len(self.states)

    def index(self, occupation) -> int:
        return int(self.lookup.find(np.atleast_2d(np.asarray(occupation, dtype=np.int64)))[0])

    def total_momentum(self) -> np.ndarray:
        return self.states @ self.modes.momenta


def basis_dimension(M: int, N: int) -> int:
    return comb(N + M - 1, M - 1)


def enumerate_basis(modes: ModeSet, N: int, budget: int = DIMENSION_BUDGET) -> OccupationBasis:
    """All occupation vectors with N bosons in colexicographic order."""
    dim = basis_dimension(modes.size, N)
    if dim > budget:
        raise CapacityError(f"basis dimension C({N + modes.size - 1},{modes.size - 1}) = {dim} "
                            f"exceeds budget {budget}")
    states = _compositions(N, modes.size)
    states = states[np.lexsort(states.T)]
    states.setflags(write=False)
    return OccupationBasis(modes, N, states, _Lookup(states, N + 1))


@dataclass(frozen=True)
class ExcitationBasis:
    """Occupations of the nonzero modes with at most ``cap`` excitations, sector-ordered."""
    modes: ModeSet
    cap: int
    states: np.ndarray = field(repr=False)  # (D, M-1), columns follow modes.nonzero
    sectors: np.ndarray = field(repr=False)
    lookup: _Lookup = field(repr=False, compare=False)

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def mode_indices(self) -> np.ndarray:
        return self.modes.nonzero

    def sector_slice(self, k: int) -> slice:
        lo = int(np.searchsorted(self.sectors, k, side="left"))
        hi = int(np.searchsorted(self.sectors, k, side="right"))
        return slice(lo, hi)

    def index(self, occupation) -> int:
        return int(self.lookup.find(np.atleast_2d(np.asarray(occupation, dtype=np.int64)))[0])

    def column(self, mode: int) -> int:
        """Column of mode index ``mode`` (an index into the full ModeSet)."""
        cols = np.flatnonzero(self.mode_indices == mode)
        if len(cols) == 0:
            raise KeyError(f"mode {mode} is the condensate mode")
        return int(cols[0])

    def vacuum(self) -> np.ndarray:
        out = np.zeros(self.dim, dtype=complex)
        out[0] = 1.0
        return out


def excitation_basis(modes: ModeSet, cap: int, budget: int = DIMENSION_BUDGET) -> ExcitationBasis:
    # vectors with sum <= cap over M-1 modes  <->  cap bosons in M modes (slack column)
    M = modes.size
    dim = basis_dimension(M, cap)
    if dim > budget:
        raise CapacityError(f"excitation basis dimension {dim} exceeds budget {budget}")
    full = _compositions(cap, M)[:, 1:] if M > 1 else np.zeros((1, 0), dtype=np.int64)
    sectors = full.sum(axis=1)
    keys = [full[:, j] for j in range(full.shape[1])] + [sectors]
    order = np.lexsort(keys)
    states = full[order]
    sectors = sectors[order]
    states.setflags(write=False)
    sectors.setflags(write=False)
    return ExcitationBasis(modes, cap, states, sectors, _Lookup(states, cap + 1))


_EXC_CACHE: dict = {}


def cached_excitation_basis(modes: ModeSet, cap: int) -> ExcitationBasis:
    key = (modes.dimension, modes.cutoff, cap)
    if key not in _EXC_CACHE:
        _EXC_CACHE[key] = excitation_basis(modes, cap)
    return _EXC_CACHE[key]


# --- ladder action on bases ---------------------------------------------------

def apply_word(states: np.ndarray, word, cap: int | None = None):
    """Apply a product of ladder operators to every basis vector at once.

    ``word`` is a sequence of (column, is_creation) read left to right as an
    operator product, so the rightmost factor acts first. Returns the new
    occupation vectors and the bosonic amplitudes (0 where the action vanishes).
    """
    out = np.array(states, dtype=np.int64, copy=True)
    amp = np.ones(len(out))
    for col, create in reversed(word):
        if create:
            amp *= np.sqrt(np.maximum(out[:, col] + 1.0, 0.0))
            out[:, col] += 1
        else:
            amp *= np.sqrt(np.maximum(out[:, col], 0).astype(float))
            out[:, col] -= 1
    if cap is not None:
        amp[out.sum(axis=1) > cap] = 0.0
    amp[np.any(out < 0, axis=1)] = 0.0
    return out, amp


def _accumulate(rows, cols, vals, target, basis_lookup, amp, coeff, src):
    keep = amp != 0.0
    pos = basis_lookup.find(target[keep])
    ok = pos >= 0
    rows.append(pos[ok])
    cols.append(src[keep][ok])
    vals.append(coeff * amp[keep][ok])


def _finish(rows, cols, vals, dim) -> sp.csr_matrix:
    if rows:
        r, c, v = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    else:
        r = c = np.zeros(0, dtype=np.int64)
        v = np.zeros(0)
    return sp.coo_matrix((v, (r, c)), shape=(dim, dim)).tocsr()


def interaction_terms(modes: ModeSet, potential):
    """(p, q, k) index triples of v(k) a*_{p+k} a*_{q-k} a_q a_p inside the mode set.

    Returns tuples (p, q, p+k, q-k, v(k)) with all entries as mode indices.
    """
    terms = []
    mom = modes.momenta
    for p in range(modes.size):
        for q in range(modes.size):
            for k in modes.difference_vectors():
                vk = potential(k)
                if vk == 0.0:
                    continue
                pk = modes.index(mom[p] + np.array(k))
                qk = modes.index(mom[q] - np.array(k))
                if pk is None or qk is None:
                    continue
                terms.append((p, q, pk, qk, vk))
    return terms


def assemble_hamiltonian(model: CutoffModel, basis: OccupationBasis | None = None,
                         shift: float = 0.0) -> sp.csr_matrix:
    """Second-quantized H_N on the occupation basis, minus ``shift`` times identity."""
    if basis is None:
        basis = enumerate_basis(model.modes, model.N)
    states = basis.states
    src = np.arange(basis.dim)
    diag = states @ model.modes.kinetic() - shift
    rows, cols, vals = [src], [src], [diag.astype(float)]
    lam = 0.5 / (model.N - 1)
    for p, q, pk, qk, vk in interaction_terms(model.modes, model.potential):
        word = [(pk, True), (qk, True), (q, False), (p, False)]
        target, amp = apply_word(states, word)
        _accumulate(rows, cols, vals, target, basis.lookup, amp, lam * vk, src)
    return _finish(rows, cols, vals, basis.dim)


def one_body_operator(matrix: np.ndarray, basis: OccupationBasis) -> sp.csr_matrix:
    """Second quantization dGamma(B) = sum_{pq} B_pq a*_p a_q on the occupation basis."""
    states = basis.states
    src = np.arange(basis.dim)
    rows, cols, vals = [], [], []
    for p, q in zip(*np.nonzero(matrix)):
        target, amp = apply_word(states, [(int(p), True), (int(q), False)])
        _accumulate(rows, cols, vals, target, basis.lookup, amp, matrix[p, q], src)
    return _finish(rows, cols, vals, basis.dim)


def word_operator(op: dict, basis: ExcitationBasis) -> sp.csr_matrix:
    """Sparse matrix of a ladder polynomial on a truncated excitation basis.

    ``op`` maps words of (mode index, is_creation) to coefficients; mode
    indices refer to the full ModeSet and must be nonzero modes.
    Components pushed above ``basis.cap`` are dropped.
    """
    colmap = {int(m): j for j, m in enumerate(basis.mode_indices)}
    src = np.arange(basis.dim)
    rows, cols, vals = [], [], []
    for word, coeff in op.items():
        if coeff == 0:
            continue
        w = [(colmap[m], c) for m, c in word]
        target, amp = apply_word(basis.states, w, cap=basis.cap)
        _accumulate(rows, cols, vals, target, basis.lookup, amp, coeff, src)
    if rows and any(np.iscomplexobj(v) for v in vals):
        vals = [v.astype(complex) for v in vals]
    return _finish(rows, cols, vals, basis.dim)


def hermiticity_defect(H: sp.spmatrix) -> float:
    d = (H - H.conj().T)
    return float(abs(d).max()) if d.nnz else 0.0


def dump_operator_csv(H: sp.spmatrix, path) -> None:
    coo = H.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "re", "im"])
        for i in order:
            v = complex(coo.data[i])
            w.writerow([int(coo.row[i]), int(coo.col[i]), repr(v.real), repr(v.imag)])


# --- excitation map U_{N,phi} -------------------------------------------------

def _require_homogeneous(modes: ModeSet, phi) -> None:
    amps = np.asarray(getattr(phi, "amplitudes", phi), dtype=complex)
    target = np.zeros(modes.size)
    target[modes.zero_index] = 1.0
    if amps.shape != target.shape or not np.allclose(amps, target, atol=1e-12):
        raise UnsupportedBasisError(
            "excitation map is implemented for the homogeneous torus condensate only")


def excitation_decompose(psi: np.ndarray, basis: OccupationBasis, phi) -> tuple[np.ndarray, ExcitationBasis]:
    """U_{N,phi} Psi: coefficients over the excitation basis with cap N."""
    _require_homogeneous(basis.modes, phi)
    exc = excitation_basis(basis.modes, basis.N)
    pos = exc.lookup.find(np.delete(basis.states, basis.modes.zero_index, axis=1))
    out = np.zeros(exc.dim, dtype=complex)
    out[pos] = psi
    return out, exc


def restrict(chi: np.ndarray, basis: ExcitationBasis, cap: int) -> tuple[np.ndarray, ExcitationBasis]:
    """Orthogonal projection of chi onto the sectors <= cap (re-indexed)."""
    small = excitation_basis(basis.modes, cap)
    keep = basis.sectors <= cap
    pos = small.lookup.find(basis.states[keep])
    out = np.zeros(small.dim, dtype=complex)
    out[pos] = chi[keep]
    return out, small


def excitation_reconstruct(chi: np.ndarray, basis: ExcitationBasis, N: int,
                           occupation: OccupationBasis | None = None) -> np.ndarray:
    """U_{N,phi}^* chi for the homogeneous condensate; sectors above N are an error."""
    above = basis.sectors > N
    if np.any(np.abs(chi[above]) > 0):
        raise TruncationError(f"excitation vector has weight in sectors above N={N}")
    if occupation is None:
        occupation = enumerate_basis(basis.modes, N)
    keep = ~above
    exc_states = basis.states[keep]
    full = np.insert(exc_states, basis.modes.zero_index, N - exc_states.sum(axis=1), axis=1)
    pos = occupation.lookup.find(full)
    out = np.zeros(occupation.dim, dtype=complex)
    out[pos] = chi[keep]
    return out


def excitation_hamiltonian(model: CutoffModel, shift: float) -> tuple[sp.csr_matrix, ExcitationBasis]:
    """U (H_N - shift) U^* realized exactly on the excitation basis with cap N."""
    occ = enumerate_basis(model.modes, model.N)
    H = assemble_hamiltonian(model, occ, shift=shift)
    exc = excitation_basis(model.modes, model.N)
    pos = exc.lookup.find(np.delete(occ.states, model.modes.zero_index, axis=1))
    perm = sp.coo_matrix((np.ones(occ.dim), (pos, np.arange(occ.dim))), shape=(exc.dim, occ.dim)).tocsr()
    return (perm @ H @ perm.T).tocsr(), exc
