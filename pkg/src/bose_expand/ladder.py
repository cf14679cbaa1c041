"""Polynomials in bosonic ladder operators with symbolic normal ordering.

An operator is a dict mapping a *word* to a coefficient. A word is a tuple of
``(mode, is_creation)`` factors in product order. Canonical words are normal
ordered: creators first, then annihilators, each group sorted by mode.
"""

from __future__ import annotations

from collections import defaultdict
from functools import lru_cache
from itertools import product

import numpy as np

TOL = 1e-15


def cre(p):
    return (int(p), True)


def ann(p):
    return (int(p), False)


@lru_cache(maxsize=None)
def normal_order_word(word: tuple) -> tuple:
    """Normal-ordered expansion of a word: tuple of (canonical word, integer weight)."""
    for i in range(len(word) - 1):
        (m1, c1), (m2, c2) = word[i], word[i + 1]
        if not c1 and c2:
            swapped = word[:i] + (word[i + 1], word[i]) + word[i + 2:]
            out = defaultdict(int)
            for w, c in normal_order_word(swapped):
                out[w] += c
            if m1 == m2:
                for w, c in normal_order_word(word[:i] + word[i + 2:]):
                    out[w] += c
            return tuple((w, c) for w, c in out.items() if c)
    creators = sorted(f for f in word if f[1])
    annihilators = sorted(f for f in word if not f[1])
    return ((tuple(creators) + tuple(annihilators), 1),)


def normal_order(op: dict) -> dict:
    out = defaultdict(complex)
    for word, coeff in op.items():
        for w, c in normal_order_word(tuple(word)):
            out[w] += coeff * c
    return clean(out)


def clean(op: dict, tol: float = TOL) -> dict:
    res = {}
    for w in sorted(op):
        c = op[w]
        if abs(c) > tol:
            c = complex(c)
            res[w] = c.real if c.imag == 0 else c
    return res


def add(*ops, weights=None) -> dict:
    out = defaultdict(complex)
    weights = weights or [1.0] * len(ops)
    for op, s in zip(ops, weights):
        for w, c in op.items():
            out[w] += s * c
    return clean(out)


def adjoint(op: dict) -> dict:
    out = defaultdict(complex)
    for word, c in op.items():
        out[tuple((m, not cr) for m, cr in reversed(word))] += np.conj(c)
    return normal_order(out)


def degree_counts(word) -> tuple[int, int]:
    n_cre = sum(1 for _, c in word if c)
    return n_cre, len(word) - n_cre


def substitute(op: dict, U: dict, V: dict, partner: dict) -> dict:
    """Apply a Bogoliubov map and normal order.

    ``a_p -> U[p] a_p + V[p] a*_{partner[p]}`` and, by adjoint,
    ``a*_p -> conj(U[p]) a*_p + conj(V[p]) a_{partner[p]}``.
    """
    out = defaultdict(complex)
    for word, coeff in op.items():
        options = []
        for m, c in word:
            if c:
                options.append(((((m, True),), np.conj(U[m])), (((partner[m], False),), np.conj(V[m]))))
            else:
                options.append(((((m, False),), U[m]), (((partner[m], True),), V[m])))
        for choice in product(*options):
            amp = coeff
            w = ()
            for piece, a in choice:
                amp = amp * a
                w = w + piece
            if abs(amp) <= TOL:
                continue
            for nw, k in normal_order_word(w):
                out[nw] += amp * k
    return clean(out)


def vacuum_expectation(op: dict) -> complex:
    """<Omega, op Omega> for a normal-ordered operator."""
    return op.get((), 0.0)


def creation_part(op: dict) -> dict:
    """Words built only from creators; for a normal-ordered op this is op|Omega>."""
    by_len = defaultdict(dict)
    for w, c in op.items():
        if w and all(cr for _, cr in w):
            by_len[len(w)][w] = c
    return dict(by_len)


def is_momentum_conserving(word, momenta: np.ndarray) -> bool:
    tot = np.zeros(momenta.shape[1], dtype=np.int64)
    for m, c in word:
        tot += momenta[m] if c else -momenta[m]
    return not tot.any()
