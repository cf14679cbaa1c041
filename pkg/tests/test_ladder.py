import numpy as np
from hypothesis import given, strategies as st

from bose_expand.ladder import (add, adjoint, ann, clean, cre, creation_part, degree_counts,
                                is_momentum_conserving, normal_order, substitute, vacuum_expectation)


def commutator(x, y):
    xy = normal_order({a + b: ca * cb for a, ca in x.items() for b, cb in y.items()})
    yx = normal_order({b + a: ca * cb for a, ca in x.items() for b, cb in y.items()})
    return add(xy, yx, weights=[1, -1])


@given(st.integers(0, 4), st.integers(0, 4))
def test_canonical_commutators(p, q):
    a = {(ann(p),): 1.0}
    ad = {(cre(q),): 1.0}
    assert commutator(a, ad) == ({(): 1.0} if p == q else {})
    assert commutator(a, {(ann(q),): 1.0}) == {}


def test_normal_order_examples():
    assert normal_order({(ann(0), cre(0)): 1.0}) == {(): 1.0, (cre(0), ann(0)): 1.0}
    # a a a* a* = a*a* a a + 4 a*a + 2
    op = normal_order({(ann(0), ann(0), cre(0), cre(0)): 1.0})
    assert op == {(): 2.0, (cre(0), ann(0)): 4.0, (cre(0), cre(0), ann(0), ann(0)): 1.0}
    assert vacuum_expectation(op) == 2.0


def test_clean_and_add():
    assert clean({(cre(1),): 1e-20, (ann(1),): 2.0}) == {(ann(1),): 2.0}
    x = {(cre(1),): 1.0}
    assert add(x, x, weights=[1, -1]) == {}


def test_adjoint_involution():
    op = {(cre(1), cre(2), ann(0)): 1 + 2j, (ann(3),): 0.5}
    assert adjoint(adjoint(op)) == normal_order(op)
    assert adjoint(op)[(cre(0), ann(1), ann(2))] == 1 - 2j


def test_degree_and_creation_part():
    w = (cre(1), cre(2), ann(0))
    assert degree_counts(w) == (2, 1)
    cp = creation_part({w: 1.0, (cre(1), cre(2)): 3.0, (): 1.0})
    assert cp == {2: {(cre(1), cre(2)): 3.0}}


def test_momentum_conservation():
    mom = np.array([[-1], [0], [1]])
    assert is_momentum_conserving((cre(0), cre(2)), np.array([[0], [0], [0]]))
    assert is_momentum_conserving((cre(0), cre(2), ann(1), ann(1)), mom)
    assert not is_momentum_conserving((cre(2), ann(1)), mom)


@given(st.floats(-2.0, 2.0))
def test_substitute_preserves_commutator(theta):
    # a_0 -> cosh a_0 + sinh a*_1 and its partner is canonical
    u, v = np.cosh(theta), np.sinh(theta)
    U, V, partner = {0: u, 1: u}, {0: v, 1: v}, {0: 1, 1: 0}
    b0 = substitute({(ann(0),): 1.0}, U, V, partner)
    b0d = substitute({(cre(0),): 1.0}, U, V, partner)
    b1 = substitute({(ann(1),): 1.0}, U, V, partner)
    c = commutator(b0, b0d)
    assert set(c) == {()} and abs(c[()] - 1) < 1e-12
    assert all(abs(x) < 1e-12 for x in commutator(b0, b1).values())
