import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bose_expand.model import (CapacityError, ConfigError, EvennessError, PairPotential, PositivityError,
                               PotentialError, build_mode_set, build_trap_grid, load_config, parse_config,
                               validate_potential)

BASE = {"spec": 1, "dimension": 1, "cutoff": 1, "potential": {"kind": "constant", "value": 1.0}, "N": 10}


def test_mode_set_d1_k1():
    m = build_mode_set(1, 1)
    assert m.size == 3
    assert np.allclose(2 * np.pi * m.momenta[:, 0], [-2 * np.pi, 0, 2 * np.pi])
    assert m.zero_index == 1


def test_mode_counts():
    assert build_mode_set(1, 2).size == 5
    m = build_mode_set(2, 1)
    assert m.size == 9
    assert sorted(map(tuple, m.momenta)) == sorted(map(tuple, -m.momenta))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.integers(1, 2))
def test_negation_is_bijection(d, K):
    if (2 * K + 1) ** d > 125:
        return
    m = build_mode_set(d, K)
    neg = m.negation
    assert sorted(neg.tolist()) == list(range(m.size))
    assert np.array_equal(neg[neg], np.arange(m.size))
    assert np.array_equal(m.momenta[neg], -m.momenta)
    assert m.size == (2 * K + 1) ** d
    assert np.sum(~m.momenta.any(axis=1)) == 1
    assert len({tuple(p) for p in m.momenta}) == m.size


def test_mode_budget():
    with pytest.raises(CapacityError):
        build_mode_set(3, 3)
    with pytest.raises(ValueError):
        build_mode_set(4, 1)
    with pytest.raises(ValueError):
        build_mode_set(1, 0)


def test_constant_potential_accepted():
    m = build_mode_set(1, 1)
    v = PairPotential.constant(1.0, m)
    assert validate_potential(v, m) is v


def test_negative_coefficient_named():
    m = build_mode_set(1, 1)
    v = PairPotential.table([((0,), 1.0), ((1,), -0.1), ((-1,), -0.1)])
    with pytest.raises(PositivityError) as err:
        validate_potential(v, m)
    assert "-0.1" in str(err.value)
    assert err.value.k in ((1,), (-1,))


def test_asymmetric_coefficient():
    m = build_mode_set(1, 1)
    v = PairPotential.table([((0,), 1.0), ((1,), 1.0), ((-1,), 0.5)])
    with pytest.raises(EvennessError):
        validate_potential(v, m)


def test_config_deterministic(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps(BASE))
    a, b = load_config(p), load_config(p)
    assert np.array_equal(a.model.modes.momenta, b.model.modes.momenta)
    assert a.model.N == 10 and a.trap is None


@pytest.mark.parametrize("patch", [
    {"spec": 2}, {"extra": 1}, {"N": 1}, {"dimension": 4},
    {"potential": {"kind": "constant"}}, {"potential": {"kind": "cubic"}},
])
def test_config_rejects(patch):
    with pytest.raises(ConfigError):
        parse_config({**BASE, **patch})


def test_config_malformed_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"spec": 1,')
    with pytest.raises(ConfigError):
        load_config(p)


def test_config_table_and_trap():
    raw = {**BASE, "potential": {"kind": "table", "entries": [{"k": [0], "value": 2.0},
                                                              {"k": [1], "value": 0.5},
                                                              {"k": [-1], "value": 0.5}]},
           "trap": {"L": 6.0, "points": 101, "kind": "harmonic"}}
    cfg = parse_config(raw)
    assert cfg.model.potential((0,)) == 2.0
    assert cfg.model.potential((2,)) == 0.0
    assert cfg.trap.points == 101


def test_trap_grid_invariants():
    g = build_trap_grid(1, 6.0, 101)
    assert np.all(g.values >= 0)
    assert g.spacing == pytest.approx(0.12)
    with pytest.raises(PotentialError):
        build_trap_grid(1, 2.0, 101)  # boundary value 4 is below the threshold
