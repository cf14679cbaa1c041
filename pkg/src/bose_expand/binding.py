"""Binding energy Delta E(N) = E(N; v/(N-1)) - E(N-1; v/(N-1)) and its 1/N expansion.

The (N-1)-particle system at coupling 1/(N-1) is the standard (N-1)-particle
system with potential lambda' v, lambda' = (N-2)/(N-1). Writing x = 1/N,
lambda' = 1 - x/(1-x), and Taylor expanding the coupling-dependent coefficients
e_H, E0, E1 in lambda around 1 gives Delta E = sum_l E^b_l x^l.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import sympy

from .bogoliubov import require_homogeneous
from .hartree import minimize_hartree, torus_interaction_energy
from .model import CutoffModel
from .oracle import bounded_map, fit_power_law, solve_ground_state
from .perturbation import energy_coefficients


class DerivativeError(RuntimeError):
    def __init__(self, message, stencil=None):
        super().__init__(message)
        self.stencil = stencil


_NAMES = ("eH", "E0", "E1")


@lru_cache(maxsize=None)
def reexpansion(order: int = 2):
    """Symbolic coefficients of x^0 .. x^order of Delta E.

    Returns (coefficients, symbols) where symbols[(name, k)] is the k-th
    lambda-derivative of coefficient ``name`` at lambda = 1.
    """
    x = sympy.Symbol("x", positive=True)
    syms = {(n, k): sympy.Symbol(f"{n}_{k}") for n in _NAMES for k in range(order + 2)}

    def taylor(name, delta):
        # f(1 - delta) to the needed order in delta
        return sum(syms[(name, k)] * (-delta) ** k / sympy.factorial(k) for k in range(order + 2))

    delta = x / (1 - x)
    # E(N) with its own coupling: N eH + E0 + E1/N, every coefficient at lambda = 1
    full = syms[("eH", 0)] / x + syms[("E0", 0)] + syms[("E1", 0)] * x
    # (N-1) particles at potential lambda' v: 1/(N-1) = delta
    reduced = taylor("eH", delta) / delta + taylor("E0", delta) + taylor("E1", delta) * delta
    series = sympy.series(full - reduced, x, 0, order + 1).removeO()
    coeffs = [sympy.simplify(series.coeff(x, l)) for l in range(order + 1)]
    return coeffs, syms


def richardson_derivative(f, x0: float = 1.0, h: float = 0.05, levels: int = 4,
                          tol: float = 1e-8) -> tuple[float, list]:
    """Central differences at h, h/2, ... combined in a Richardson table (error O(h^2) steps)."""
    table = []
    for i in range(levels):
        hi = h / 2**i
        row = [(f(x0 + hi) - f(x0 - hi)) / (2 * hi)]
        for j in range(1, i + 1):
            row.append(row[j - 1] + (row[j - 1] - table[i - 1][j - 1]) / (4**j - 1))
        table.append(row)
    est, prev = table[-1][-1], table[-2][-2]
    if abs(est - prev) > tol * max(1.0, abs(est)):
        raise DerivativeError(f"Richardson table not converged: {est!r} vs {prev!r}", stencil=table)
    return float(est), table


def e0_derivatives(model: CutoffModel) -> tuple[float, float, float]:
    """E0(lambda v) and its first two lambda-derivatives at lambda = 1, in closed form."""
    modes = model.modes
    idx = modes.nonzero
    p2 = modes.kinetic()[idx]
    v = model.potential.at_modes(modes)[idx]
    eps = np.sqrt(p2**2 + 2 * p2 * v)
    E0 = 0.5 * np.sum(eps - p2 - v)
    d1 = 0.5 * np.sum(p2 * v / eps - v)
    d2 = -0.5 * np.sum(p2**2 * v**2 / eps**3)
    return float(E0), float(d1), float(d2)


def _coefficient_at(model: CutoffModel, name: str, lam: float) -> float:
    return energy_coefficients(model.with_potential(model.potential.scaled(lam)))[name]


@dataclass(frozen=True)
class BindingReport:
    E0b: float
    E1b: float
    E2b: float
    E2b_fit: float | None = None
    E2b_fit_error: float | None = None
    N: tuple = ()
    deltaE: tuple = ()
    residual0: tuple = ()
    residual1: tuple = ()
    slopes: dict = field(default_factory=dict)


def leading_binding_direct(model: CutoffModel) -> float:
    """e_H + 1/2 <phi, (v * |phi|^2) phi> evaluated on the Hartree minimizer."""
    state = minimize_hartree(model)
    return state.energy + 0.5 * torus_interaction_energy(model, state)


def binding_coefficients(model: CutoffModel, order: int = 2, h: float = 0.05) -> BindingReport:
    require_homogeneous(model, None)
    coeffs, syms = reexpansion(max(order, 2))
    state = minimize_hartree(model)
    inter = torus_interaction_energy(model, state)
    E0, dE0, d2E0 = e0_derivatives(model)
    E1 = energy_coefficients(model)["E1"]
    dE1, _ = richardson_derivative(lambda lam: _coefficient_at(model, "E1", lam), 1.0, h)
    values = {
        # e_H(lambda v) = kinetic + lambda * interaction/2 for a lambda-independent minimizer
        ("eH", 0): state.energy, ("eH", 1): 0.5 * inter, ("eH", 2): 0.0, ("eH", 3): 0.0,
        ("E0", 0): E0, ("E0", 1): dE0, ("E0", 2): d2E0,
        ("E1", 0): E1, ("E1", 1): dE1,
    }
    subs = {syms[key]: val for key, val in values.items()}
    out = []
    for c in coeffs[:3]:
        missing = c.free_symbols - set(subs)
        if missing:
            raise DerivativeError(f"coefficient needs unavailable derivatives {sorted(map(str, missing))}")
        out.append(float(c.subs(subs)))
    return BindingReport(*out)


def binding_oracle(model: CutoffModel, N_list, workers=None) -> list[tuple[int, float, float, float]]:
    """(N, E_N, E_{N-1}, Delta E) with both systems at coupling 1/(N-1)."""
    def one(N):
        m_N = model.with_N(N)
        # N-1 particles at coupling 1/(N-1) = potential (N-2)/(N-1) at the standard coupling 1/(N-2)
        m_red = model.with_N(N - 1).with_potential(model.potential.scaled((N - 2) / (N - 1)))
        eN = solve_ground_state(m_N).energy
        eR = solve_ground_state(m_red).energy
        return N, eN, eR, eN - eR
    return bounded_map(one, N_list, workers)


def binding_report(model: CutoffModel, N_list, workers=None) -> BindingReport:
    coeffs = binding_coefficients(model)
    table = binding_oracle(model, N_list, workers)
    N = np.array([r[0] for r in table], dtype=float)
    dE = np.array([r[3] for r in table])
    r0 = dE - coeffs.E0b
    r1 = r0 - coeffs.E1b / N
    s0 = fit_power_law(zip(N, np.abs(r0)), -1.0, 0.15)
    s1 = fit_power_law(zip(N, np.abs(r1)), -2.0, 0.3)
    y = r1 * N**2
    take = slice(max(0, len(N) - 4), None)
    fit1 = np.polyfit(1 / N[take], y[take], 1)[-1]
    take2 = slice(max(0, len(N) - 5), None)
    fit2 = np.polyfit(1 / N[take2], y[take2], 2)[-1]
    return BindingReport(coeffs.E0b, coeffs.E1b, coeffs.E2b, float(fit1), float(abs(fit1 - fit2)),
                         tuple(int(n) for n in N), tuple(dE), tuple(r0), tuple(r1),
                         {"order0": s0, "order1": s1})
