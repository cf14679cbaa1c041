"""Hartree functional: analytic torus minimizer and a grid solver for traps."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator
from scipy.signal import fftconvolve

from .model import CutoffModel, TrapGrid, build_trap_grid, validate_potential


class NormalizationError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ResolutionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class HartreeState:
    amplitudes: np.ndarray = field(repr=False)  # mode amplitudes (torus) or grid samples (trap)
    energy: float
    mu: float
    residual: float
    iterations: int = 0
    on_grid: bool = False

    @property
    def is_homogeneous(self) -> bool:
        return False if self.on_grid else _is_basis_vector(self.amplitudes)


def _is_basis_vector(a) -> bool:
    big = np.abs(a) > 1e-12
    return big.sum() == 1


def fix_phase(phi: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(phi) > 1e-14)
    if len(nz) == 0:
        return phi
    c = phi[nz[0]]
    return phi * (abs(c) / c)


# --- torus, mode space ----------------------------------------------------------

def _torus_density(phi: np.ndarray, model: CutoffModel) -> dict:
    """Coefficients of e^{ikx} in |phi|^2: rho(k) = sum_p conj(phi_p) phi_{p+k}."""
    modes = model.modes
    rho = {}
    for k in modes.difference_vectors():
        kk = np.array(k)
        s = 0.0j
        for i, p in enumerate(modes.momenta):
            j = modes.index(p + kk)
            if j is not None:
                s += np.conj(phi[i]) * phi[j]
        rho[k] = s
    return rho


def _torus_mean_field(phi: np.ndarray, model: CutoffModel) -> np.ndarray:
    """Mode components of (v * |phi|^2) phi, restricted to the mode set."""
    modes = model.modes
    rho = _torus_density(phi, model)
    out = np.zeros(modes.size, dtype=complex)
    # W(x) = sum_k v(k) rho(k) e^{ikx}; W phi moves amplitude from q to q + k
    for k, r in rho.items():
        vk = model.potential(k)
        if vk == 0.0 or r == 0.0:
            continue
        kk = np.array(k)
        for j, q in enumerate(modes.momenta):
            i = modes.index(q + kk)
            if i is not None:
                out[i] += vk * r * phi[j]
    return out


def _torus_energy(phi, model) -> float:
    kin = float(np.sum(model.modes.kinetic() * np.abs(phi) ** 2))
    rho = _torus_density(phi, model)
    inter = sum(model.potential(k) * abs(r) ** 2 for k, r in rho.items())
    return kin + 0.5 * float(inter)


def _torus_h_phi(phi, model) -> np.ndarray:
    return model.modes.kinetic() * phi + _torus_mean_field(phi, model)


# --- trap grid -----------------------------------------------------------------

@dataclass(frozen=True)
class TrapProblem:
    grid: TrapGrid
    interaction: str = "none"  # none | contact | gaussian
    strength: float = 0.0
    width: float = 1.0

    @property
    def dx(self) -> float:
        return self.grid.spacing

    def weight(self) -> float:
        return self.dx ** self.grid.dimension

    def kinetic_matrix(self) -> sp.csr_matrix:
        n, h = self.grid.points, self.dx
        lap1 = sp.diags([np.full(n - 1, 1.0), np.full(n, -2.0), np.full(n - 1, 1.0)], [-1, 0, 1]) / h**2
        eye = sp.identity(n)
        if self.grid.dimension == 1:
            lap = lap1
        else:
            lap = sp.kron(lap1, eye) + sp.kron(eye, lap1)
        return (-lap).tocsr()

    def hartree_potential(self, phi: np.ndarray) -> np.ndarray:
        dens = np.abs(phi.reshape(self.grid.shape)) ** 2
        if self.interaction == "none" or self.strength == 0.0:
            return np.zeros(phi.size)
        if self.interaction == "contact":
            return (self.strength * dens).ravel()
        x = self.grid.x
        d = self.grid.dimension
        # kernel sampled on offsets [-2L, 2L] so the "same" window is exact
        offs = np.arange(-(len(x) - 1), len(x)) * self.dx
        mesh = np.meshgrid(*([offs] * d), indexing="ij")
        r2 = sum(m**2 for m in mesh)
        kern = self.strength * np.exp(-0.5 * r2 / self.width**2)
        conv = fftconvolve(dens, kern, mode="same") * self.weight()
        return conv.ravel()


def trap_problem_from_potential(grid: TrapGrid, potential_spec: dict | None) -> TrapProblem:
    if not potential_spec:
        return TrapProblem(grid)
    kind = potential_spec["kind"]
    if kind == "constant":
        return TrapProblem(grid, "contact", float(potential_spec["value"]))
    if kind == "gaussian":
        return TrapProblem(grid, "gaussian", float(potential_spec["amplitude"]),
                           float(potential_spec["width"]))
    raise ValueError(f"potential kind {kind!r} is not available on a trap grid")


def _norm(phi, w) -> float:
    return float(np.sqrt(w * np.vdot(phi, phi).real))


def _trap_energy(phi, prob: TrapProblem, T=None) -> float:
    w = prob.weight()
    T = prob.kinetic_matrix() if T is None else T
    V = prob.grid.values.ravel()
    kin = np.vdot(phi, T @ phi).real
    pot = np.vdot(phi, V * phi).real
    inter = np.vdot(phi, prob.hartree_potential(phi) * phi).real
    return float(w * (kin + pot + 0.5 * inter))


def _trap_h_phi(phi, prob: TrapProblem, T=None):
    T = prob.kinetic_matrix() if T is None else T
    return T @ phi + (prob.grid.values.ravel() + prob.hartree_potential(phi)) * phi


# --- public operations -----------------------------------------------------------

def hartree_energy(phi: np.ndarray, model) -> float:
    """Kinetic + trap + 1/2 interaction for a normalized phi."""
    if isinstance(model, TrapProblem):
        if abs(_norm(phi, model.weight()) - 1.0) > 1e-10:
            raise NormalizationError("phi must have unit L2 norm")
        return _trap_energy(phi, model)
    if abs(np.linalg.norm(phi) - 1.0) > 1e-10:
        raise NormalizationError("phi must have unit L2 norm")
    return _torus_energy(np.asarray(phi, dtype=complex), model)


def energy_gradient(phi: np.ndarray, model) -> np.ndarray:
    """h[phi] phi; the derivative of the functional along eta is 2 Re <eta, h phi>."""
    if isinstance(model, TrapProblem):
        return _trap_h_phi(phi, model)
    return _torus_h_phi(np.asarray(phi, dtype=complex), model)


def hartree_residual(state: HartreeState, model) -> float:
    phi = state.amplitudes
    if isinstance(model, TrapProblem):
        w = model.weight()
        hphi = _trap_h_phi(phi, model)
        mu = w * np.vdot(phi, hphi).real
        return _norm(hphi - mu * phi, w)
    hphi = _torus_h_phi(np.asarray(phi, dtype=complex), model)
    mu = np.vdot(phi, hphi).real
    return float(np.linalg.norm(hphi - mu * phi))


def minimize_hartree(model, tol: float = 1e-10, max_iter: int = 5000, dt: float = 5.0,
                     probe_resolution: bool = False, probe_tol: float = 1e-6) -> HartreeState:
    """Hartree minimizer on the torus (closed form) or on a trap grid (gradient flow)."""
    if isinstance(model, CutoffModel):
        return _torus_minimizer(model)
    state = _trap_flow(model, tol, max_iter, dt)
    if probe_resolution:
        fine_prob = TrapProblem(refine_grid(model.grid), model.interaction, model.strength, model.width)
        fine_state = _trap_flow(fine_prob, tol, max_iter, dt / 2)
        shift = abs(fine_state.energy - state.energy)
        if shift > probe_tol:
            warnings.warn(f"trap grid too coarse: energy moved by {shift:.2e} under refinement",
                          ResolutionWarning, stacklevel=2)
    return state


def refine_grid(g: TrapGrid) -> TrapGrid:
    """Same box at twice the resolution."""
    n = 2 * g.points - 1
    if g.kind == "harmonic":
        return build_trap_grid(g.dimension, g.L, n, "harmonic", threshold=g.threshold)
    xf = np.linspace(-g.L, g.L, n)
    interp = RegularGridInterpolator([g.x] * g.dimension, g.values)
    mesh = np.meshgrid(*([xf] * g.dimension), indexing="ij")
    vals = interp(np.stack([m.ravel() for m in mesh], axis=-1))
    return build_trap_grid(g.dimension, g.L, n, "table", vals, g.threshold)


def _torus_minimizer(model: CutoffModel) -> HartreeState:
    validate_potential(model.potential, model.modes)
    phi = np.zeros(model.modes.size, dtype=complex)
    phi[model.modes.zero_index] = 1.0
    v0 = model.potential(np.zeros(model.modes.dimension, dtype=int))
    state = HartreeState(phi, 0.5 * v0, v0, 0.0)
    res = hartree_residual(state, model)
    return HartreeState(phi, _torus_energy(phi, model), v0, res)


def _trap_flow(prob: TrapProblem, tol, max_iter, dt) -> HartreeState:
    """Normalized backward-Euler gradient flow with a lagged mean-field potential."""
    w = prob.weight()
    T = prob.kinetic_matrix()
    V = prob.grid.values.ravel()
    ident = sp.identity(T.shape[0], format="csr")
    mesh = prob.grid.coordinates()
    phi = np.exp(-0.5 * sum(m**2 for m in mesh)).ravel().astype(float)
    phi /= _norm(phi, w)
    energy = _trap_energy(phi, prob, T)
    res = np.inf
    for it in range(1, max_iter + 1):
        step = dt
        while True:
            A = (ident + step * (T + sp.diags(V + prob.hartree_potential(phi)))).tocsc()
            new = spla.spsolve(A, phi)
            new /= _norm(new, w)
            e_new = _trap_energy(new, prob, T)
            if e_new <= energy + 1e-14 * max(1.0, abs(energy)) or step < 1e-8:
                break
            step *= 0.5
        phi, energy = new, e_new
        hphi = _trap_h_phi(phi, prob, T)
        mu = w * np.vdot(phi, hphi).real
        res = _norm(hphi - mu * phi, w)
        if res <= tol:
            phi = fix_phase(phi)
            return HartreeState(phi, energy, float(mu), float(res), it, on_grid=True)
    raise ConvergenceError(f"Hartree flow did not converge in {max_iter} steps "
                           f"(residual {res:.3e})", residual=res)


def torus_interaction_energy(model: CutoffModel, state: HartreeState) -> float:
    """<phi, (v * |phi|^2) phi>."""
    phi = np.asarray(state.amplitudes, dtype=complex)
    return float(np.vdot(phi, _torus_mean_field(phi, model)).real)
