"""Quench dynamics: Hartree flow, Bogoliubov mode flow and the first-order correction.

Protocol: prepare the ground state for potential v, evolve under v'. With the
homogeneous condensate stationary, the quadratic flow exp(-i H0' t) acts on the
quasi-free state through the map U_t = U0 exp(i H0' t),

    U_t a_p U_t^* = U_p(t) a_p + conj(W_p(t)) a*_{-p},
    i d/dt (U, W) = [[A', B'], [-B', -A']] (U, W),   (U, W)(0) = (u, -v).

chi0(t) = U_t^* Omega is a pair state with amplitude c = conj(W)/conj(U), and
chi1(t) = U_t^* xi(t) with xi(t) = U0 chi1 - i int_0^t [U_s H1' U_s^* Omega] ds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson

from .bogoliubov import BogoliubovMap, QuasifreeState, assemble_H0, bogoliubov_map, pair_amplitudes
from .fock import assemble_hamiltonian, cached_excitation_basis, excitation_reconstruct, restrict
from .ladder import substitute
from .model import CutoffModel
from .oracle import StepSizeError, bounded_map, evolve, fit_power_law, solve_ground_state
from .perturbation import ChiOne, apply_polynomial, assemble_H1, compute_chi1, rotated_vacuum_components


class IntegrationAccuracyError(RuntimeError):
    pass


# --- Hartree flow on the torus ------------------------------------------------

@dataclass(frozen=True)
class CondensateTrajectory:
    times: np.ndarray
    phi: np.ndarray = field(repr=False)  # (T, n^d) Fourier coefficients on the FFT grid
    mu: np.ndarray = field(repr=False)
    mass: np.ndarray = field(repr=False)
    energy: np.ndarray = field(repr=False)
    grid: int = 0
    dimension: int = 1

    @property
    def homogeneous(self) -> bool:
        c = self.phi.copy()
        c[:, 0] = 0.0
        return bool(np.max(np.abs(c)) < 1e-12)

    def drift(self) -> dict:
        T = max(self.times[-1] - self.times[0], 1e-300)
        return {"mass": float(np.max(np.abs(self.mass - self.mass[0])) / T),
                "energy": float(np.max(np.abs(self.energy - self.energy[0])) / T)}


def _fft_momenta(n: int, d: int) -> np.ndarray:
    k = np.fft.fftfreq(n, 1.0 / n).astype(np.int64)
    mesh = np.meshgrid(*([k] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _potential_on_grid(model: CutoffModel, n: int) -> np.ndarray:
    ks = _fft_momenta(n, model.modes.dimension)
    return np.array([model.potential(k) for k in ks]).reshape((n,) * model.modes.dimension)


def _embed_modes(phi_modes: np.ndarray, model: CutoffModel, n: int) -> np.ndarray:
    d = model.modes.dimension
    out = np.zeros((n,) * d, dtype=complex)
    for amp, m in zip(phi_modes, model.modes.momenta):
        out[tuple(int(x) % n for x in m)] = amp
    return out


class _HartreeGrid:
    """Coefficients c_k with phi(x) = sum_k c_k e^{2 pi i k x}; norm = sum |c_k|^2."""

    def __init__(self, model: CutoffModel, n: int):
        d = model.modes.dimension
        self.shape = (n,) * d
        self.size = n**d
        self.kin = (4 * np.pi**2 * np.sum(_fft_momenta(n, d).astype(float) ** 2, axis=1)).reshape(self.shape)
        self.vhat = _potential_on_grid(model, n)

    def to_x(self, c):
        return np.fft.ifftn(c) * self.size

    def to_k(self, f):
        return np.fft.fftn(f) / self.size

    def mean_field(self, f):
        rho_k = self.to_k(np.abs(f) ** 2)
        return np.real(self.to_x(self.vhat * rho_k))

    def mu(self, c) -> float:
        f = self.to_x(c)
        return float(np.mean(self.mean_field(f) * np.abs(f) ** 2))

    def energy(self, c) -> float:
        f = self.to_x(c)
        return float(np.sum(self.kin * np.abs(c) ** 2) + 0.5 * np.mean(self.mean_field(f) * np.abs(f) ** 2))

    def step(self, c, dt):
        c = c * np.exp(-0.5j * dt * self.kin)
        f = self.to_x(c)
        W = self.mean_field(f)
        mu = float(np.mean(W * np.abs(f) ** 2))
        # |f| is unchanged by the phase, so W and mu are exact over the full step
        f = f * np.exp(-1j * dt * (W - mu))
        c = self.to_k(f)
        return c * np.exp(-0.5j * dt * self.kin)


def _run_hartree(model, phi0, t_grid, dt, n):
    g = _HartreeGrid(model, n)
    c = _embed_modes(phi0, model, n)
    times = np.asarray(t_grid, dtype=float)
    out, mu, mass, energy = [], [], [], []
    t = 0.0
    for target in times:
        steps = int(round((target - t) / dt))
        if steps < 0 or abs(steps * dt - (target - t)) > 1e-9 * max(1.0, target):
            raise StepSizeError("time grid must be a multiple of dt")
        for _ in range(steps):
            c = g.step(c, dt)
        t = target
        out.append(c.ravel().copy())
        mu.append(g.mu(c))
        mass.append(float(np.sum(np.abs(c) ** 2)))
        energy.append(g.energy(c))
    return CondensateTrajectory(times, np.array(out), np.array(mu), np.array(mass), np.array(energy),
                                n, model.modes.dimension)


def evolve_hartree(phi0: np.ndarray, model: CutoffModel, t_grid, dt: float = 1e-3, grid: int | None = None,
                   check: bool = True, tol: float = 1e-6) -> CondensateTrajectory:
    """Strang split-step: kinetic half step, mean-field phase, kinetic half step.

    ``phi0`` holds mode amplitudes over ``model.modes``; the gauge is
    mu(t) = <phi, (v * |phi|^2) phi>. With ``check`` the run is repeated at dt/2
    and a disagreement above ``tol`` at the final time raises StepSizeError.
    """
    phi0 = np.asarray(phi0, dtype=complex)
    if abs(np.linalg.norm(phi0) - 1.0) > 1e-12:
        raise ValueError("phi0 must be normalized")
    n = grid or max(16, 4 * model.modes.cutoff + 2)
    traj = _run_hartree(model, phi0, t_grid, dt, n)
    if check:
        fine = _run_hartree(model, phi0, [t_grid[-1]], dt / 2, n)
        gap = float(np.linalg.norm(fine.phi[-1] - traj.phi[-1]))
        if gap > tol:
            raise StepSizeError(f"Hartree step {dt} disagrees with {dt / 2} by {gap:.2e}")
    return traj


def hartree_convergence_order(phi0, model: CutoffModel, t: float, dt: float, grid: int | None = None) -> float:
    """Observed order from runs at dt, dt/2, dt/4."""
    n = grid or max(16, 4 * model.modes.cutoff + 2)
    runs = [_run_hartree(model, np.asarray(phi0, complex), [t], dt / 2**i, n).phi[-1] for i in range(3)]
    e1 = np.linalg.norm(runs[0] - runs[1])
    e2 = np.linalg.norm(runs[1] - runs[2])
    return float(np.log2(e1 / e2))


# --- Bogoliubov mode flow -----------------------------------------------------

@dataclass(frozen=True)
class ModePropagator:
    times: np.ndarray
    modes: np.ndarray
    U: np.ndarray = field(repr=False)  # (T, n_modes)
    W: np.ndarray = field(repr=False)
    A: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    defect: np.ndarray = field(repr=False)  # max_p | |U|^2 - |W|^2 - 1 | per time

    def frame(self, i: int) -> tuple[dict, dict]:
        """(U, V) of U_t a U_t^*: a_p -> U a_p + conj(W) a*_{-p}."""
        return ({int(p): complex(u) for p, u in zip(self.modes, self.U[i])},
                {int(p): complex(np.conj(w)) for p, w in zip(self.modes, self.W[i])})

    def inverse_frame(self, i: int) -> tuple[dict, dict]:
        """Coefficients for substitute() realizing U_t^* a U_t = conj(U) a - conj(W) a*_{-p}."""
        return ({int(p): complex(np.conj(u)) for p, u in zip(self.modes, self.U[i])},
                {int(p): complex(-np.conj(w)) for p, w in zip(self.modes, self.W[i])})

    def max_defect(self) -> float:
        return float(np.max(self.defect))


def _gauss_legendre_step(A, B, h):
    """One step of the 2-stage Gauss method for i x' = G x with G = [[A, B], [-B, -A]].

    For a linear system this is the (2,2) Pade approximant of exp(-i G h), which
    preserves |U|^2 - |W|^2 exactly.
    """
    G = np.array([[A, B], [-B, -A]], dtype=complex)
    M = -1j * h * G
    eye = np.eye(2)
    return np.linalg.solve(eye - M / 2 + M @ M / 12, eye + M / 2 + M @ M / 12)


def evolve_bogoliubov(bmap0: BogoliubovMap, trajectory: CondensateTrajectory | None, model_after: CutoffModel,
                      t_grid, dt: float = 1e-3, max_defect: float = 1e-6) -> ModePropagator:
    if trajectory is not None and not trajectory.homogeneous:
        raise ValueError("mode flow requires a homogeneous condensate trajectory")
    H0 = assemble_H0(model_after)
    times = np.asarray(t_grid, dtype=float)
    n = len(bmap0.modes)
    U = np.zeros((len(times), n), dtype=complex)
    W = np.zeros((len(times), n), dtype=complex)
    for j, (a, b) in enumerate(zip(H0.A, H0.B)):
        # substeps keep |A| h <= 5e-3, where the local error (A h)^5/7200 is at rounding level
        sub = max(1, int(np.ceil(abs(a) * dt / 5e-3)))
        S = np.linalg.matrix_power(_gauss_legendre_step(a, b, dt / sub), sub)
        x = np.array([bmap0.u[j], -bmap0.v[j]], dtype=complex)
        t = 0.0
        for i, target in enumerate(times):
            steps = int(round((target - t) / dt))
            if abs(steps * dt - (target - t)) > 1e-9 * max(1.0, target):
                raise StepSizeError("time grid must be a multiple of dt")
            x = np.linalg.matrix_power(S, steps) @ x if steps else x
            t = target
            U[i, j], W[i, j] = x
    defect = np.max(np.abs(np.abs(U) ** 2 - np.abs(W) ** 2 - 1.0), axis=1)
    if np.max(defect) > max_defect:
        raise IntegrationAccuracyError(f"symplectic defect {np.max(defect):.2e}")
    return ModePropagator(times, np.asarray(bmap0.modes), U, W, np.asarray(H0.A), np.asarray(H0.B), defect)


def chi0_at(bmap0: BogoliubovMap, prop: ModePropagator, i: int, k_max: int = 12) -> QuasifreeState:
    """exp(-i H0' t) chi0 on sectors <= k_max, from the mode flow.

    Per pair (p, -p): amplitude c = conj(W)/conj(U), prefactor exp(i A' t)/conj(U).
    """
    t = prop.times[i]
    pos = {int(p): j for j, p in enumerate(prop.modes)}
    c, g = {}, {}
    for p, _ in bmap0.pairs():
        j = pos[p]
        u, w = prop.U[i, j], prop.W[i, j]
        c[p] = np.conj(w) / np.conj(u)
        g[p] = np.exp(1j * prop.A[j] * t) / np.conj(u)
    basis = cached_excitation_basis(bmap0.mode_set, k_max)
    amp = pair_amplitudes(bmap0, basis, c=c, prefactor=g)
    return QuasifreeState(basis, amp, max(0.0, 1.0 - float(np.sum(np.abs(amp) ** 2))))


@dataclass(frozen=True)
class ChiOneDynamic:
    times: np.ndarray
    modes: np.ndarray
    xi1: np.ndarray = field(repr=False)  # (T, n)
    xi3: np.ndarray = field(repr=False)  # (T, n, n, n), symmetric
    propagator: ModePropagator = field(repr=False)

    def chi(self, i: int) -> ChiOne:
        z = np.zeros_like(self.xi1[i])
        return ChiOne(self.modes, self.xi1[i], self.xi3[i], z, np.zeros_like(self.xi3[i]))

    def norms(self) -> np.ndarray:
        return np.sqrt(np.sum(np.abs(self.xi1) ** 2, axis=1)
                       + 6 * np.sum(np.abs(self.xi3) ** 2, axis=(1, 2, 3)))

    def pattern_blocks(self, i: int, momenta: np.ndarray) -> dict:
        """Coefficients of the ladder patterns in chi1(t) = sum c a^# chi0(t) + sum c a^# a^# a^# chi0(t).

        b*_p(t) = U a*_p - W a_{-p}: pattern +1 puts U_p at mode p, pattern -1 puts
        -W_p at mode -p. Keys are tuples of +1/-1; each block is indexed by the
        modes that the corresponding ladder operators carry.
        """
        U, W = self.propagator.U[i], self.propagator.W[i]
        neg = _negation_positions(self.modes, momenta)
        factor = {1: (U, np.arange(len(U))), -1: (-W, neg)}
        blocks = {}
        for j in (1, -1):
            f, where = factor[j]
            out = np.zeros_like(self.xi1[i])
            out[where] = self.xi1[i] * f
            blocks[(j,)] = out
        n = len(U)
        for j1 in (1, -1):
            for j2 in (1, -1):
                for j3 in (1, -1):
                    out = np.zeros((n, n, n), dtype=complex)
                    (f1, w1), (f2, w2), (f3, w3) = factor[j1], factor[j2], factor[j3]
                    T = self.xi3[i] * f1[:, None, None] * f2[None, :, None] * f3[None, None, :]
                    out[np.ix_(w1, w2, w3)] = T
                    blocks[(j1, j2, j3)] = out
        return blocks


def _negation_positions(modes, momenta):
    pos = {tuple(momenta[int(p)]): j for j, p in enumerate(modes)}
    return np.array([pos[tuple(-momenta[int(p)])] for p in modes])


def _cumsimpson(y, x):
    return (cumulative_simpson(y.real, x=x, axis=0, initial=0)
            + 1j * cumulative_simpson(y.imag, x=x, axis=0, initial=0))


def chi1_dynamics(bmap0: BogoliubovMap, prop: ModePropagator, H1_after: dict, chi1_initial: ChiOne,
                  tol: float = 1e-6) -> ChiOneDynamic:
    """Duhamel integral for xi(t) with composite Simpson on the propagator grid.

    The grid must be uniform with an odd number of points; the same integral on
    every other point is the refinement check.
    """
    times = prop.times
    n = len(prop.modes)
    w1 = np.zeros((len(times), n), dtype=complex)
    w3 = np.zeros((len(times), n, n, n), dtype=complex)
    if H1_after:
        for i in range(len(times)):
            U, V = prop.frame(i)
            w1[i], w3[i] = rotated_vacuum_components(H1_after, U, V, bmap0.partner, prop.modes)
    x1 = chi1_initial.theta1 - 1j * _cumsimpson(w1, times)
    x3 = chi1_initial.theta3 - 1j * _cumsimpson(w3, times)
    if H1_after and len(times) >= 5:
        coarse1 = _cumsimpson(w1[::2], times[::2])[-1]
        coarse3 = _cumsimpson(w3[::2], times[::2])[-1]
        gap = max(np.max(np.abs(coarse1 + (x1[-1] - chi1_initial.theta1) / 1j)),
                  np.max(np.abs(coarse3 + (x3[-1] - chi1_initial.theta3) / 1j)))
        if gap > tol:
            raise StepSizeError(f"Duhamel quadrature changes by {gap:.2e} under grid halving")
    return ChiOneDynamic(times, prop.modes, x1, x3, prop)


def chi1_vector_at(dyn: ChiOneDynamic, bmap0: BogoliubovMap, i: int, chi0_t: QuasifreeState):
    """chi1(t) = U_t^* xi(t) realized next to chi0(t)."""
    U, V = dyn.propagator.inverse_frame(i)
    op = substitute(dyn.chi(i).creation_polynomial(), U, V, bmap0.partner)
    return apply_polynomial(op, chi0_t.vector, chi0_t.basis, chi0_t.basis.cap + 3)


# --- norm errors against the oracle -------------------------------------------

@dataclass(frozen=True)
class QuenchSpec:
    vhat_after: float | None = None  # constant potential after the quench
    scale: float | None = None  # or: multiply the potential by this factor

    def apply(self, model: CutoffModel) -> CutoffModel:
        if self.vhat_after is not None:
            from .model import PairPotential
            return model.with_potential(PairPotential.constant(self.vhat_after, model.modes))
        if self.scale is not None:
            return model.with_potential(model.potential.scaled(self.scale))
        return model


@dataclass(frozen=True)
class DynamicsReport:
    N: tuple
    t: float
    error0: tuple
    error1: tuple
    norm_drift: tuple
    symplectic_defect: float
    hartree_drift: dict
    scaling0: object = None
    scaling1: object = None


def quench_pipeline(model: CutoffModel, quench: QuenchSpec, t: float, dt: float = 1e-3):
    """Mean-field side of the quench: trajectory, mode flow, chi1(t). Independent of N."""
    if t <= 0:
        raise ValueError("quench time must be positive")
    after = quench.apply(model)
    bmap0 = bogoliubov_map(model)
    # the Duhamel integrand oscillates at up to three mode frequencies
    omega = 3.0 * float(np.max(np.abs(assemble_H0(after).A)))
    dt = min(dt, 0.15 / omega)
    nsteps = max(2, int(np.ceil(t / dt)))
    nsteps += nsteps % 2
    grid = np.linspace(0.0, t, nsteps + 1)
    phi0 = np.zeros(model.modes.size, dtype=complex)
    phi0[model.modes.zero_index] = 1.0
    traj = evolve_hartree(phi0, after, [0.0, t], dt=t / nsteps, check=False)
    prop = evolve_bogoliubov(bmap0, traj, after, grid, dt=t / nsteps)
    chi_init = compute_chi1(bmap0, assemble_H1(model))
    dyn = chi1_dynamics(bmap0, prop, assemble_H1(after), chi_init)
    return after, bmap0, traj, prop, dyn


def norm_errors(model: CutoffModel, quench: QuenchSpec, N: int, t: float, pipeline=None, k_max: int = 12):
    """(error order 0, error order 1, oracle norm drift) at one N."""
    after, bmap0, _, prop, dyn = pipeline or quench_pipeline(model, quench, t)
    gs = solve_ground_state(model.with_N(N))
    v0 = after.potential(np.zeros(model.modes.dimension, dtype=int))
    H = assemble_hamiltonian(after.with_N(N), gs.basis, shift=N * v0 / 2)
    psi_t = evolve(gs.vector, H, t)
    drift = abs(np.linalg.norm(psi_t) - 1.0)
    i = len(prop.times) - 1
    chi0 = chi0_at(bmap0, prop, i, k_max)
    c1, b1 = chi1_vector_at(dyn, bmap0, i, chi0)
    occ = gs.basis
    x0, bx0 = (restrict(chi0.vector, chi0.basis, N) if chi0.basis.cap > N else (chi0.vector, chi0.basis))
    x1, bx1 = (restrict(c1, b1, N) if b1.cap > N else (c1, b1))
    psi0 = excitation_reconstruct(x0, bx0, N, occ)
    psi1 = excitation_reconstruct(x1, bx1, N, occ)
    e0 = float(np.linalg.norm(psi_t - psi0))
    e1 = float(np.linalg.norm(psi_t - psi0 - N**-0.5 * psi1))
    return e0, e1, float(drift)


def norm_error_report(model: CutoffModel, quench: QuenchSpec, N_list, t: float, workers=None) -> DynamicsReport:
    pipe = quench_pipeline(model, quench, t)
    after, _, traj, prop, _ = pipe
    rows = bounded_map(lambda N: norm_errors(model, quench, N, t, pipe), N_list, workers)
    e0 = tuple(r[0] for r in rows)
    e1 = tuple(r[1] for r in rows)
    s0 = fit_power_law(zip(N_list, e0), -0.5, 0.2)
    s1 = fit_power_law(zip(N_list, e1), -1.0, 0.25)
    drift = traj.drift()
    return DynamicsReport(tuple(N_list), t, e0, e1, tuple(r[2] for r in rows), prop.max_defect(), drift, s0, s1)


def envelope_fit(times, errors) -> dict:
    """Fit log(error) <= log(a) + C t from above: C from the upper convex hull slope."""
    t = np.asarray(times, float)
    y = np.log(np.maximum(np.asarray(errors, float), 1e-300))
    C = float(np.max(np.diff(y) / np.diff(t))) if len(t) > 1 else 0.0
    C = max(C, 0.0)
    a = float(np.max(y - C * t))
    ok = bool(np.all(y <= a + C * t + 1e-12))
    return {"C": C, "log_a": a, "below": ok}


def quench_errors_over_time(model: CutoffModel, quench: QuenchSpec, N: int, times) -> list[float]:
    """Order-0 norm error at fixed N over a list of times (envelope check)."""
    out = []
    for t in times:
        pipe = quench_pipeline(model, quench, t) if t > 0 else None
        if pipe is None:
            from .perturbation import assemble_psi_N_ell
            from .bogoliubov import chi0_state
            gs = solve_ground_state(model.with_N(N))
            chi0 = chi0_state(bogoliubov_map(model))
            x, b = restrict(chi0.vector, chi0.basis, N) if chi0.basis.cap > N else (chi0.vector, chi0.basis)
            out.append(float(np.linalg.norm(gs.vector - assemble_psi_N_ell(x, b, N, gs.basis))))
        else:
            out.append(norm_errors(model, quench, N, t, pipe)[0])
    return out

