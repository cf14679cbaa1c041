"""Exact-diagonalization oracle: Lanczos ground states, energy curves, observable
statistics, reduced density, Krylov evolution and power-law fits."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .fock import OccupationBasis, apply_word, assemble_hamiltonian, enumerate_basis, one_body_operator
from .model import CutoffModel

DENSE_LIMIT = 2000


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class FitDomainError(ValueError):
    pass


class StepSizeError(RuntimeError):
    pass


def worker_count(workers: int | None = None) -> int:
    if workers:
        return max(1, int(workers))
    env = os.environ.get("BOSE_EXPAND_WORKERS")
    return max(1, int(env)) if env else (os.cpu_count() or 1)


def bounded_map(fn, items, workers: int | None = None) -> list:
    """Order-preserving map over a bounded thread pool."""
    items = list(items)
    n = min(worker_count(workers), len(items)) or 1
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# --- Lanczos ------------------------------------------------------------------

def start_vector(dim: int, seed: int = 0, dtype=float) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = 1e-2 * rng.standard_normal(dim)
    v[0] += 1.0
    return (v / np.linalg.norm(v)).astype(dtype)


def _lanczos_pass(H, v0, m):
    """m steps with full reorthogonalization.

    Returns (alpha, beta, V, residual) where ``residual`` is the norm of the
    component left outside the Krylov space (0 on breakdown).
    """
    dim = len(v0)
    V = np.zeros((min(m, dim), dim), dtype=np.result_type(H.dtype, v0.dtype))
    alpha, beta = [], []
    V[0] = v0
    scale = 1.0
    for j in range(len(V)):
        w = H @ V[j]
        a = np.vdot(V[j], w).real
        alpha.append(a)
        scale = max(scale, abs(a))
        w = w - a * V[j] - (beta[-1] * V[j - 1] if j else 0)
        # two rounds of Gram-Schmidt keep the basis orthogonal to machine precision
        for _ in range(2):
            w -= V[: j + 1].T @ (V[: j + 1].conj() @ w)
        b = np.linalg.norm(w)
        if b < 1e-13 * scale:
            return np.array(alpha), np.array(beta), V[: j + 1], 0.0
        if j + 1 == len(V):
            return np.array(alpha), np.array(beta), V, float(b)
        beta.append(b)
        V[j + 1] = w / b
    return np.array(alpha), np.array(beta), V, 0.0


def lanczos_ground_state(H, tol: float = 1e-10, max_iter: int = 50, krylov: int = 120,
                         seed: int = 0) -> tuple[float, np.ndarray]:
    """Smallest eigenpair by restarted Lanczos; residual ||H psi - E psi|| <= tol."""
    dim = H.shape[0]
    if dim == 1:
        return float(np.real(H[0, 0] if not sp.issparse(H) else H.toarray()[0, 0])), np.ones(1)
    v = start_vector(dim, seed, dtype=np.result_type(H.dtype, float))
    res = np.inf
    for _ in range(max_iter):
        alpha, beta, V, _ = _lanczos_pass(H, v, krylov)
        if len(alpha) > 1:
            _, S = sla.eigh_tridiagonal(alpha, beta, lapack_driver="stev")
        else:
            S = np.ones((1, 1))
        psi = S[:, 0] @ V
        psi /= np.linalg.norm(psi)
        E = float(np.vdot(psi, H @ psi).real)
        res = float(np.linalg.norm(H @ psi - E * psi))
        if res <= tol:
            return E, _fix_sign(psi)
        v = psi
    raise ConvergenceError(f"Lanczos did not reach {tol:g} (residual {res:.3e})", residual=res)


def dense_ground_state(H) -> tuple[float, np.ndarray]:
    A = H.toarray() if sp.issparse(H) else np.asarray(H)
    w, U = np.linalg.eigh(A)
    return float(w[0]), _fix_sign(U[:, 0])


def _fix_sign(psi):
    i = int(np.argmax(np.abs(psi)))
    return psi * (abs(psi[i]) / psi[i])


def ground_state(H, tol: float = 1e-10, max_iter: int = 50, seed: int = 0) -> tuple[float, np.ndarray]:
    if hermitian_defect(H) > 1e-12:
        raise ValueError("ground_state needs a hermitian operator")
    return lanczos_ground_state(H, tol=tol, max_iter=max_iter, seed=seed)


def hermitian_defect(H) -> float:
    D = H - H.conj().T
    if sp.issparse(D):
        return float(abs(D).max()) if D.nnz else 0.0
    return float(np.max(np.abs(D))) if D.size else 0.0


# --- energy curves ------------------------------------------------------------

@dataclass(frozen=True)
class GroundState:
    N: int
    energy: float
    vector: np.ndarray = field(repr=False)
    basis: OccupationBasis = field(repr=False)


def solve_ground_state(model: CutoffModel, tol: float = 1e-10, seed: int = 0) -> GroundState:
    basis = enumerate_basis(model.modes, model.N)
    H = assemble_hamiltonian(model, basis)
    E, psi = ground_state(H, tol=tol, seed=seed)
    # fix the global phase by the condensate amplitude
    idx = basis.index(_condensate(model.modes, model.N))
    if abs(psi[idx]) > 1e-14:
        psi = psi * (abs(psi[idx]) / psi[idx])
    return GroundState(model.N, E, psi, basis)


def _condensate(modes, N):
    occ = np.zeros(modes.size, dtype=np.int64)
    occ[modes.zero_index] = N
    return occ


def energy_curve(model: CutoffModel, N_list, tol: float = 1e-10, workers: int | None = None,
                 seed: int = 0) -> list[tuple[int, float, int]]:
    """(N, E(N), dimension) with coupling 1/(N-1) at every N."""
    def one(N):
        gs = solve_ground_state(model.with_N(N), tol, seed)
        return N, gs.energy, gs.basis.dim
    return bounded_map(one, N_list, workers)


# --- power-law fits -----------------------------------------------------------

@dataclass(frozen=True)
class ScalingReport:
    N: tuple
    values: tuple
    slope: float
    prefactor: float
    residual: float
    window: tuple
    expected: float | None = None
    band: float | None = None

    @property
    def passed(self) -> bool:
        if self.expected is None:
            return True
        return abs(self.slope - self.expected) <= self.band

    def as_dict(self) -> dict:
        return {"N": list(self.N), "values": list(self.values), "slope": self.slope,
                "prefactor": self.prefactor, "residual": self.residual, "window": list(self.window),
                "expected": self.expected, "band": self.band, "passed": self.passed}


def fit_power_law(points, expected_slope: float | None = None, band: float = 0.15,
                  window: int = 6) -> ScalingReport:
    """Least squares of log|value| against log N over the largest ``window`` N."""
    pts = sorted((int(n), float(v)) for n, v in points)
    if len(pts) < 4:
        raise ValueError("a power-law fit needs at least 4 points")
    N = np.array([p[0] for p in pts], dtype=float)
    y = np.array([p[1] for p in pts])
    if np.any(y == 0):
        raise FitDomainError("zero value in power-law fit")
    if np.any(y > 0) and np.any(y < 0):
        raise FitDomainError("sign change in power-law fit; fit |value|")
    sel = slice(max(0, len(N) - max(window, 4)), None)
    x, ly = np.log(N[sel]), np.log(np.abs(y[sel]))
    s, c = np.polyfit(x, ly, 1)
    pred = np.exp(c) * N[sel] ** s
    resid = float(np.max(np.abs(pred - np.abs(y[sel])) / np.abs(y[sel])))
    return ScalingReport(tuple(int(n) for n in N), tuple(float(v) for v in y), float(s), float(np.exp(c)),
                         resid, tuple(int(n) for n in N[sel]), expected_slope, band)


def richardson(N_list, values, degree: int = 2) -> tuple[float, float]:
    """N -> infinity limit assuming value = c0 + c1/N + ... + c_degree/N^degree.

    Uses the largest degree+2 points; the error bar is the change from one degree less.
    """
    N = np.asarray(N_list, dtype=float)
    y = np.asarray(values, dtype=float)
    order = np.argsort(N)
    N, y = N[order], y[order]

    def limit(deg):
        take = slice(max(0, len(N) - (deg + 2)), None)
        coef = np.polyfit(1.0 / N[take], y[take], deg)
        return float(coef[-1])

    best = limit(degree)
    return best, abs(best - limit(degree - 1)) if degree > 0 else 0.0


# --- observable statistics ----------------------------------------------------

@dataclass(frozen=True)
class SpectralSample:
    """Distribution of B_N = N^{-1/2}(dGamma(B) - E[dGamma(B)]) in a state."""
    nodes: np.ndarray
    weights: np.ndarray
    mean: float
    N: int
    exact: bool

    def moment(self, k: int) -> float:
        return float(np.sum(self.weights * self.nodes**k))

    def cumulants(self) -> tuple[float, float, float, float]:
        m1, m2, m3, m4 = (self.moment(k) for k in range(1, 5))
        k2 = m2 - m1**2
        k3 = m3 - 3 * m2 * m1 + 2 * m1**3
        k4 = m4 - 4 * m3 * m1 - 3 * m2**2 + 12 * m2 * m1**2 - 6 * m1**4
        return m1, k2, k3, k4

    def characteristic(self, k) -> complex:
        return complex(np.sum(self.weights * np.exp(1j * k * self.nodes)))

    def expectation(self, g) -> float:
        return float(np.real(np.sum(self.weights * g(self.nodes))))


def observable_statistics(psi: np.ndarray, basis: OccupationBasis, B: np.ndarray,
                          krylov_cap: int = 600) -> SpectralSample:
    """Exact spectral measure of B_N in the state psi.

    Dense diagonalization for dimensions up to DENSE_LIMIT, otherwise Lanczos-Gauss
    quadrature from psi run to breakdown (exact) or to ``krylov_cap`` nodes.
    """
    B = np.asarray(B)
    if np.max(np.abs(B - B.conj().T)) > 1e-12:
        raise ValueError("observable must be hermitian")
    N = basis.N
    X = one_body_operator(B, basis)
    psi = psi / np.linalg.norm(psi)
    mean = float(np.vdot(psi, X @ psi).real)
    Xc = (X - mean * sp.identity(basis.dim)) / np.sqrt(N)
    if basis.dim <= DENSE_LIMIT:
        w, U = np.linalg.eigh(Xc.toarray())
        weights = np.abs(U.conj().T @ psi) ** 2
        return SpectralSample(w, weights, mean, N, True)
    alpha, beta, _, rest = _lanczos_pass(Xc.tocsr(), psi.astype(complex), krylov_cap)
    theta, S = sla.eigh_tridiagonal(alpha, beta, lapack_driver="stev")
    return SpectralSample(theta, np.abs(S[0]) ** 2, mean, N, rest == 0.0)


def operator_moments(psi, basis: OccupationBasis, B, orders=(1, 2)) -> dict:
    """<psi, B_N^k psi> by repeated application; independent of the spectral route."""
    X = one_body_operator(np.asarray(B), basis)
    psi = psi / np.linalg.norm(psi)
    mean = np.vdot(psi, X @ psi).real
    x = psi.astype(complex)
    out = {}
    for k in range(1, max(orders) + 1):
        x = (X @ x - mean * x) / np.sqrt(basis.N)
        if k in orders:
            out[k] = float(np.vdot(psi, x).real)
    return out


def one_particle_density(psi: np.ndarray, basis: OccupationBasis) -> np.ndarray:
    """gamma(p, q) = <a*_q a_p> / N."""
    M = basis.modes.size
    gamma = np.zeros((M, M), dtype=complex)
    psi = psi / np.linalg.norm(psi)
    for p in range(M):
        for q in range(M):
            target, amp = apply_word(basis.states, [(q, True), (p, False)])
            keep = amp != 0
            pos = basis.lookup.find(target[keep])
            ok = pos >= 0
            gamma[p, q] = np.sum(np.conj(psi[pos[ok]]) * amp[keep][ok] * psi[keep][ok])
    return gamma / basis.N


def depletion(psi, basis) -> float:
    return float(1.0 - np.linalg.eigvalsh(one_particle_density(psi, basis))[-1])


# --- Krylov evolution ---------------------------------------------------------

def _krylov_step(H, v, dt, m):
    """exp(-i H dt) v from an m-dimensional Krylov space; returns (vector, error estimate)."""
    beta0 = np.linalg.norm(v)
    alpha, beta, V, rest = _lanczos_pass(H, v / beta0, m)
    k = len(alpha)
    T = np.diag(alpha) + np.diag(beta, 1) + np.diag(beta, -1) if k > 1 else np.diag(alpha)
    e1 = np.zeros(k)
    e1[0] = 1.0
    y = sla.expm(-1j * dt * T) @ e1
    # standard a posteriori estimate; zero when the Krylov space is invariant
    err = beta0 * rest * abs(y[-1])
    return beta0 * (y @ V), float(err)


def evolve(psi: np.ndarray, H, t: float, tol: float = 1e-12, krylov: int = 30,
           max_steps: int = 100000) -> np.ndarray:
    """exp(-i H t) psi by adaptive Krylov substeps."""
    if t < 0:
        raise ValueError("t must be non-negative")
    v = np.asarray(psi, dtype=complex)
    if t == 0:
        return v.copy()
    norm_h = sp.linalg.norm(H, 1) if sp.issparse(H) else np.linalg.norm(H, 1)
    dt = min(t, 1.0 / max(norm_h, 1e-300) * 10)
    done, steps = 0.0, 0
    while done < t - 1e-15 * t:
        h = min(dt, t - done)
        new, err = _krylov_step(H, v, h, krylov)
        if err > tol * h / t and h > 1e-14 * t:
            dt = h * 0.5
            steps += 1
            if steps > max_steps:
                raise StepSizeError("Krylov evolution exceeded its step budget")
            continue
        v, done = new, done + h
        steps += 1
        if steps > max_steps:
            raise StepSizeError("Krylov evolution exceeded its step budget")
        if err < 0.1 * tol * h / t:
            dt = h * 1.5
    return v


def expectation(psi, H) -> float:
    return float(np.vdot(psi, H @ psi).real / np.vdot(psi, psi).real)
