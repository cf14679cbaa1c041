"""Fluctuations of one-body observables around the condensate value.

B_N = N^{-1/2} (dGamma(B) - E[dGamma(B)]) is asymptotically normal with variance
sigma^2 = ||nu||^2, nu = U0 qB phi + conj(V0 qB phi). The first correction is the
third-Hermite term p1(x) = alpha/(6 sigma^3) He3(x/sigma).

In the conventions of ``bogoliubov`` the frame map is a_p -> u_p a_p - v_p a*_{-p},
so V0 = -v and nu(p) = u_p f(p) - v_p conj(f(-p)) with f = qB phi.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .bogoliubov import BogoliubovMap, bogoliubov_map, chi0_state
from .fock import cached_excitation_basis, word_operator
from .hartree import HartreeState
from .ladder import ann, cre
from .model import CutoffModel
from .oracle import bounded_map, fit_power_law, observable_statistics, solve_ground_state
from .perturbation import assemble_H1, chi1_vector, compute_chi1, embed

ALPHA_FLOOR = 1e-9  # rounding floor on alpha error bars (cumulants from eigendecompositions)


class DegenerateObservableError(ValueError):
    pass


class ExtrapolationError(RuntimeError):
    pass


class InadmissibleFunctionError(ValueError):
    pass


def hopping_observable(modes, harmonics=(1,), weights=None) -> np.ndarray:
    """Multiplication by sum_h w_h cos(2 pi h x_1) in mode space: B_{p, p +- h e1} = w_h / 2."""
    weights = weights or [1.0] * len(harmonics)
    M = modes.size
    B = np.zeros((M, M))
    for h, w in zip(harmonics, weights):
        shift = np.zeros(modes.dimension, dtype=np.int64)
        shift[0] = h
        for i, p in enumerate(modes.momenta):
            for s in (shift, -shift):
                j = modes.index(p + s)
                if j is not None:
                    B[j, i] += 0.5 * w
    return B


@dataclass(frozen=True)
class FluctuationObservable:
    B: np.ndarray = field(repr=False)
    qBphi: np.ndarray = field(repr=False)  # over all modes
    nu: np.ndarray = field(repr=False)  # over bmap.modes


def _phi(hartree: HartreeState | None, modes) -> np.ndarray:
    if hartree is not None:
        return np.asarray(hartree.amplitudes, dtype=complex)
    phi = np.zeros(modes.size, dtype=complex)
    phi[modes.zero_index] = 1.0
    return phi


def q_B_phi(B: np.ndarray, phi: np.ndarray) -> np.ndarray:
    Bphi = B @ phi
    return Bphi - np.vdot(phi, Bphi) * phi


def compute_nu_sigma(B: np.ndarray, hartree: HartreeState | None, bmap: BogoliubovMap):
    B = np.asarray(B)
    if np.max(np.abs(B - B.conj().T)) > 1e-12:
        raise ValueError("observable must be hermitian")
    phi = _phi(hartree, bmap.mode_set)
    f = q_B_phi(B, phi)
    nu = np.array([u * f[p] - v * np.conj(f[bmap.partner[int(p)]])
                   for p, u, v in zip(bmap.modes, bmap.u, bmap.v)])
    return FluctuationObservable(B, f, nu), float(np.linalg.norm(nu))


def iid_baseline(B: np.ndarray, phi: np.ndarray) -> float:
    """sigma_iid = sqrt(<phi, B^2 phi> - <phi, B phi>^2)."""
    B, phi = np.asarray(B), np.asarray(phi)
    Bphi = B @ phi
    var = np.vdot(Bphi, Bphi).real - np.vdot(phi, Bphi).real ** 2
    return float(np.sqrt(max(var, 0.0)))


def iid_third_cumulant(B: np.ndarray, phi: np.ndarray) -> float:
    """<phi, (B - b)^3 phi> with b = <phi, B phi>: alpha for independent particles."""
    B, phi = np.asarray(B), np.asarray(phi)
    b = np.vdot(phi, B @ phi).real
    C = B - b * np.eye(len(B))
    return float(np.vdot(phi, C @ C @ C @ phi).real)


# --- predictions --------------------------------------------------------------

@dataclass(frozen=True)
class EdgeworthPrediction:
    sigma: float
    alpha: float
    alpha_error: float
    sigma_iid: float
    higher_orders: bool = False  # p_j, j >= 2, are not available in closed form

    def p0(self, x):
        return np.ones_like(np.asarray(x, dtype=float))

    def p1(self, x):
        y = np.asarray(x, dtype=float) / self.sigma
        return self.alpha / (6.0 * self.sigma**3) * (y**3 - 3.0 * y)

    def density(self, x):
        s = self.sigma
        return np.exp(-0.5 * (np.asarray(x) / s) ** 2) / (np.sqrt(2 * np.pi) * s)


def test_function(spec: dict):
    """Build g from a spec: gaussian_cosine (omega, phase), cubic_window (width), table (x, y)."""
    kind = spec.get("kind")
    if kind == "gaussian_cosine":
        w, ph = float(spec.get("omega", 0.0)), float(spec.get("phase", 0.0))
        return (lambda x: np.exp(-0.5 * np.asarray(x) ** 2) * np.cos(w * np.asarray(x) + ph)), None
    if kind == "cubic_window":
        s = float(spec["width"])
        return (lambda x: np.asarray(x) ** 3 * np.exp(-0.5 * (np.asarray(x) / s) ** 2)), None
    if kind == "table":
        x, y = np.asarray(spec["x"], float), np.asarray(spec["y"], float)
        decay = float(spec.get("decay", 1e-8))
        if len(x) < 2 or np.any(np.diff(x) <= 0) or len(x) != len(y):
            raise InadmissibleFunctionError("table needs increasing x and matching y")
        if max(abs(y[0]), abs(y[-1])) > decay:
            raise InadmissibleFunctionError("tabulated g does not decay to the declared level")
        return (lambda t: np.interp(t, x, y, left=0.0, right=0.0)), (float(x[0]), float(x[-1]))
    raise InadmissibleFunctionError(f"unknown test function kind {kind!r}")


def predict_expectation(g_spec: dict, pred: EdgeworthPrediction, order: int, N: int) -> float:
    """sum_{j <= order} N^{-j/2} int g p_j N(0, sigma^2), adaptive quadrature."""
    if order not in (0, 1):
        raise ValueError("orders above 1 are not available")
    if pred.sigma <= 0:
        raise DegenerateObservableError("sigma = 0")
    g, support = test_function(g_spec)
    lo, hi = support if support else (-np.inf, np.inf)
    total = 0.0
    for j, p in enumerate((pred.p0, pred.p1)[: order + 1]):
        f = lambda x, p=p: float(g(x) * p(x) * pred.density(x))
        val, _ = integrate.quad(f, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=400)
        total += N ** (-0.5 * j) * val
    return float(total)


def characteristic_prediction(k: float, pred: EdgeworthPrediction, order: int, N: int) -> complex:
    base = np.exp(-0.5 * pred.sigma**2 * k**2)
    if order == 0:
        return complex(base)
    return complex(base * (1.0 + N**-0.5 * pred.alpha / 6.0 * (1j * k) ** 3))


# --- oracle curves and alpha --------------------------------------------------

def oracle_samples(model: CutoffModel, B: np.ndarray, N_list, workers=None) -> list:
    def one(N):
        gs = solve_ground_state(model.with_N(N))
        return observable_statistics(gs.vector, gs.basis, B)
    return bounded_map(one, N_list, workers)


def alpha_oracle(model: CutoffModel, B: np.ndarray, N_list, samples=None) -> tuple[float, float]:
    """Intercept of kappa3 sqrt(N) against 1/N; error from a quadratic refit."""
    samples = samples or oracle_samples(model, B, N_list)
    N = np.array(N_list, dtype=float)
    y = np.array([s.cumulants()[2] for s in samples]) * np.sqrt(N)
    if len(N) < 4:
        raise ExtrapolationError("need at least 4 points")
    lin = np.polyfit(1 / N[-4:], y[-4:], 1)[-1]
    quad = np.polyfit(1 / N[-5:], y[-5:], 2)[-1] if len(N) >= 5 else lin
    err = max(abs(lin - quad), ALPHA_FLOOR)
    if not np.isfinite(lin):
        raise ExtrapolationError("kappa3 fit did not converge")
    return float(lin), float(err)


def fluctuation_operators(B: np.ndarray, bmap: BogoliubovMap):
    """X = a*(f) + a(f) and Y = dGamma(q(B - <phi,B phi>)q) as ladder polynomials."""
    modes = bmap.mode_set
    z = modes.zero_index
    f = {int(p): B[int(p), z] for p in bmap.modes}
    X = {}
    for p, c in f.items():
        if c != 0:
            X[(cre(p),)] = X.get((cre(p),), 0) + c
            X[(ann(p),)] = X.get((ann(p),), 0) + np.conj(c)
    b00 = B[z, z].real
    Y = {}
    for p in bmap.modes:
        for q in bmap.modes:
            c = B[int(p), int(q)] - (b00 if p == q else 0.0)
            if c != 0:
                Y[(cre(p), ann(q))] = c
    return X, Y


def alpha_chi1(model: CutoffModel, B: np.ndarray, k_max: int = 8) -> tuple[float, float]:
    """First-order third cumulant from chi0, chi1 and the N^{-1/2} part Y of the observable.

    kappa3 sqrt(N) -> 2Re<chi0, X^3 chi1> + <X^2Y + XYX + YX^2>_0
                      - 3 sigma^2 (2Re<chi0, X chi1> + <Y>_0).
    The error bar is the change under doubling the sector cutoff.
    """
    bmap = bogoliubov_map(model)

    def at(k):
        chi0 = chi0_state(bmap, k_max=k, adaptive=False, threshold=1.0)
        chi = compute_chi1(bmap, assemble_H1(model))
        c1, b1 = chi1_vector(chi, bmap, chi0)
        cap = chi0.basis.cap + 6
        big = cached_excitation_basis(bmap.mode_set, cap)
        x0 = embed(chi0.vector, chi0.basis, big)
        x1 = embed(c1, b1, big)
        X, Y = fluctuation_operators(B, bmap)
        Xm, Ym = word_operator(X, big), word_operator(Y, big)
        X1 = Xm @ x0
        X2 = Xm @ X1
        sigma2 = np.vdot(x0, X2).real
        t_chi = 2 * np.vdot(x0, Xm @ (Xm @ (Xm @ x1))).real - 3 * sigma2 * 2 * np.vdot(x0, Xm @ x1).real
        t_y = (np.vdot(X2, Ym @ x0) + np.vdot(X1, Ym @ X1) + np.vdot(x0, Ym @ X2)).real \
            - 3 * sigma2 * np.vdot(x0, Ym @ x0).real
        return float(t_chi + t_y)

    a, b = at(k_max), at(2 * k_max)
    return b, max(abs(a - b), ALPHA_FLOOR)


def estimate_alpha(model: CutoffModel, B: np.ndarray, strategy: str, N_list=None,
                   samples=None) -> tuple[float, float]:
    bmap = bogoliubov_map(model)
    _, sigma = compute_nu_sigma(B, None, bmap)
    if sigma == 0:
        raise DegenerateObservableError("sigma = 0: the observable does not fluctuate")
    if strategy == "oracle_extrapolation":
        return alpha_oracle(model, B, N_list, samples)
    if strategy == "chi1_perturbative":
        return alpha_chi1(model, B)
    raise ValueError(f"unknown strategy {strategy!r}")


def edgeworth_prediction(model: CutoffModel, B: np.ndarray, alpha: float, alpha_error: float) -> EdgeworthPrediction:
    bmap = bogoliubov_map(model)
    _, sigma = compute_nu_sigma(B, None, bmap)
    return EdgeworthPrediction(sigma, alpha, alpha_error, iid_baseline(B, _phi(None, model.modes)))


def variance_scaling(samples, sigma: float, band: float = 0.2):
    pts = [(s.N, abs(s.cumulants()[1] - sigma**2)) for s in samples]
    return fit_power_law(pts, -1.0, band)

