"""Analytic short-time predictions for the collisional battery.

Covers the drift recursion, the full-charge step estimate, the Catalan /
Bessel closed forms for an initially empty battery, the scaling function
``f(x)`` and the power formulas with their optima.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import ceil, comb, cos, inf, isclose, pi, sin, sqrt

import numpy as np
from scipy import integrate, optimize

from .errors import NonCharging
from .operators import AtomEnsembleSpec, BatterySpec

F_INFINITY = 8 / (3 * pi)

# ---------------------------------------------------------------- Bessel J1

_SERIES_LIMIT = 12.0
_SERIES_TERMS = 80
_ASYMPTOTIC_TERMS = 30


def _j1_series(x: np.ndarray) -> np.ndarray:
    half = x / 2
    q = -half * half
    term = half.copy()
    total = term.copy()
    for m in range(_SERIES_TERMS):
        term = term * q / ((m + 1) * (m + 2))
        total += term
    return total


def _j1_asymptotic(x: np.ndarray) -> np.ndarray:
    # Hankel expansion for nu = 1; terms shrink until k ~ 2x, so the
    # truncation error at x >= 12 is below 1e-11.
    mu = 4.0
    p = np.ones_like(x)
    q = np.zeros_like(x)
    a = 1.0
    term = np.ones_like(x)
    prev = np.full_like(x, np.inf)
    active = np.ones(x.shape, dtype=bool)
    for k in range(1, _ASYMPTOTIC_TERMS):
        a = a * (mu - (2 * k - 1) ** 2) / (k * 8)
        term = a / x ** k
        active &= np.abs(term) < prev
        prev = np.abs(term)
        sign = -1 if (k // 2) % 2 else 1
        contrib = np.where(active, sign * term, 0.0)
        if k % 2:
            q += contrib
        else:
            p += contrib
    w = x - 0.75 * pi
    return np.sqrt(2 / (pi * x)) * (p * np.cos(w) - q * np.sin(w))


def _j1_scalar(x: float) -> float:
    """Scalar twin of the array path (quadrature calls this ~10^3 times per f(x))."""
    ax = abs(x)
    if ax <= _SERIES_LIMIT:
        half = ax / 2
        q = -half * half
        term = total = half
        for m in range(_SERIES_TERMS):
            term *= q / ((m + 1) * (m + 2))
            total += term
            if abs(term) < 1e-17 * abs(total):
                break
    else:
        p, qq, a, prev = 1.0, 0.0, 1.0, inf
        for k in range(1, _ASYMPTOTIC_TERMS):
            a *= (4.0 - (2 * k - 1) ** 2) / (k * 8)
            term = a / ax ** k
            if abs(term) >= prev:
                break
            prev = abs(term)
            signed = -term if (k // 2) % 2 else term
            if k % 2:
                qq += signed
            else:
                p += signed
        w = ax - 0.75 * pi
        total = sqrt(2 / (pi * ax)) * (p * cos(w) - qq * sin(w))
    return -total if x < 0 else total


def bessel_j1(x):
    """First-order Bessel function of the first kind.

    Power series for ``|x| <= 12``, Hankel asymptotic expansion beyond; odd in
    ``x``.  Accepts scalars or arrays.
    """
    if isinstance(x, (float, int, np.floating, np.integer)):
        return _j1_scalar(float(x))
    arr = np.asarray(x, dtype=float)
    ax = np.abs(np.atleast_1d(arr))
    out = np.empty_like(ax)
    small = ax <= _SERIES_LIMIT
    out[small] = _j1_series(ax[small])
    out[~small] = _j1_asymptotic(ax[~small])
    out *= np.sign(np.atleast_1d(arr))
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


# ---------------------------------------------------------------- combinatorics

def catalan(n: int) -> int:
    if n < 0:
        raise ValueError(f"catalan index must be >= 0, got {n}")
    return comb(2 * n, n) // (n + 1)


def vacuum_moment(n: int, alpha: complex) -> float:
    """``<0|(alpha B_dag - conj(alpha) B)^(2n)|0> = (-1)^n |alpha|^(2n) C_n``."""
    return (-1) ** n * abs(alpha) ** (2 * n) * catalan(n)


def generator_moment(power: int, alpha: complex) -> float:
    """Vacuum moment of any power of the displacement generator; odd powers vanish."""
    return 0.0 if power % 2 else vacuum_moment(power // 2, alpha)


def vacuum_amplitude(k, alpha: complex):
    """``<0|D(k alpha)|0> = J1(2 k |alpha|) / (k |alpha|)``, equal to 1 at ``k |alpha| = 0``."""
    x = np.asarray(k, dtype=float) * abs(alpha)
    safe = np.where(x == 0, 1.0, x)
    out = np.where(x == 0, 1.0, bessel_j1(2 * safe) / safe)
    return float(out) if out.ndim == 0 else out


def vacuum_amplitude_series(x: float, terms: int = 20) -> float:
    """Truncated Catalan series for the vacuum amplitude at ``x = k |alpha|``."""
    total, fact = 0.0, 1.0
    for n in range(terms + 1):
        if n:
            fact *= (2 * n - 1) * (2 * n)
        total += (-1) ** n * x ** (2 * n) * catalan(n) / fact
    return total


# ---------------------------------------------------------------- drift

@dataclass(frozen=True)
class DriftParameters:
    """Per-collision gains: ``v`` from population, ``omega`` from coherence.

    ``omega`` is the magnitude ``sin(2 tau) |<J_->|``; ``alpha = i tau <J_->``
    keeps the charger phase.
    """

    v: float
    omega: float
    alpha: complex

    @property
    def omega_complex(self) -> complex:
        if self.alpha == 0:
            return 0j
        return self.omega * (self.alpha / 1j) / abs(self.alpha)


def jminus_mean(atoms: AtomEnsembleSpec) -> complex:
    return atoms.coherence_factor * atoms.j * sin(atoms.polar_angle) * np.exp(-1j * atoms.azimuthal_angle)


def drift_parameters(atoms: AtomEnsembleSpec, tau: float) -> DriftParameters:
    jm = jminus_mean(atoms)
    v = 2 * sin(tau) ** 2 * atoms.j * cos(atoms.polar_angle)
    omega = float(sin(2 * tau) * abs(jm))
    return DriftParameters(v=v, omega=omega, alpha=complex(1j * tau * jm))


def estimate_full_charge_step(battery: BatterySpec, drift: DriftParameters) -> int:
    """``Ceiling[N_B / (v + omega)]``."""
    rate = drift.v + drift.omega
    if not rate > 0:
        raise NonCharging(f"v + omega = {rate:.6g} <= 0: the charger does not charge")
    x = battery.n_levels_top / rate
    r = round(x)
    if isclose(x, r, rel_tol=1e-12):
        return max(int(r), 1)
    return max(ceil(x), 1)


def recursion_no_boundary(n0: float, beta0: complex, drift: DriftParameters, k: int) -> np.ndarray:
    """``n_k`` for ``k = 0..k`` with ``beta`` frozen at ``beta0``."""
    step = drift.v + (drift.omega_complex * np.conj(beta0)).imag
    return n0 + step * np.arange(k + 1)


def n_bar_saturated(drift: DriftParameters, k) -> np.ndarray:
    """Peak position ``(v + omega) k`` reached when ``|Im beta| ~ 1``."""
    return (drift.v + drift.omega) * np.asarray(k)


def beta_sequence(k: int, alpha: complex, beta0: complex = 0j) -> np.ndarray:
    """``beta_0 .. beta_k`` from the lower-boundary sum of squared vacuum amplitudes."""
    amp2 = vacuum_amplitude(np.arange(k), alpha) ** 2 if k else np.zeros(0)
    sums = np.concatenate(([0.0], np.cumsum(amp2)))
    return beta0 - alpha * sums


def _bessel_weights(kmax: int, alpha: complex) -> np.ndarray:
    """``(J1(2 l |alpha|) / l)^2`` for ``l = 0..kmax-1``; ``|alpha|^2`` at ``l = 0``."""
    a = abs(alpha)
    l = np.arange(kmax, dtype=float)
    return (a * vacuum_amplitude(l, alpha)) ** 2 if kmax else np.zeros(0)


def n_bar_discrete_series(kmax: int, alpha: complex) -> np.ndarray:
    """Discrete closed form for ``n_k``, ``k = 0..kmax``, from an empty battery."""
    w = _bessel_weights(max(kmax - 1, 0), alpha)
    l = np.arange(len(w))
    s1 = np.concatenate(([0.0, 0.0], np.cumsum(w)))
    s2 = np.concatenate(([0.0, 0.0], np.cumsum(l * w)))
    k = np.arange(kmax + 1)
    return 2 * ((k - 1) * s1[: kmax + 1] - s2[: kmax + 1])


def n_bar_discrete(k: int, alpha: complex) -> float:
    return float(n_bar_discrete_series(k, alpha)[k])


# ---------------------------------------------------------------- f(x)

def _f_integrand(xp: float, x: float) -> float:
    if xp == 0.0:
        return x
    return (x - xp) * (bessel_j1(2 * xp) / xp) ** 2


def _pieces(x: float, width: float = 2.0):
    edges = np.linspace(0.0, x, max(int(np.ceil(x / width)), 1) + 1)
    return zip(edges[:-1], edges[1:])


def f_of_x(x: float) -> float:
    """``f(x) = (1/x) int_0^x (x - x') [J1(2x')/x']^2 dx'``; ``f(0) = 0``."""
    if x < 0:
        raise ValueError(f"f(x) needs x >= 0, got {x}")
    if x == 0:
        return 0.0
    total = 0.0
    for a, b in _pieces(x):
        val, _ = integrate.quad(_f_integrand, a, b, args=(x,), epsabs=1e-12, epsrel=1e-12, limit=200)
        total += val
    return total / x


def bessel_square_integral(x: float) -> float:
    """``int_0^x [J1(2x')/x']^2 dx'``, which equals ``f(x) + x f'(x)``."""
    total = 0.0
    for a, b in _pieces(x):
        val, _ = integrate.quad(lambda t: 1.0 if t == 0 else (bessel_j1(2 * t) / t) ** 2,
                                a, b, epsabs=1e-12, epsrel=1e-12, limit=200)
        total += val
    return total


def n_bar_integral(k_tau: float, jminus: float) -> float:
    """Continuum closed form ``2 x f(x)`` with ``x = k tau |<J_->|``."""
    if k_tau < 0:
        raise ValueError("k_tau must be >= 0")
    x = k_tau * abs(jminus)
    return 2 * x * f_of_x(x)


# ---------------------------------------------------------------- power

def power_upper_bound(atoms: AtomEnsembleSpec, tau: float, coupling: float = 1.0,
                      energy_spacing: float = 1.0) -> float:
    """``(g eps / tau)(v + omega)``; for ``c = 1`` this is
    ``g eps N_A sin(tau)/tau sin(tau + theta0)``.  Negative values are returned
    as-is (see :func:`is_unphysical`)."""
    if not tau > 0:
        raise ValueError("tau must be > 0")
    d = drift_parameters(atoms, tau)
    return coupling * energy_spacing * (d.v + d.omega) / tau


def is_unphysical(theta0: float, tau: float) -> bool:
    return tau + theta0 > pi


def coherent_power(k_tau: float, atoms: AtomEnsembleSpec, coupling: float = 1.0,
                   energy_spacing: float = 1.0) -> float:
    """``2 g eps |<J_->| f(k tau |<J_->|)``."""
    if not k_tau > 0:
        raise ValueError("k_tau must be > 0")
    jm = abs(jminus_mean(atoms))
    return 2 * coupling * energy_spacing * jm * f_of_x(k_tau * jm)


def incoherent_power(tau: float, atoms: AtomEnsembleSpec, coupling: float = 1.0,
                     energy_spacing: float = 1.0) -> float:
    """``2 g eps <J_z> sin^2(tau) / tau``."""
    if not tau > 0:
        raise ValueError("tau must be > 0")
    return 2 * coupling * energy_spacing * atoms.j * cos(atoms.polar_angle) * sin(tau) ** 2 / tau


def incoherent_optimal_tau() -> float:
    """Root of ``tau cot(tau) = 1/2`` in ``(0, pi)``."""
    return optimize.brentq(lambda t: t * cos(t) - 0.5 * sin(t), 0.5, pi / 2, xtol=1e-15, rtol=1e-15)


def ridge_tau(theta0: float) -> float:
    """``tau`` maximising the upper-bound power at fixed ``theta0`` in ``[0, pi/2]``."""
    if not 0 <= theta0 <= pi / 2:
        raise ValueError("theta0 must lie in [0, pi/2]")
    res = optimize.minimize_scalar(
        lambda t: -sin(t) * sin(t + theta0) / t,
        bounds=(1e-9, pi - theta0), method="bounded", options={"xatol": 1e-12},
    )
    return float(res.x)


def ridge_tau_linear(theta0: float) -> float:
    """Linear ridge law ``tau_0 (1 - 2 theta0 / pi)``."""
    return incoherent_optimal_tau() * (1 - 2 * theta0 / pi)


# ---------------------------------------------------------------- model

@dataclass(frozen=True)
class StepPrediction:
    k: int
    n_bar: float
    beta: complex
    p0: float


class ClosedFormModel:
    """Analytic companion of one parameter point."""

    def __init__(self, battery: BatterySpec, atoms: AtomEnsembleSpec, tau: float):
        self.battery = battery
        self.atoms = atoms
        self.tau = float(tau)
        self.drift = drift_parameters(atoms, tau)

    @property
    def k_est(self) -> int:
        return estimate_full_charge_step(self.battery, self.drift)

    def scaled_time(self, k) -> np.ndarray:
        return np.asarray(k) * self.tau * abs(jminus_mean(self.atoms))

    def predict(self, kmax: int) -> list[StepPrediction]:
        """Empty-battery predictions for ``k = 0..kmax``.

        Drift ``k v`` plus the Bessel law for the coherent part; reduces to
        ``k v`` for an incoherent charger.
        """
        a = self.drift.alpha
        n = n_bar_discrete_series(kmax, a) + self.drift.v * np.arange(kmax + 1)
        beta = beta_sequence(kmax, a)
        p0 = vacuum_amplitude(np.arange(kmax + 1), a) ** 2
        return [StepPrediction(k, float(n[k]), complex(beta[k]), float(min(p0[k], 1.0)))
                for k in range(kmax + 1)]
