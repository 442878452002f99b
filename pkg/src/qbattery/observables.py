"""Per-step battery observables: excitations, power, ergotropy, purity.

Powers are reported in units of ``g * eps``; energies and ergotropy carry the
ladder spacing ``eps`` of the :class:`BatterySpec`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvariantViolation, ZeroSteps
from .operators import BatterySpec
from .tolerances import tol


@dataclass(frozen=True)
class StepObservables:
    k: int
    k_tau: float
    n_bar: float
    energy: float
    p_dist: np.ndarray
    beta: complex
    p0: float
    p_top: float
    power: float
    ergotropy: float
    ergotropy_power: float
    purity: float

    def check(self, n_levels_top: int) -> None:
        """Raise :class:`InvariantViolation` if any row invariant fails."""
        if abs(self.p_dist.sum() - 1) > tol(1e-9):
            raise InvariantViolation(f"step {self.k}: populations sum to {self.p_dist.sum()!r}")
        if not -tol(1e-9) <= self.n_bar <= n_levels_top + tol(1e-9):
            raise InvariantViolation(f"step {self.k}: n_bar {self.n_bar!r} off the ladder")
        if abs(self.beta) > 1 + tol(1e-9):
            raise InvariantViolation(f"step {self.k}: |beta| = {abs(self.beta)!r} exceeds 1")
        if np.isfinite(self.ergotropy) and not -tol(1e-9) <= self.ergotropy <= self.energy + tol(1e-9):
            raise InvariantViolation(f"step {self.k}: ergotropy {self.ergotropy!r} outside [0, E]")
        if np.isfinite(self.purity) and not 0 < self.purity <= 1 + tol(1e-12):
            raise InvariantViolation(f"step {self.k}: purity {self.purity!r} outside (0, 1]")


def excitation_stats(state: np.ndarray):
    """Return ``(n_bar, p_dist, p0, p_top, beta)`` with ``beta = Tr[rho B]``."""
    p = np.real(np.diag(state)).copy()
    n_bar = float(np.arange(len(p)) @ p)
    beta = complex(np.sum(np.diag(state, k=-1)))
    return n_bar, p, float(p[0]), float(p[-1]), beta


def charging_power(n_bar_k: float, n_bar_0: float, k: int, tau: float) -> float:
    """Stored-energy power ``(n_k - n_0) / (k tau)``."""
    if k == 0:
        raise ZeroSteps("charging power is undefined at k = 0")
    return (n_bar_k - n_bar_0) / (k * tau)


def passive_populations(state: np.ndarray) -> np.ndarray:
    """Eigenvalues of ``rho`` sorted so the largest sits on the lowest level."""
    herm = (state + np.conj(state.T)) / 2
    r = np.linalg.eigvalsh(herm)
    if r[0] < -tol(1e-8):
        raise InvariantViolation(f"state has negative eigenvalue {r[0]:.3e}")
    # stable sort on -r keeps equal eigenvalues in ascending-level order
    return r[np.argsort(-r, kind="stable")]


def ergotropy(state: np.ndarray, spec: BatterySpec):
    """Return ``(ergotropy, passive_diag)`` for ``H_B = eps * n_hat``."""
    passive = passive_populations(state)
    levels = np.arange(len(passive))
    n_bar = float(np.real(np.diag(state)) @ levels)
    value = spec.energy_spacing * (n_bar - float(passive @ levels))
    return max(value, 0.0), passive


def ergotropy_power(state: np.ndarray, k: int, tau: float, spec: BatterySpec | None = None) -> float:
    """Extractable-energy power in units of ``g * eps``."""
    if k == 0:
        raise ZeroSteps("ergotropy power is undefined at k = 0")
    spec = spec or BatterySpec(state.shape[0] - 1)
    value, _ = ergotropy(state, spec)
    return value / spec.energy_spacing / (k * tau)


def purity(state: np.ndarray) -> float:
    return float(np.real(np.vdot(state, state)))


def observe(state: np.ndarray, k: int, tau: float, spec: BatterySpec, n_bar_0: float,
            spectral: bool = True) -> StepObservables:
    """Bundle every observable for one recorded step.

    Powers are NaN at ``k = 0``; ergotropy columns are NaN when ``spectral``
    is off (skips the eigendecomposition).
    """
    n_bar, p, p0, p_top, beta = excitation_stats(state)
    eps = spec.energy_spacing
    power = charging_power(n_bar, n_bar_0, k, tau) if k > 0 else float("nan")
    if spectral:
        erg, _ = ergotropy(state, spec)
        erg_power = erg / eps / (k * tau) if k > 0 else float("nan")
    else:
        erg = erg_power = float("nan")
    return StepObservables(
        k=k, k_tau=k * tau, n_bar=n_bar, energy=eps * n_bar, p_dist=p, beta=beta,
        p0=p0, p_top=p_top, power=power, ergotropy=erg, ergotropy_power=erg_power,
        purity=purity(state),
    )
