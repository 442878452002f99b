"""Operators and states of the ladder battery and the collective-spin charger.

Basis conventions used throughout the package:

* battery: ``|n>`` for ``n = 0 .. N_B`` in ascending order;
* spin: ``|j, m>`` for ``m = j, j-1, ..., -j`` in descending order, so spin
  index ``s = j - m``;
* joint space: index ``s * (N_B + 1) + n`` (spin-major), i.e. ``np.kron(A, B)``
  for an atom operator ``A`` and a battery operator ``B``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import lgamma, pi

import numpy as np

from .errors import ValidationError
from .tolerances import tol

MAX_JOINT_DIM = 10_000


@dataclass(frozen=True)
class BatterySpec:
    """Uniform energy ladder with levels ``0 .. n_levels_top``."""

    n_levels_top: int
    energy_spacing: float = 1.0

    def __post_init__(self):
        if int(self.n_levels_top) != self.n_levels_top or self.n_levels_top < 1:
            raise ValidationError(f"n_levels_top must be an integer >= 1, got {self.n_levels_top!r}")
        if not self.energy_spacing > 0:
            raise ValidationError(f"energy_spacing must be > 0, got {self.energy_spacing!r}")
        object.__setattr__(self, "n_levels_top", int(self.n_levels_top))
        object.__setattr__(self, "energy_spacing", float(self.energy_spacing))

    @property
    def dim(self) -> int:
        return self.n_levels_top + 1


@dataclass(frozen=True)
class AtomEnsembleSpec:
    """``n_atoms`` identical two-level atoms in a (partially coherent) spin state.

    ``coherence_factor`` scales every off-diagonal element of the coherent spin
    state: 0 gives the incoherent charger, 1 the pure coherent spin state.
    """

    n_atoms: int
    polar_angle: float
    azimuthal_angle: float = 0.0
    coherence_factor: float = 1.0

    def __post_init__(self):
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 1:
            raise ValidationError(f"n_atoms must be an integer >= 1, got {self.n_atoms!r}")
        if not 0.0 <= self.polar_angle <= pi:
            raise ValidationError(f"polar_angle must lie in [0, pi], got {self.polar_angle!r}")
        if not 0.0 <= self.azimuthal_angle < 2 * pi:
            raise ValidationError(f"azimuthal_angle must lie in [0, 2pi), got {self.azimuthal_angle!r}")
        if not 0.0 <= self.coherence_factor <= 1.0:
            raise ValidationError(f"coherence_factor must lie in [0, 1], got {self.coherence_factor!r}")
        object.__setattr__(self, "n_atoms", int(self.n_atoms))

    @property
    def j(self) -> float:
        return self.n_atoms / 2

    @property
    def dim(self) -> int:
        return self.n_atoms + 1

    def m_values(self) -> np.ndarray:
        """Magnetic quantum numbers in basis order, ``j`` down to ``-j``."""
        return self.j - np.arange(self.dim)


def check_joint_dim(battery: BatterySpec, atoms: AtomEnsembleSpec) -> int:
    d = battery.dim * atoms.dim
    if d > MAX_JOINT_DIM:
        raise ValidationError(
            f"joint dimension {d} exceeds the dense-matrix cap {MAX_JOINT_DIM}"
        )
    return d


def build_ladder_ops(spec: BatterySpec):
    """Return ``(B, B_dag, n_hat)`` for the truncated uniform ladder.

    ``B = sum_n |n-1><n|`` has unit matrix elements (not sqrt(n) as for a
    harmonic oscillator), so ``[B, B_dag] = |0><0| - |N_B><N_B|``.
    """
    d = spec.dim
    B = np.eye(d, k=1)
    return B, B.T.copy(), np.diag(np.arange(d, dtype=float))


def build_spin_ops(spec: AtomEnsembleSpec):
    """Return ``(J_plus, J_minus, J_z)`` for spin ``j = n_atoms / 2``."""
    j = spec.j
    m = spec.m_values()
    # J+ |j,m> = sqrt(j(j+1) - m(m+1)) |j,m+1>; m+1 sits one index up.
    coeff = np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1))
    J_plus = np.diag(coeff, k=1)
    return J_plus, J_plus.T.copy(), np.diag(m)


def spin_amplitudes(spec: AtomEnsembleSpec) -> np.ndarray:
    """Coherent-spin-state amplitudes ``d_m`` in basis order.

    Binomial prefactors go through log-gamma so that large ensembles do not
    overflow.
    """
    n = spec.n_atoms
    half = spec.polar_angle / 2
    cos_h, sin_h = np.cos(half), np.sin(half)
    up = np.arange(n, -1, -1)      # j + m
    down = n - up                  # j - m
    log_mag = np.array([0.5 * (lgamma(n + 1) - lgamma(u + 1) - lgamma(n - u + 1)) for u in up])
    with np.errstate(divide="ignore", invalid="ignore"):
        log_mag = (log_mag
                   + np.where(up > 0, up * np.log(abs(cos_h)), 0.0)
                   + np.where(down > 0, down * np.log(abs(sin_h)), 0.0))
    mag = np.exp(log_mag)
    # cos(theta/2), sin(theta/2) >= 0 on [0, pi]; no sign to restore.
    phase = np.exp(1j * down * spec.azimuthal_angle)
    return mag * phase


def coherent_spin_state(spec: AtomEnsembleSpec) -> np.ndarray:
    """Charger density matrix with off-diagonals scaled by ``coherence_factor``.

    Returned as a real array when ``azimuthal_angle == 0``.
    """
    d = spin_amplitudes(spec)
    if spec.azimuthal_angle == 0.0:
        d = d.real
    rho = spec.coherence_factor * np.outer(d, d.conj())
    np.fill_diagonal(rho, np.abs(d) ** 2)
    return rho


def spin_moments(state: np.ndarray):
    """Return ``(<J_z>, <J_->)`` for a spin density matrix of dimension 2j+1."""
    state = np.asarray(state)
    n_atoms = state.shape[0] - 1
    _, J_minus, J_z = build_spin_ops(AtomEnsembleSpec(n_atoms, 0.0))
    jz = float(np.real(np.trace(state @ J_z)))
    jm = complex(np.trace(state @ J_minus))
    return jz, jm


def free_hamiltonian(battery: BatterySpec, atoms: AtomEnsembleSpec) -> np.ndarray:
    """``eps (J_z + n_hat)`` on the joint space."""
    check_joint_dim(battery, atoms)
    _, _, n_hat = build_ladder_ops(battery)
    _, _, J_z = build_spin_ops(atoms)
    eps = battery.energy_spacing
    return eps * (np.kron(J_z, np.eye(battery.dim)) + np.kron(np.eye(atoms.dim), n_hat))


def interaction(battery: BatterySpec, atoms: AtomEnsembleSpec) -> np.ndarray:
    """Coupling ``J_+ B + J_- B_dag`` on the joint space (without the factor g)."""
    check_joint_dim(battery, atoms)
    B, B_dag, _ = build_ladder_ops(battery)
    J_plus, J_minus, _ = build_spin_ops(atoms)
    return np.kron(J_plus, B) + np.kron(J_minus, B_dag)


def hamiltonian(battery: BatterySpec, atoms: AtomEnsembleSpec, coupling: float = 1.0) -> np.ndarray:
    return free_hamiltonian(battery, atoms) + coupling * interaction(battery, atoms)


def check_density_matrix(rho: np.ndarray, *, herm_tol=1e-11, trace_tol=1e-10,
                         eig_tol=1e-9, what="state") -> None:
    """Raise :class:`ValidationError` unless ``rho`` is a valid density matrix."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValidationError(f"{what} must be a square matrix, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > tol(herm_tol):
        raise ValidationError(f"{what} is not Hermitian")
    if abs(np.trace(rho).real - 1) > tol(trace_tol):
        raise ValidationError(f"{what} trace {np.trace(rho).real!r} differs from 1")
    lo = np.linalg.eigvalsh((rho + rho.conj().T) / 2)[0]
    if lo < -tol(eig_tol):
        raise ValidationError(f"{what} has negative eigenvalue {lo:.3e}")


def basis_state(spec: BatterySpec, n: int) -> np.ndarray:
    """``|n><n|`` on the battery ladder."""
    if not 0 <= n <= spec.n_levels_top:
        raise ValidationError(f"level {n} outside ladder 0..{spec.n_levels_top}")
    rho = np.zeros((spec.dim, spec.dim))
    rho[n, n] = 1.0
    return rho
