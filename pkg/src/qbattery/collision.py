"""Exact collision evolution of the battery.

The coupling ``J_+ B + J_- B_dag`` conserves ``m + n``, so the per-collision
unitary splits into small blocks, one per value of the conserved quantity.
Inside a block the coupling is a real symmetric tridiagonal matrix with zero
diagonal (a path graph).  For such a matrix ``exp(-i tau T)`` equals a real
orthogonal matrix conjugated by the diagonal phase ``(-i)^n`` on the battery
index.  The channel is therefore built and applied in that "gauge frame",
where Kraus operators are real whenever the charger state is real, which
makes the hot loop run on real BLAS.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal, expm

from .errors import InvariantViolation, ValidationError
from .operators import (
    AtomEnsembleSpec,
    BatterySpec,
    build_ladder_ops,
    build_spin_ops,
    check_joint_dim,
    coherent_spin_state,
    spin_moments,
)
from .tolerances import tol

_DROP_EIGENVALUE = 1e-14
_CLAMP_EIGENVALUE = 1e-10
_FLUSH_BELOW = 1e-200


@lru_cache(maxsize=16)
def _gauge_phase(dim: int) -> np.ndarray:
    """``P[a, b] = i**(a - b)``; the gauge-frame state is ``P * rho``."""
    idx = np.arange(dim)
    P = np.array([1, 1j, -1, -1j])[(idx[:, None] - idx[None, :]) % 4]
    P.flags.writeable = False
    return P


def to_gauge(rho: np.ndarray) -> np.ndarray:
    out = _gauge_phase(rho.shape[0]) * rho
    if not np.any(out.imag):
        return out.real.copy()
    return out


def from_gauge(rho_g: np.ndarray) -> np.ndarray:
    return np.conj(_gauge_phase(rho_g.shape[0])) * rho_g


@dataclass(frozen=True, eq=False)
class UnitaryBlocks:
    """Block-diagonal form of ``exp(-i tau (J_+ B + J_- B_dag))``.

    ``blocks[q]`` acts on the joint basis states ``indices[q]`` ordered by
    ascending battery level.
    """

    battery: BatterySpec
    atoms: AtomEnsembleSpec
    tau: float
    indices: list
    blocks: list
    gauge_blocks: list

    def dense(self) -> np.ndarray:
        d = self.battery.dim * self.atoms.dim
        U = np.zeros((d, d), dtype=complex)
        for idx, blk in zip(self.indices, self.blocks):
            U[np.ix_(idx, idx)] = blk
        return U


def build_unitary_blocks(battery: BatterySpec, atoms: AtomEnsembleSpec, tau: float) -> UnitaryBlocks:
    check_joint_dim(battery, atoms)
    two_j = atoms.n_atoms
    nb = battery.n_levels_top
    J_plus, _, _ = build_spin_ops(atoms)
    # coupling between (s, n) and (s+1, n+1), s = j - m
    hop = np.diag(J_plus, k=1)
    indices, blocks, gauge_blocks = [], [], []
    for q in range(nb + two_j + 1):
        s_lo = max(0, two_j - q)
        s_hi = min(two_j, nb + two_j - q)
        s = np.arange(s_lo, s_hi + 1)
        n = q - two_j + s
        size = len(s)
        if size == 1:
            U = np.ones((1, 1), dtype=complex)
        else:
            w, V = eigh_tridiagonal(np.zeros(size), hop[s_lo:s_hi])
            U = (V * np.exp(-1j * tau * w)) @ V.T
        local = np.arange(size)
        O = U * (1j) ** ((local[:, None] - local[None, :]) % 4)
        indices.append(s * battery.dim + n)
        blocks.append(U)
        gauge_blocks.append(O.real)
    return UnitaryBlocks(battery, atoms, float(tau), indices, blocks, gauge_blocks)


def _transfer_tensor(ub: UnitaryBlocks) -> np.ndarray:
    """``W[s_out, s_in, n_in]`` = gauge-frame element from ``|s_in, n_in>`` to
    ``|s_out, n_in + s_out - s_in>`` (zero when that level is off the ladder)."""
    dim_a, dim_b = ub.atoms.dim, ub.battery.dim
    W = np.zeros((dim_a, dim_a, dim_b))
    for idx, O in zip(ub.indices, ub.gauge_blocks):
        s = idx // dim_b
        n = idx % dim_b
        W[s[:, None], s[None, :], np.broadcast_to(n[None, :], O.shape)] = O
    return W


def _charger_ensemble(rho_a: np.ndarray):
    """Eigen-ensemble ``(p, vectors, diagonal)`` of the charger state."""
    off = rho_a - np.diag(np.diag(rho_a))
    if not np.any(off):
        p = np.diag(rho_a).real.astype(float)
        vecs = np.eye(len(p))
        diagonal = True
    else:
        p, vecs = np.linalg.eigh(rho_a)
        diagonal = False
    if p.min() < -tol(_CLAMP_EIGENVALUE):
        raise ValidationError(f"charger state has negative eigenvalue {p.min():.3e}")
    p = np.clip(p, 0.0, None)
    p = p / p.sum()
    keep = p >= _DROP_EIGENVALUE
    return p[keep], vecs[:, keep], diagonal


class CollisionChannel:
    """Per-collision battery channel for a fixed interaction time and charger.

    Immutable once built; one instance can drive many trajectories.
    """

    def __init__(self, battery: BatterySpec, atoms: AtomEnsembleSpec, tau: float,
                 atom_state: np.ndarray | None = None):
        self.battery = battery
        self.atoms = atoms
        self.tau = float(tau)
        rho_a = coherent_spin_state(atoms) if atom_state is None else np.asarray(atom_state)
        if rho_a.shape != (atoms.dim, atoms.dim):
            raise ValidationError(f"atom state shape {rho_a.shape} does not match 2j+1 = {atoms.dim}")
        self.atom_state = rho_a
        self.blocks = build_unitary_blocks(battery, atoms, tau)
        self._W = _transfer_tensor(self.blocks)
        self._p, self._vecs, self._diagonal = _charger_ensemble(rho_a)
        self._real = not np.iscomplexobj(self._vecs) or not np.any(self._vecs.imag)
        if self._real:
            self._vecs = np.real(self._vecs)

    @property
    def n_kraus(self) -> int:
        return self.atoms.dim * len(self._p)

    @cached_property
    def _gauge_kraus(self) -> np.ndarray:
        """Kraus operators in the gauge frame, shape ``(n_kraus, N, N)``."""
        dim_a, dim_b = self.atoms.dim, self.battery.dim
        r = len(self._p)
        amp = np.sqrt(self._p)[None, :] * self._vecs      # (s_in, i)
        K = np.zeros((dim_a, r, dim_b, dim_b), dtype=float if self._real else complex)
        n = np.arange(dim_b)
        for s_out in range(dim_a):
            for s_in in range(dim_a):
                d = s_out - s_in
                ok = (n + d >= 0) & (n + d < dim_b)
                cols = n[ok]
                K[s_out, :, cols + d, cols] += (amp[s_in, :][None, :] * self._W[s_out, s_in, cols][:, None])
        return K.reshape(dim_a * r, dim_b, dim_b)

    @cached_property
    def _stacked(self):
        """``(K stacked vertically, K^dagger per operator)``."""
        K = self._gauge_kraus
        r, d, _ = K.shape
        return K.reshape(r * d, d), np.ascontiguousarray(np.conj(K).transpose(0, 2, 1))

    @cached_property
    def _shift_weights(self):
        """For a diagonal charger: ``{d: M_d}`` with the channel acting as
        ``rho'[a + d, b + d] += M_d[a, b] rho[a, b]``."""
        dim_a = self.atoms.dim
        full_p = np.zeros(dim_a)
        full_p[np.argmax(self._vecs, axis=0)] = self._p
        out = {}
        for s_out in range(dim_a):
            for s_in in range(dim_a):
                if full_p[s_in] == 0:
                    continue
                w = self._W[s_out, s_in]
                d = s_out - s_in
                M = full_p[s_in] * np.outer(w, w)
                out[d] = out[d] + M if d in out else M
        return out

    @property
    def kraus_ops(self) -> list:
        """Lab-frame Kraus operators ``sqrt(p_i) <m'|U|chi_i>``."""
        phase = np.conj(_gauge_phase(self.battery.dim))
        return [phase * K for K in self._gauge_kraus]

    def apply_gauge(self, rho_g: np.ndarray) -> np.ndarray:
        """One collision on a gauge-frame state (no validation)."""
        if self._diagonal:
            out = self._apply_shift(rho_g)
        else:
            if np.iscomplexobj(rho_g) and self._real:
                out = self._apply_dense(rho_g.real) + 1j * self._apply_dense(rho_g.imag)
            else:
                out = self._apply_dense(rho_g)
            out = np.add(out, np.conj(out.T), order="C")
            out *= 0.5
        # subnormal entries (far-tail amplitudes ~ tau^(2n)) stall BLAS
        out[np.abs(out) < _FLUSH_BELOW] = 0.0
        return out

    def _apply_dense(self, rho):
        # one tall GEMM for every K rho, then accumulate (K rho) K^dagger
        # block by block; cheaper than transposing the stacked product
        Kv, KH = self._stacked
        d = rho.shape[0]
        X = (Kv @ rho).reshape(-1, d, d)
        out = X[0] @ KH[0]
        tmp = np.empty_like(out)
        for Xi, KHi in zip(X[1:], KH[1:]):
            np.matmul(Xi, KHi, out=tmp)
            out += tmp
        return out

    def _apply_shift(self, rho):
        d = rho.shape[0]
        out = np.zeros_like(rho)
        for shift, M in self._shift_weights.items():
            if abs(shift) >= d:
                continue        # cannot move the battery off the ladder
            if shift >= 0:
                out[shift:, shift:] += (M * rho)[: d - shift, : d - shift]
            else:
                out[: d + shift, : d + shift] += (M * rho)[-shift:, -shift:]
        return out

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        return from_gauge(self.apply_gauge(to_gauge(rho)))


def build_channel(battery: BatterySpec, atoms: AtomEnsembleSpec, tau: float,
                  atom_state: np.ndarray | None = None) -> CollisionChannel:
    return CollisionChannel(battery, atoms, tau, atom_state)


def validate_battery_state(rho: np.ndarray, *, spectral: bool = True) -> None:
    """Raise :class:`InvariantViolation` if ``rho`` drifted out of the state space."""
    if not np.all(np.isfinite(rho)):
        raise InvariantViolation("battery state contains non-finite entries")
    herm = np.max(np.abs(rho - np.conj(rho.T)))
    if herm > tol(1e-11):
        raise InvariantViolation(f"battery state not Hermitian (max deviation {herm:.3e})")
    tr = np.trace(rho).real
    if abs(tr - 1) > tol(1e-10):
        raise InvariantViolation(f"battery trace {tr!r} differs from 1")
    if spectral:
        lo = np.linalg.eigvalsh(rho)[0]
        if lo < -tol(1e-9):
            raise InvariantViolation(f"battery state has negative eigenvalue {lo:.3e}")


def apply_collision(state: np.ndarray, channel: CollisionChannel) -> np.ndarray:
    state = np.asarray(state)
    if state.shape != (channel.battery.dim, channel.battery.dim):
        raise ValidationError(
            f"state shape {state.shape} does not match ladder dimension {channel.battery.dim}"
        )
    out = channel(state)
    validate_battery_state(out)
    return out


def apply_collision_joint(state: np.ndarray, atom_state: np.ndarray, unitary: np.ndarray) -> np.ndarray:
    """Reference path: evolve ``rho_B (x) rho_A`` with a dense unitary, trace out atoms."""
    dim_b, dim_a = state.shape[0], atom_state.shape[0]
    joint = np.kron(atom_state, state)
    joint = unitary @ joint @ unitary.conj().T
    return np.einsum("anam->nm", joint.reshape(dim_a, dim_b, dim_a, dim_b))


def displacement_evolve(initial: np.ndarray, atoms: AtomEnsembleSpec, tau: float, k: int) -> np.ndarray:
    """Short-time approximation ``D(k alpha)^dag rho(0) D(k alpha)``.

    ``D(a) = exp(a B_dag - conj(a) B)`` on the truncated ladder and
    ``alpha = i tau <J_->``.
    """
    initial = np.asarray(initial)
    _, jm = spin_moments(coherent_spin_state(atoms))
    a = k * 1j * tau * jm
    if a == 0:
        return initial.copy()
    B, B_dag, _ = build_ladder_ops(BatterySpec(initial.shape[0] - 1))
    D = expm(a * B_dag - np.conj(a) * B)
    return D.conj().T @ initial @ D


# ---------------------------------------------------------------- trajectories

# closed-form agreement bands used for the divergence flag
N_BAR_BAND = 0.03     # fraction of N_B
BETA_BAND = 0.05
SHORT_TIME = 0.1      # largest tau treated as "short-time" for the Bessel law


@dataclass
class Trajectory:
    """Recorded observables of one run plus closed-form companions per row."""

    battery: BatterySpec
    atoms: AtomEnsembleSpec
    tau: float
    rows: list = field(default_factory=list)
    predictions: list = field(default_factory=list)
    divergence: list = field(default_factory=list)
    final_state: np.ndarray | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    @property
    def steps(self) -> np.ndarray:
        return self.column("k")


def _companion(battery, atoms, tau, steps, initial):
    """Closed-form predictions for every k and the window where they apply."""
    from .closed_form import ClosedFormModel, StepPrediction, recursion_no_boundary
    from .errors import NonCharging
    from .observables import excitation_stats

    model = ClosedFormModel(battery, atoms, tau)
    n0, _, p0, _, beta0 = excitation_stats(initial)
    vacuum = abs(p0 - 1) < 1e-12
    if vacuum:
        preds = model.predict(steps)
        try:
            k_est = model.k_est
        except NonCharging:
            k_est = None
        coherent = model.drift.alpha != 0
        if coherent:
            def in_window(k, p_top):
                return tau <= SHORT_TIME and k_est is not None and k <= k_est
        else:
            def in_window(k, p_top):
                return p_top <= 1e-3
    else:
        n = recursion_no_boundary(n0, beta0, model.drift, steps)
        preds = [StepPrediction(k, float(n[k]), beta0, float("nan")) for k in range(steps + 1)]

        def in_window(k, p_top):
            return p_top <= 1e-3 and k == 0
    return preds, in_window


def run_trajectory(battery: BatterySpec, atoms: AtomEnsembleSpec, tau: float, steps: int,
                   initial: np.ndarray | None = None, *, channel: CollisionChannel | None = None,
                   record_every: int = 1, spectral: bool = True) -> Trajectory:
    """Apply the same collision ``steps`` times, recording observables.

    Step 0 and the final step are always recorded; in between every
    ``record_every``-th step.  ``spectral=False`` skips the ergotropy
    eigendecomposition (those columns become NaN).
    """
    from .observables import observe
    from .operators import basis_state

    if steps < 0:
        raise ValidationError(f"steps must be >= 0, got {steps}")
    if record_every < 1:
        raise ValidationError("record_every must be >= 1")
    initial = basis_state(battery, 0) if initial is None else np.asarray(initial)
    if initial.shape != (battery.dim, battery.dim):
        raise ValidationError(f"initial state shape {initial.shape} does not match ladder")
    validate_battery_state(initial)
    channel = channel or CollisionChannel(battery, atoms, tau)
    preds, in_window = _companion(battery, atoms, tau, steps, initial)
    traj = Trajectory(battery, atoms, float(tau))
    n_bar_0 = float(np.real(np.diag(initial)) @ np.arange(battery.dim))

    def record(k, rho):
        validate_battery_state(rho, spectral=False)
        row = observe(rho, k, tau, battery, n_bar_0, spectral=spectral)
        row.check(battery.n_levels_top)
        pred = preds[k]
        off = (abs(pred.n_bar - row.n_bar) > N_BAR_BAND * battery.n_levels_top
               or abs(pred.beta - row.beta) > BETA_BAND)
        traj.rows.append(row)
        traj.predictions.append(pred)
        traj.divergence.append(bool(in_window(k, row.p_top) and off))

    rho_g = to_gauge(initial)
    record(0, initial)
    for k in range(1, steps + 1):
        rho_g = channel.apply_gauge(rho_g)
        if k % record_every == 0 or k == steps:
            record(k, from_gauge(rho_g))
    traj.final_state = from_gauge(rho_g)
    return traj


def evolve(channel: CollisionChannel, initial: np.ndarray, steps: int) -> np.ndarray:
    """Final state after ``steps`` collisions, without recording."""
    rho_g = to_gauge(np.asarray(initial))
    for _ in range(steps):
        rho_g = channel.apply_gauge(rho_g)
    rho = from_gauge(rho_g)
    validate_battery_state(rho)
    return rho
