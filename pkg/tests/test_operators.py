import warnings
from math import pi

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qbattery.errors import ValidationError
from qbattery.operators import (
    MAX_JOINT_DIM,
    AtomEnsembleSpec,
    BatterySpec,
    basis_state,
    build_ladder_ops,
    build_spin_ops,
    check_density_matrix,
    check_joint_dim,
    coherent_spin_state,
    free_hamiltonian,
    hamiltonian,
    interaction,
    spin_amplitudes,
    spin_moments,
)


def test_ladder_has_unit_elements():
    B, Bd, n_hat = build_ladder_ops(BatterySpec(5))
    assert np.array_equal(B, np.eye(6, k=1))
    assert np.array_equal(Bd, B.T)
    assert np.array_equal(np.diag(n_hat), np.arange(6))


def test_ladder_commutator_is_boundary_projector():
    B, Bd, _ = build_ladder_ops(BatterySpec(7))
    comm = B @ Bd - Bd @ B
    expected = np.zeros((8, 8))
    expected[0, 0], expected[-1, -1] = 1, -1
    assert np.array_equal(comm, expected)


@pytest.mark.parametrize("n_atoms", [1, 2, 5, 10])
def test_spin_algebra(n_atoms):
    spec = AtomEnsembleSpec(n_atoms, 0.3)
    Jp, Jm, Jz = build_spin_ops(spec)
    j = spec.j
    np.testing.assert_allclose(Jp @ Jm - Jm @ Jp, 2 * Jz, atol=1e-12)
    casimir = Jz @ Jz + 0.5 * (Jp @ Jm + Jm @ Jp)
    np.testing.assert_allclose(casimir, j * (j + 1) * np.eye(spec.dim), atol=1e-12)
    # basis runs m = j ... -j
    assert np.diag(Jz)[0] == j and np.diag(Jz)[-1] == -j


@pytest.mark.parametrize("theta,phi", [(0.0, 0.0), (pi / 3, 0.0), (pi / 2, 1.2), (2.0, 4.0), (pi, 0.5)])
def test_coherent_state_points_along_bloch_vector(theta, phi):
    # an oracle independent of the amplitude formula: the state is the top
    # eigenvector of n.J with eigenvalue j
    spec = AtomEnsembleSpec(6, theta, phi)
    Jp, Jm, Jz = build_spin_ops(spec)
    Jx, Jy = (Jp + Jm) / 2, (Jp - Jm) / 2j
    nJ = np.sin(theta) * np.cos(phi) * Jx + np.sin(theta) * np.sin(phi) * Jy + np.cos(theta) * Jz
    d = spin_amplitudes(spec)
    np.testing.assert_allclose(nJ @ d, spec.j * d, atol=1e-12)
    assert np.isclose(np.vdot(d, d).real, 1.0)


def test_coherent_state_moments():
    spec = AtomEnsembleSpec(10, pi / 3, 0.4)
    jz, jm = spin_moments(coherent_spin_state(spec))
    assert np.isclose(jz, 5 * np.cos(pi / 3))
    assert np.isclose(jm, 5 * np.sin(pi / 3) * np.exp(-0.4j))


def test_coherent_state_is_real_without_azimuth():
    assert not np.iscomplexobj(coherent_spin_state(AtomEnsembleSpec(4, 1.0)))


def test_large_ensemble_does_not_overflow():
    spec = AtomEnsembleSpec(400, 1.1)
    d = spin_amplitudes(spec)
    assert np.all(np.isfinite(d))
    assert abs(np.vdot(d, d) - 1) < 1e-10


@pytest.mark.parametrize("theta", [0.0, pi])
def test_poles_raise_no_warnings(theta):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        d = spin_amplitudes(AtomEnsembleSpec(3, theta))
    assert np.isclose(abs(d[0 if theta == 0 else -1]), 1.0)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 8), theta=st.floats(0, pi), phi=st.floats(0, 6.28),
       c=st.floats(0, 1))
def test_partial_coherence_gives_valid_state(n, theta, phi, c):
    rho = coherent_spin_state(AtomEnsembleSpec(n, theta, phi, c))
    check_density_matrix(rho)
    # populations do not depend on c
    ref = np.abs(spin_amplitudes(AtomEnsembleSpec(n, theta, phi))) ** 2
    np.testing.assert_allclose(np.diag(rho).real, ref, atol=1e-14)


def test_incoherent_charger_is_diagonal():
    rho = coherent_spin_state(AtomEnsembleSpec(5, 1.0, 0.0, 0.0))
    assert np.count_nonzero(rho - np.diag(np.diag(rho))) == 0


def test_interaction_conserves_excitations():
    b, a = BatterySpec(6), AtomEnsembleSpec(3, 0.0)
    H0, V = free_hamiltonian(b, a), interaction(b, a)
    np.testing.assert_allclose(H0 @ V - V @ H0, 0, atol=1e-12)
    H = hamiltonian(b, a, coupling=0.7)
    np.testing.assert_allclose(H, H.conj().T)


def test_joint_index_is_spin_major():
    b, a = BatterySpec(3), AtomEnsembleSpec(1, 0.0)
    V = interaction(b, a)
    # J+ B maps |s=1 (m=-1/2), n=1> to |s=0, n=0>
    assert V[0 * 4 + 0, 1 * 4 + 1] == 1.0


@pytest.mark.parametrize("kwargs", [
    dict(n_atoms=0, polar_angle=0.1),
    dict(n_atoms=2, polar_angle=-0.1),
    dict(n_atoms=2, polar_angle=3.2),
    dict(n_atoms=2, polar_angle=0.1, coherence_factor=1.5),
    dict(n_atoms=2, polar_angle=0.1, azimuthal_angle=7.0),
    dict(n_atoms=1.5, polar_angle=0.1),
])
def test_atom_spec_validation(kwargs):
    with pytest.raises(ValidationError):
        AtomEnsembleSpec(**kwargs)


@pytest.mark.parametrize("kwargs", [dict(n_levels_top=0), dict(n_levels_top=3, energy_spacing=0.0)])
def test_battery_spec_validation(kwargs):
    with pytest.raises(ValidationError):
        BatterySpec(**kwargs)


def test_joint_dimension_cap():
    assert check_joint_dim(BatterySpec(1999), AtomEnsembleSpec(4, 0.0)) == MAX_JOINT_DIM
    with pytest.raises(ValidationError):
        check_joint_dim(BatterySpec(2000), AtomEnsembleSpec(4, 0.0))


def test_basis_state_and_density_check():
    rho = basis_state(BatterySpec(4), 2)
    check_density_matrix(rho)
    with pytest.raises(ValidationError):
        basis_state(BatterySpec(4), 5)
    with pytest.raises(ValidationError):
        check_density_matrix(np.diag([1.2, -0.2]))
