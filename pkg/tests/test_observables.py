from itertools import permutations
from math import pi

import numpy as np
import pytest
from conftest import random_density, random_unitary
from hypothesis import given, settings
from hypothesis import strategies as st

from qbattery.collision import run_trajectory
from qbattery.errors import InvariantViolation, ZeroSteps
from qbattery.observables import (
    StepObservables,
    charging_power,
    ergotropy,
    ergotropy_power,
    excitation_stats,
    observe,
    passive_populations,
    purity,
)
from qbattery.operators import AtomEnsembleSpec, BatterySpec, basis_state, build_ladder_ops


def brute_force_ergotropy(rho, eps=1.0):
    """Max over every assignment of eigenvalues to levels."""
    r = np.linalg.eigvalsh(rho)
    levels = np.arange(len(r))
    energy = eps * float(np.real(np.diag(rho)) @ levels)
    return max(energy - eps * float(np.array(p) @ levels) for p in permutations(r))


@settings(max_examples=60, deadline=None)
@given(dim=st.integers(2, 6), seed=st.integers(0, 2**32 - 1), rank=st.integers(1, 6),
       eps=st.floats(0.1, 3.0))
def test_ergotropy_equals_best_permutation(dim, seed, rank, eps):
    rng = np.random.default_rng(seed)
    rho = random_density(dim, rng, rank=min(rank, dim))
    value, passive = ergotropy(rho, BatterySpec(dim - 1, eps))
    assert value == pytest.approx(brute_force_ergotropy(rho, eps), abs=1e-10)
    assert np.all(np.diff(passive) <= 0)


@settings(max_examples=60, deadline=None)
@given(dim=st.integers(2, 20), seed=st.integers(0, 2**32 - 1))
def test_ergotropy_between_zero_and_energy(dim, seed):
    rng = np.random.default_rng(seed)
    rho = random_density(dim, rng, rank=int(rng.integers(1, dim + 1)))
    value, _ = ergotropy(rho, BatterySpec(dim - 1))
    energy = float(np.real(np.diag(rho)) @ np.arange(dim))
    assert -1e-12 <= value <= energy + 1e-12


@settings(max_examples=60, deadline=None)
@given(dim=st.integers(1, 12), seed=st.integers(0, 2**32 - 1))
def test_purity_is_unitarily_invariant(dim, seed):
    rng = np.random.default_rng(seed)
    rho = random_density(dim, rng, rank=int(rng.integers(1, dim + 1)))
    U = random_unitary(dim, rng)
    assert abs(purity(U @ rho @ U.conj().T) - purity(rho)) <= 1e-11


def test_simple_ergotropy_values():
    b = BatterySpec(4, energy_spacing=2.0)
    assert ergotropy(basis_state(b, 3), b)[0] == pytest.approx(6.0)
    passive = np.diag([0.5, 0.3, 0.1, 0.1, 0.0])
    assert ergotropy(passive, b)[0] == 0.0
    inverted = np.diag([0.0, 0.1, 0.1, 0.3, 0.5])
    assert ergotropy(inverted, b)[0] == pytest.approx(2.0 * (3.2 - 0.8))


def test_passive_ties_are_deterministic():
    rho = np.diag([0.25, 0.25, 0.25, 0.25])
    np.testing.assert_array_equal(passive_populations(rho), [0.25] * 4)
    with pytest.raises(InvariantViolation):
        passive_populations(np.diag([1.2, -0.2]))


def test_excitation_stats_beta_is_trace_with_lowering_operator(rng):
    rho = random_density(7, rng)
    B, _, _ = build_ladder_ops(BatterySpec(6))
    n_bar, p, p0, p_top, beta = excitation_stats(rho)
    assert beta == pytest.approx(np.trace(rho @ B), abs=1e-15)
    assert p.sum() == pytest.approx(1.0)
    assert p0 == p[0] and p_top == p[-1]
    assert n_bar == pytest.approx(np.trace(rho @ np.diag(np.arange(7))).real)
    assert abs(beta) <= 1


def test_powers_undefined_at_zero_steps():
    with pytest.raises(ZeroSteps):
        charging_power(1.0, 0.0, 0, 0.1)
    with pytest.raises(ZeroSteps):
        ergotropy_power(basis_state(BatterySpec(3), 1), 0, 0.1)
    assert charging_power(3.0, 1.0, 4, 0.5) == pytest.approx(1.0)
    assert ergotropy_power(basis_state(BatterySpec(3), 2), 4, 0.5) == pytest.approx(1.0)


def test_observe_bundle():
    b = BatterySpec(5, energy_spacing=1.5)
    rho = basis_state(b, 2)
    row = observe(rho, 0, 0.1, b, 0.0)
    assert np.isnan(row.power) and np.isnan(row.ergotropy_power)
    row = observe(rho, 4, 0.5, b, 0.0)
    assert row.energy == pytest.approx(3.0) and row.power == pytest.approx(1.0)
    assert row.ergotropy == pytest.approx(3.0) and row.purity == pytest.approx(1.0)
    row.check(5)
    no_spec = observe(rho, 4, 0.5, b, 0.0, spectral=False)
    assert np.isnan(no_spec.ergotropy)


def test_row_invariants_are_enforced():
    good = observe(basis_state(BatterySpec(3), 1), 1, 0.1, BatterySpec(3), 0.0)
    fields = dict(good.__dict__)
    for change in (dict(p_dist=np.array([0.5, 0.6, 0, 0])), dict(n_bar=4.5), dict(ergotropy=-0.1),
                   dict(purity=1.2), dict(beta=1.1j)):
        with pytest.raises(InvariantViolation):
            StepObservables(**{**fields, **change}).check(3)


@pytest.mark.parametrize("c,tau", [(1.0, 0.3), (0.0, 0.9), (0.6, 0.05)])
def test_extractable_power_never_exceeds_stored_power(c, tau):
    traj = run_trajectory(BatterySpec(40), AtomEnsembleSpec(4, pi / 2.5, 0.0, c), tau, 60)
    for row in traj.rows[1:]:
        assert row.ergotropy_power <= row.power + 1e-12
        assert abs(row.p_dist.sum() - 1) <= 1e-9
        assert abs(row.beta) <= 1
