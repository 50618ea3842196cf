import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collapse_lab import GridSpec, HamiltonianSpec, gaussian_packet, superpose
from collapse_lab.bohm import (
    ks_distance_to_marginal,
    run_bohm,
    sample_quantum_equilibrium,
    velocity_field,
)
from collapse_lab.errors import DomainError, NodeError
from collapse_lab.unitary import Harmonic


def test_harmonic_ground_state_nearly_static(grid1):
    ham = HamiltonianSpec(external=(Harmonic(1.0),))
    psi = gaussian_packet(grid1, [0.0], [math.sqrt(0.5)])
    # the split-step state breathes at order dt**2, which bounds the drift
    traj = run_bohm(psi, ham, np.array([[-1.0], [0.2], [1.7]]), 1.0, 1e-3)
    assert np.max(np.abs(traj.positions - traj.positions[0])) <= 1e-6


def test_real_state_has_no_velocity(grid1):
    psi = gaussian_packet(grid1, [0.0], [1.0])
    q = np.linspace(-3, 3, 41)[:, None]
    assert np.max(np.abs(velocity_field(psi, q))) <= 1e-8


@pytest.mark.parametrize("mass", [1.0, 2.5])
def test_plane_phase_velocity(mass):
    g = GridSpec(1, 256, 40.0, masses=(mass,))
    psi = gaussian_packet(g, [0.0], [2.0], [1.3])
    q = np.linspace(-3, 3, 25)[:, None]
    np.testing.assert_allclose(velocity_field(psi, q)[:, 0], 1.3 / mass, atol=1e-4)


def test_product_state_velocity_factorizes():
    g = GridSpec(2, 64, 20.0)
    psi = gaussian_packet(g, [0.0, 1.0], [1.5, 1.5], [0.7, -0.4])
    q = np.array([[0.3, -1.0], [0.3, 0.4], [0.3, 2.2]])
    v = velocity_field(psi, q)
    assert np.ptp(v[:, 0]) <= 1e-8


def test_node_detected(grid1):
    odd = superpose([(1, gaussian_packet(grid1, [-1.0], [1.0])), (-1, gaussian_packet(grid1, [1.0], [1.0]))])
    with pytest.raises(NodeError):
        velocity_field(odd, [0.0])


def test_delta_like_samples(grid1):
    sigma = 2 * grid1.spacing
    q = sample_quantum_equilibrium(gaussian_packet(grid1, [1.0], [sigma]), 2000, seed=4)
    assert q.shape == (2000, 1)
    # a Gaussian puts 0.27% of draws beyond 3 sigma, so 4 sigma is the honest bound here
    assert np.all(np.abs(q - 1.0) <= 4 * sigma + grid1.spacing / 2)


def test_bimodal_sampling_balanced(cat1):
    n = 5000
    frac = float(np.mean(sample_quantum_equilibrium(cat1, n, seed=8) < 0))
    assert abs(frac - 0.5) <= 3 * math.sqrt(0.25 / n)


def test_gaussian_sample_moments(grid1):
    n = 10_000
    q = sample_quantum_equilibrium(gaussian_packet(grid1, [-2.0], [1.2]), n, seed=9)[:, 0]
    assert abs(q.mean() + 2.0) <= 3 * 1.2 / math.sqrt(n)
    # sd of the sample variance for a normal law is sigma^2 sqrt(2/n)
    assert abs(q.var() - 1.44) <= 3 * 1.44 * math.sqrt(2 / n)


def test_sample_count_checked(grid1):
    with pytest.raises(DomainError):
        sample_quantum_equilibrium(gaussian_packet(grid1, [0], [1]), 0, seed=1)


def test_static_state_keeps_positions(grid1):
    psi = gaussian_packet(grid1, [0.0], [math.sqrt(0.5)])
    q0 = np.array([[-1.0], [0.2], [1.7]])
    traj = run_bohm(psi, HamiltonianSpec.zero(), q0, 1.0, 1e-2)
    assert np.max(np.abs(traj.positions - q0[None])) <= 1e-9


def test_moving_packet_trajectory(grid1):
    psi = gaussian_packet(grid1, [0.0], [3.0], [1.0])
    traj = run_bohm(psi, HamiltonianSpec(), [0.5], 2.0, 1e-2)
    assert traj.single(0)[-1, 0] == pytest.approx(0.5 + 2.0, rel=0.01)
    assert traj.status == ("ok",)


def test_node_abort_is_recorded(grid1):
    odd = superpose([(1, gaussian_packet(grid1, [-1.0], [1.0])), (-1, gaussian_packet(grid1, [1.0], [1.0]))])
    traj = run_bohm(odd, HamiltonianSpec(), np.array([[0.0], [1.0]]), 0.1, 1e-2)
    assert traj.status == ("node_abort", "ok")
    assert np.all(np.isnan(traj.positions[traj.abort_index[0]:, 0]))


def test_ks_distance_small_for_exact_samples(grid1):
    psi = gaussian_packet(grid1, [0.0], [1.0])
    q = sample_quantum_equilibrium(psi, 20_000, seed=1)
    assert ks_distance_to_marginal(q[:, 0], psi) < 0.015
    shifted = gaussian_packet(grid1, [1.0], [1.0])
    assert ks_distance_to_marginal(q[:, 0], shifted) > 0.3


@settings(max_examples=15, deadline=None)
@given(p=st.floats(-3, 3), c=st.floats(-2, 2))
def test_time_reversal_property(p, c):
    g = GridSpec(1, 128, 40.0)
    psi0 = gaussian_packet(g, [0.0], [1.5], [p])
    fwd = run_bohm(psi0, HamiltonianSpec(), [c], 0.5, 1e-2)
    from collapse_lab import evolve

    psi_t = evolve(psi0, HamiltonianSpec(), 0.5, 1e-2)
    back = run_bohm(psi_t, HamiltonianSpec(), fwd.single(0)[-1], 0.5, -1e-2)
    assert back.single(0)[-1, 0] == pytest.approx(c, abs=1e-6)
