import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collapse_lab import (
    GridSpec,
    GrwParams,
    RegionPartition,
    apply_collapse,
    gaussian_packet,
    matter_density,
    region_mass,
    superpose,
)
from collapse_lab.errors import DomainError
from collapse_lab.matter import region_weights


def test_single_particle_density_is_born(cat1):
    fld = matter_density(cat1)
    np.testing.assert_allclose(fld.density, cat1.density(), atol=1e-12)


def test_two_masses_two_lumps():
    g = GridSpec(2, 64, 24.0, masses=(1.0, 2.0))
    fld = matter_density(gaussian_packet(g, [-6.0, 6.0], [1.0, 1.0]))
    assert region_mass(fld, (-12.0, 0.0)) == pytest.approx(1.0, abs=1e-6)
    assert region_mass(fld, (0.0, 12.0)) == pytest.approx(2.0, abs=1e-6)


def test_symmetric_cat_mass_per_region():
    g = GridSpec(2, 64, 24.0)
    ll = gaussian_packet(g, [-6.0, -6.0], [1.0, 1.0])
    rr = gaussian_packet(g, [6.0, 6.0], [1.0, 1.0])
    fld = matter_density(superpose([(1, ll), (1, rr)]))
    assert region_mass(fld, (-12.0, 0.0)) == pytest.approx(1.0, abs=1e-6)
    assert region_mass(fld, (0.0, 12.0)) == pytest.approx(1.0, abs=1e-6)


def test_whole_box_and_empty_interval(cat1):
    fld = matter_density(cat1)
    assert region_mass(fld, (-20.0, 20.0)) == pytest.approx(1.0, abs=1e-9)
    assert region_mass(fld, (3.0, 3.0)) == 0.0


def test_inverted_interval(cat1):
    with pytest.raises(DomainError):
        region_mass(matter_density(cat1), (1.0, -1.0))


def test_post_collapse_right_mass():
    # narrow branches keep the finite-width correction small
    g = GridSpec(1, 1024, 64.0)
    s = 10.0
    params = GrwParams(1.0, 0.01)
    cat = superpose([(1, gaussian_packet(g, [-s / 2], [0.2])), (1, gaussian_packet(g, [s / 2], [0.2]))])
    fld = matter_density(apply_collapse(cat, 1, s / 2, params))
    expected = 1 / (1 + math.exp(-2 * params.alpha * s**2))
    assert region_mass(fld, (0.0, 32.0)) == pytest.approx(expected, rel=0.05)


def test_partition_rules(grid1):
    with pytest.raises(DomainError):
        RegionPartition(((0, 2), (1, 3)))
    with pytest.raises(DomainError):
        RegionPartition(((2, 2),))
    with pytest.raises(DomainError):
        RegionPartition(((-30, 0),)).check_inside(grid1)
    halves = RegionPartition.halves(grid1)
    assert halves.intervals == ((-20.0, 0.0), (0.0, 20.0))


@settings(max_examples=30, deadline=None)
@given(
    masses=st.lists(st.floats(0.1, 5.0), min_size=2, max_size=2),
    centers=st.lists(st.floats(-5, 5), min_size=2, max_size=2),
)
def test_total_mass_is_sum_of_masses(masses, centers):
    g = GridSpec(2, 32, 20.0, masses=tuple(masses))
    fld = matter_density(gaussian_packet(g, centers, [1.5, 1.5]))
    assert fld.total_mass == pytest.approx(sum(masses), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(cut=st.floats(-15, 15), w=st.floats(0.05, 0.95))
def test_weights_complement(cut, w):
    g = GridSpec(1, 128, 40.0)
    psi = superpose([(math.sqrt(w), gaussian_packet(g, [-5], [1])), (math.sqrt(1 - w), gaussian_packet(g, [5], [1]))])
    part = RegionPartition(((-20.0, cut), (cut, 20.0)))
    assert float(np.sum(region_weights(matter_density(psi), part))) == pytest.approx(1.0, abs=1e-9)
