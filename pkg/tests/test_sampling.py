"""Tests for seeded sampling of oriented configurations."""

import math

import numpy as np
import pytest

from opl.graph import OrientedConfiguration, ParameterError, Params, num_pairs
from opl.sampling import RngStream, out_masks_from_states, sample_oriented, sample_states


def test_p_zero_all_absent():
    for seed in (0, 1, 99):
        config = sample_oriented(Params(n=6, p=0), RngStream(seed=seed))
        assert config.num_present == 0


def test_p_one_all_present():
    for seed in (0, 1, 99):
        config = sample_oriented(Params(n=6, p=1), RngStream(seed=seed))
        assert config.num_present == num_pairs(6)


@pytest.mark.parametrize("p", [-0.1, 1.5])
def test_invalid_probability(p):
    with pytest.raises(ParameterError):
        sample_states(4, p, 10, RngStream(seed=0))


def test_same_seed_and_stream_identical():
    first = sample_states(8, 0.4, 500, RngStream(seed=42, key=(3,)))
    second = sample_states(8, 0.4, 500, RngStream(seed=42, key=(3,)))
    assert np.array_equal(first, second)


def test_streams_differ():
    first = sample_states(8, 0.4, 500, RngStream(seed=42, key=(0,)))
    second = sample_states(8, 0.4, 500, RngStream(seed=42, key=(1,)))
    assert not np.array_equal(first, second)


def test_child_and_with_stream_keys():
    rng = RngStream(seed=5, key=(2,))
    assert rng.child(7).key == (2, 7)
    assert rng.with_stream(9).key == (9,)
    assert rng.stream_id == 2


def test_negative_key_rejected():
    with pytest.raises(ParameterError):
        RngStream(seed=0, key=(-1,))


def test_draws_do_not_depend_on_p():
    """One uniform per edge, so the Absent pattern at p is nested in the one at p' > p."""
    low = sample_states(6, 0.2, 300, RngStream(seed=1))
    high = sample_states(6, 0.6, 300, RngStream(seed=1))
    assert np.all((low == 0) | (high != 0))


def test_present_fraction_and_split():
    """n=20, p=0.3, 10^5 draws: present share and forward share within 4 sd."""
    n, p, size = 20, 0.3, 100_000
    states = sample_states(n, p, size, RngStream(seed=2024))
    m = num_pairs(n)
    total = size * m
    present = int((states != 0).sum())
    forward = int((states == 1).sum())
    assert abs(present / total - p) < 4 * math.sqrt(p * (1 - p) / total)
    assert abs(forward / present - 0.5) < 4 * math.sqrt(0.25 / present)


@pytest.mark.slow
def test_three_state_marginals_chi_square():
    """Pearson chi-square over 10^6 edge draws stays below the 10^-6 critical value."""
    p = 0.4
    states = sample_states(3, p, 1_000_000 // 3 + 1, RngStream(seed=77)).ravel()
    observed = np.bincount(states, minlength=3)
    expected = np.array([1 - p, p / 2, p / 2]) * states.size
    chi2 = float(((observed - expected) ** 2 / expected).sum())
    # two degrees of freedom: P(chi2 > x) = exp(-x/2)
    assert chi2 < -2 * math.log(1e-6)


def test_out_masks_match_configuration():
    rng = RngStream(seed=3)
    states = sample_states(5, 0.7, 20, rng)
    masks = out_masks_from_states(states, 5)
    for row in range(20):
        config = OrientedConfiguration(n=5, states=tuple(int(x) for x in states[row]))
        assert tuple(int(x) for x in masks[:, row]) == config.out_masks
