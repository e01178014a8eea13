import numpy as np
import pytest

from mampc.lti import simulate
from mampc.plants import PrbsConfig, prbs
from mampc.sysid import (IdentificationError, IoDataset, detrend, observability_svd,
                         select_order, simulation_fit, subspace_identify, vaf)

from conftest import random_stable_model


def prbs_inputs(m, T, hold=1):
    seeds = (1, 181, 77, 200)
    return np.column_stack([prbs(PrbsConfig(8, seeds[i], hold), T) for i in range(m)])


def raw(u, y, dt=1.0):
    return IoDataset(u, y, dt, np.zeros(u.shape[1]), np.zeros(y.shape[1]))


def test_detrend_examples(rng):
    u = np.full((5, 2), 3.0)
    y = np.full((5, 1), -1.0)
    d = detrend(u, y)
    assert not np.any(d.u) and not np.any(d.y)
    np.testing.assert_array_equal(d.mean_u, [3.0, 3.0])
    u = rng.standard_normal((50, 2))
    y = rng.standard_normal((50, 3)) + 4.0
    d = detrend(u, y)
    ur, yr = d.restore()
    assert np.max(np.abs(ur - u)) <= 1e-12 and np.max(np.abs(yr - y)) <= 1e-12
    z = u - u.mean(axis=0)
    np.testing.assert_allclose(detrend(z, y).u, z, atol=1e-15)


def test_dataset_rejects_row_mismatch():
    with pytest.raises(ValueError):
        detrend(np.zeros((4, 1)), np.zeros((5, 1)))


def test_round_trip_two_state(rng):
    true = random_stable_model(rng, 2, 2, 2, radius=0.8)
    u = prbs_inputs(2, 400)
    _, y = simulate(true, np.zeros(2), u)
    est = subspace_identify(raw(u, y), order=2)
    err = np.max(np.abs(est.markov_parameters(20) - true.markov_parameters(20)))
    assert err <= 1e-6


def test_order_selected_by_gap(rng):
    for n in (2, 3, 4):
        true = random_stable_model(rng, n, 2, 2, radius=0.8)
        u = prbs_inputs(2, 600)
        _, y = simulate(true, np.zeros(n), u)
        s, _ = observability_svd(raw(u, y), 10)
        assert select_order(s, 9) == n
        assert subspace_identify(raw(u, y)).n == n


def test_held_out_fit(rng):
    true = random_stable_model(rng, 4, 2, 1, radius=0.9)
    u = prbs_inputs(2, 1000, hold=2)
    _, y = simulate(true, np.zeros(4), u)
    est = subspace_identify(raw(u[:600], y[:600]), order=4)
    assert np.all(simulation_fit(est, u[600:], y[600:]) >= 99.0)


def test_zero_input_rejected():
    with pytest.raises(IdentificationError, match="zero"):
        subspace_identify(raw(np.zeros((300, 2)), np.ones((300, 1))), order=2)


def test_short_data_rejected(rng):
    u = rng.standard_normal((30, 2))
    with pytest.raises(IdentificationError, match="too few"):
        subspace_identify(raw(u, u[:, :1]), order=4)


def test_order_beyond_rank_rejected(rng):
    true = random_stable_model(rng, 2, 1, 1, radius=0.7)
    u = prbs_inputs(1, 500)
    _, y = simulate(true, np.zeros(2), u)
    with pytest.raises(IdentificationError, match="exceeds the data rank"):
        subspace_identify(raw(u, y), order=5, rank_tol=1e-8)


def test_vaf_definition(rng):
    y = rng.standard_normal((100, 2))
    assert np.all(vaf(y, y) == 100.0)
    noisy = y + 0.1 * rng.standard_normal((100, 2))
    expect = 100 * (1 - np.var(y - noisy, axis=0) / np.var(y, axis=0))
    np.testing.assert_allclose(vaf(y, noisy), expect)
