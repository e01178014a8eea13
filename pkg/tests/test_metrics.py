import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mampc.metrics import ClosedLoopLog, sparse_density, summarize, tracking_error


def make_log(u, y=None, r=None, u_init=None):
    u = np.asarray(u, float).reshape(len(u), -1)
    T = u.shape[0]
    y = np.zeros((T, 1)) if y is None else np.asarray(y, float).reshape(T, -1)
    r = np.zeros_like(y) if r is None else np.asarray(r, float).reshape(T, -1)
    u_init = u[0] if u_init is None else np.asarray(u_init, float)
    return ClosedLoopLog(np.arange(T), ["mpc"] * T, np.zeros(T, int), np.zeros(T), r, y, u,
                         u_init, {"note": "test"})


def test_density_example():
    # changes 0.05, 0.2, 0.3, 0.0 with the first taken against u_init
    log = make_log([0.05, 0.25, 0.55, 0.55], u_init=[0.0])
    np.testing.assert_allclose(log.input_changes()[:, 0], [0.05, 0.2, 0.3, 0.0])
    assert sparse_density(log, 0, 0.1) == 0.5


def test_density_constant_input():
    assert sparse_density(make_log(np.ones(10)), 0) == 0.0


def test_tracking_examples():
    r = np.ones((6, 2))
    assert tracking_error(make_log(np.zeros(6), r, r)) == 0.0
    y = r.copy()
    y[:, 1] += 0.3
    assert tracking_error(make_log(np.zeros(6), y, r)) == pytest.approx(0.09)


def test_drop_and_empty_window():
    log = make_log(np.arange(5.0))
    assert sparse_density(log, 0, 0.5, drop=2) == 1.0
    with pytest.raises(ValueError):
        sparse_density(log, 0, 0.1, drop=5)
    with pytest.raises(ValueError):
        tracking_error(log, drop=-1)


def test_monotone_time_index_enforced():
    with pytest.raises(ValueError):
        ClosedLoopLog(np.array([0, 2, 1]), ["mpc"] * 3, np.zeros(3, int), np.zeros(3),
                      np.zeros((3, 1)), np.zeros((3, 1)), np.zeros((3, 1)), np.zeros(1))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10 ** 6), T=st.integers(2, 40), drop=st.integers(0, 1))
def test_metric_properties(seed, T, drop):
    rng = np.random.default_rng(seed)
    u = np.cumsum(rng.standard_normal((T, 2)) * (rng.random((T, 2)) < 0.4), axis=0)
    y = rng.standard_normal((T, 2))
    r = rng.standard_normal((T, 2))
    log = make_log(u, y, r, u_init=np.zeros(2))
    last = 1.0
    for th in (0.0, 0.1, 0.5, 1.0, 5.0):
        d = sparse_density(log, 1, th, drop)
        assert 0.0 <= d <= last
        last = d
    one_liner = np.mean([((y[i] - r[i]) ** 2).sum() for i in range(drop, T)])
    assert abs(tracking_error(log, drop) - one_liner) <= 1e-12


def test_csv_round_trip(rng):
    T = 7
    log = ClosedLoopLog(np.arange(T), ["mpc"] * 3 + ["mampc"] * 4, np.arange(T),
                        rng.standard_normal(T), rng.standard_normal((T, 2)),
                        rng.standard_normal((T, 2)), rng.standard_normal((T, 2)),
                        np.array([50.0, 50.0]), {"horizon.s": "3"}, np.zeros(T))
    text = log.to_csv()
    back = ClosedLoopLog.from_csv(text)
    assert back.to_csv() == text
    assert back.tag == log.tag and back.header == {"horizon.s": "3"}
    np.testing.assert_allclose(back.y, log.y, rtol=1e-11)
    assert summarize(back)["density_u2"] == summarize(log)["density_u2"]


def test_from_csv_rejects_garbage():
    with pytest.raises(ValueError):
        ClosedLoopLog.from_csv("hello\n")
