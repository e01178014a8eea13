"""The compiled kernels and the numpy fallback must agree."""

import os
import subprocess
import sys

import numpy as np
import pytest

from mampc import _backend, _kernels_py
from mampc.plants import QuadrupleTank, SofcStack

compiled = _backend.compiled_kernels
needs_ext = pytest.mark.skipif(compiled is None, reason="compiled extension not built")


def admm_case(rng, d=8, rows=12):
    M = rng.standard_normal((d, d))
    H = M @ M.T + np.eye(d)
    A = rng.standard_normal((rows, d))
    b = rng.uniform(0.5, 1.5, rows)
    f = rng.standard_normal(d)
    G = np.linalg.inv(H + 1e-6 * np.eye(d) + A.T @ A)
    return G, np.zeros(d), A, b, f


@needs_ext
def test_admm_twins_agree(rng):
    G, g0, A, b, f = admm_case(rng)
    out = []
    for mod in (compiled, _kernels_py):
        v = np.zeros(G.shape[0])
        z = np.minimum(A @ v, b)
        y = np.zeros(A.shape[0])
        it, status = mod.admm_iterate(G, g0, A, b, f, v, z, y, 1.0, 1e-6, 1.6, 300, 1e-10,
                                      1000, 1e6)
        out.append((it, status, v, z, y))
    assert out[0][:2] == out[1][:2]
    for a, b_ in zip(out[0][2:], out[1][2:]):
        np.testing.assert_allclose(a, b_, rtol=1e-9, atol=1e-11)


@needs_ext
def test_tank_twins_agree():
    plant = QuadrupleTank()
    prm = plant.params.packed()
    h = plant.steady_state() + np.array([1.0, -2.0, 0.5, 0.0])
    nu = np.array([60.0, 35.0])
    np.testing.assert_allclose(compiled.tank_deriv(h, nu, prm), _kernels_py.tank_deriv(h, nu, prm),
                               rtol=1e-13)
    a, sa = compiled.tank_rk4(h, nu, prm, 1.0, 50)
    b, sb = _kernels_py.tank_rk4(h, nu, prm, 1.0, 50)
    assert sa == sb == 0
    np.testing.assert_allclose(a, b, rtol=1e-12)


@needs_ext
def test_sofc_twins_agree():
    plant = SofcStack()
    prm = plant.params.packed()
    x = plant.steady_state()
    da, sa = compiled.sofc_deriv(x, 1.3, 4.6, 400.0, prm)
    db, sb = _kernels_py.sofc_deriv(x, 1.3, 4.6, 400.0, prm)
    assert sa == sb == 0
    np.testing.assert_allclose(da, db, rtol=1e-11, atol=1e-6)
    a, sa = compiled.sofc_rk4(x, 1.3, 4.6, 400.0, prm, 5e-4, 100)
    b, sb = _kernels_py.sofc_rk4(x, 1.3, 4.6, 400.0, prm, 5e-4, 100)
    assert sa == sb == 0
    np.testing.assert_allclose(a, b, rtol=1e-11)
    # domain errors surface with the same status
    bad = np.array([1.0, 1.0, 1.0, 1.0])
    assert compiled.sofc_deriv(bad, 1.2, 5.0, 400.0, prm)[1] == _kernels_py.sofc_deriv(bad, 1.2, 5.0, 400.0, prm)[1]


def test_fallback_selected_by_environment():
    env = dict(os.environ, MAMPC_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from mampc import _backend; print(_backend.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_pure_python_simulation_matches():
    # a short plant experiment gives the same outputs under either backend
    code = ("from mampc.cli import ExperimentConfig, simulate_experiment;"
            "c = ExperimentConfig.from_pairs([('prbs.length', '40')]);"
            "t, u, y = simulate_experiment(c); print(repr(float(y.sum())))")
    outs = []
    for flag in ("1", "0"):
        env = dict(os.environ, MAMPC_PURE_PYTHON=flag)
        outs.append(subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                                   text=True, check=True).stdout)
    assert float(outs[0]) == pytest.approx(float(outs[1]), rel=1e-12)
