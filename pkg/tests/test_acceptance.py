"""Exit criteria for the package, one test per criterion.

Each test prints a PASS/FAIL line; the lines are repeated in the
"acceptance criteria" section of the pytest summary.
"""

import itertools
import math
import time

import numpy as np
import pytest

from mampc.cli import main
from mampc.controller import (HorizonConfig, _assemble, best_s_sparse,
                              build_difference_matrix, mampc_step, mpc_step)
from mampc.lti import simulate
from mampc.metrics import ClosedLoopLog, sparse_density, tracking_error
from mampc.plants import (PrbsConfig, QuadrupleTank, SofcParams, TANK_NOMINAL_INPUT,
                          activation_loss, prbs)
from mampc.qpcore import OPTIMAL, QpProblem, qp_solve
from mampc.sysid import IoDataset, simulation_fit, subspace_identify

from conftest import random_stable_model
from test_qpcore import box_qp, projected_gradient_box, projected_gradient_dual, random_spd

RUNS = (("mpc", ["--controller", "mpc"]), ("mampc-ns1", ["--controller", "mampc", "--ns", "1"]),
        ("mampc-ns3", ["--controller", "mampc", "--ns", "3"]))


def run_scenario(out, plant):
    """simulate, identify and run MPC plus MAMPC (n_s = 1, 3) through the CLI."""
    src = ["--set", f"experiment.plant={plant}"]
    t0 = time.perf_counter()
    for cmd in ("simulate", "identify"):
        assert main([cmd, "--out", str(out), *src]) == 0
    for label, extra in RUNS:
        assert main(["run", "--out", str(out), *src, *extra]) == 0
    logs = {label: ClosedLoopLog.from_csv((out / label / "log.csv").read_text())
            for label, _ in RUNS}
    return logs, time.perf_counter() - t0


@pytest.fixture(scope="module")
def tank_runs(tmp_path_factory):
    out = tmp_path_factory.mktemp("tank")
    logs, elapsed = run_scenario(out, "tank")
    return out, logs, elapsed


@pytest.fixture(scope="module")
def sofc_runs(tmp_path_factory):
    out = tmp_path_factory.mktemp("sofc")
    logs, elapsed = run_scenario(out, "sofc")
    return out, logs, elapsed


def test_criterion_1_tank_steady_state(criterion):
    t0 = time.perf_counter()
    plant = QuadrupleTank()
    x = np.array([1.0, 1.0, 1.0, 1.0])
    for _ in range(1000):
        x = plant.advance(x, TANK_NOMINAL_INPUT, 10.0)
    err = np.max(np.abs(x - [16.3, 13.7, 6.0, 8.1]))
    elapsed = time.perf_counter() - t0
    criterion(1, err <= 0.1 and elapsed < 10,
              f"tank levels {np.round(x, 3).tolist()} off by {err:.3f} cm (<= 0.1), {elapsed:.2f} s (< 10)")


def test_criterion_2_best_s_sparse(criterion):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(200):
        d = int(rng.integers(1, 13))
        s = int(rng.integers(0, d + 1))
        w = rng.standard_normal(d)
        best, best_err = None, np.inf
        for size in range(s + 1):
            for S in itertools.combinations(range(d), size):
                z = np.zeros(d)
                z[list(S)] = w[list(S)]
                e = np.sum((w - z) ** 2)
                if e < best_err:
                    best, best_err = z, e
        bad += not np.array_equal(best_s_sparse(w, s), best)
    elapsed = time.perf_counter() - t0
    criterion(2, bad == 0 and elapsed < 5,
              f"{200 - bad}/200 match enumeration exactly, {elapsed:.2f} s (< 5)")


def test_criterion_3_qp_correctness(criterion):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst_kkt = worst_obj = 0.0
    for i in range(50):
        d = int(rng.integers(2, 9))
        if i % 2 == 0:
            p, lo, hi = box_qp(rng, d)
            ref = projected_gradient_box(p.H, p.f, lo, hi)
        else:
            A = rng.standard_normal((2 * d, d))
            p = QpProblem(random_spd(rng, d, cond=10), 3 * rng.standard_normal(d), A,
                          rng.uniform(0.2, 1.0, 2 * d))
            ref = projected_gradient_dual(p.H, p.f, p.Aineq, p.bineq)
        sol = qp_solve(p)
        assert sol.status == OPTIMAL
        worst_kkt = max(worst_kkt, sol.kkt_residual)
        worst_obj = max(worst_obj, abs(sol.objective - p.objective(ref)))
    elapsed = time.perf_counter() - t0
    criterion(3, worst_kkt <= 1e-6 and worst_obj <= 1e-6 and elapsed < 30,
              f"worst KKT {worst_kkt:.1e} (<= 1e-6), worst objective gap {worst_obj:.1e} (<= 1e-6), "
              f"{elapsed:.1f} s (< 30)")


def test_criterion_4_descent(criterion, tank_runs, sofc_runs):
    # mampc_step raises on ascent beyond 1e-9, which would have failed the runs
    worst, steps = 0.0, 0
    for _, logs, _ in (tank_runs, sofc_runs):
        for label in ("mampc-ns1", "mampc-ns3"):
            log = logs[label]
            mask = np.array(log.tag) == "mampc"
            steps += int(mask.sum())
            worst = max(worst, float(log.max_ascent[mask].max()))
    criterion(4, steps > 0 and worst <= 1e-9,
              f"{steps} MAMPC steps, largest objective increase {worst:.1e} (<= 1e-9)")


def test_criterion_5_degenerate_equivalence(criterion):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(20):
        mod = random_stable_model(rng, int(rng.integers(2, 5)), 2, 2)
        n_c = int(rng.integers(2, 5))
        n_p = int(rng.integers(n_c, 9))
        n_s = int(rng.integers(1, 3))
        x0, r = rng.standard_normal(mod.n), rng.standard_normal((n_p, 2))
        past = rng.uniform(-1, 1, (n_s, 2))
        lam = float(rng.uniform(0.1, 2.0))
        vacuous = HorizonConfig(n_p=n_p, n_c=n_c, n_s=n_s, s=2 * (n_c + n_s - 1), lam=lam,
                                u_min=-3, u_max=3, eps1=1e-11, max_alt_iter=5000)
        u = mampc_step(mod, vacuous, x0, r, past).u_applied
        worst = max(worst, np.max(np.abs(u - mpc_step(mod, vacuous, x0, r, past[-1]))))
        no_window = vacuous.shifted(n_s=0, mu=0.0, s=1)
        u = mampc_step(mod, no_window, x0, r, np.zeros((0, 2)), u_prev=past[-1]).u_applied
        worst = max(worst, np.max(np.abs(u - mpc_step(mod, no_window, x0, r, past[-1]))))
    criterion(5, worst <= 1e-6, f"largest applied-input gap to MPC {worst:.1e} over 20 plants (<= 1e-6)")


def test_criterion_6_p1_below_p0(criterion):
    rng = np.random.default_rng(0)
    gaps = []
    for _ in range(200):
        n_s = int(rng.integers(0, 3))
        n_c = int(rng.integers(1, 5 - n_s))
        if n_c + n_s < 2:
            n_c = 2 - n_s
        n_p = int(rng.integers(n_c, 6))
        mod = random_stable_model(rng, int(rng.integers(1, 4)), 1, 1)
        Psi = build_difference_matrix(1, n_c, n_s)
        rows = Psi.shape[0]
        cfg = HorizonConfig(n_p=n_p, n_c=n_c, n_s=n_s, s=int(rng.integers(0, rows + 1)),
                            lam=float(rng.uniform(0.1, 2)), u_min=-2, u_max=2, eps1=1e-12,
                            max_alt_iter=5000)
        x0, r = rng.standard_normal(mod.n), rng.standard_normal((n_p, 1))
        past = rng.uniform(-1, 1, (n_s, 1))
        u_prev = past[-1] if n_s else rng.uniform(-1, 1, 1)
        achieved = mampc_step(mod, cfg, x0, r, past, u_prev=u_prev).objective
        # P0: one QP per support of the input changes
        qp = _assemble(mod, cfg, x0, r, past, None, 0.0, u_prev)
        p0 = np.inf
        for S in itertools.combinations(range(rows), cfg.s):
            zero = [i for i in range(rows) if i not in S]
            sol = qp_solve(QpProblem(qp.H, qp.f, qp.Aineq, qp.bineq,
                                     np.vstack([qp.Aeq, Psi[zero]]),
                                     np.concatenate([qp.beq, np.zeros(len(zero))]), qp.offset))
            p0 = min(p0, sol.objective)
        gaps.append(achieved - p0)
    gaps = np.array(gaps)
    bad = int(np.sum(gaps > 1e-8))
    criterion(6, bad == 0,
              f"{200 - bad}/200 instances with achieved objective <= brute-force P0 + 1e-8 "
              f"(largest excess {gaps.max():.2e})")


def trend_metrics(logs, drop=15, threshold=0.1):
    dens = {k: np.array([sparse_density(v, c, threshold, drop) for c in range(v.m)])
            for k, v in logs.items()}
    err = {k: tracking_error(v, drop) for k, v in logs.items()}
    return dens, err


def test_criterion_7_tank_trend(criterion, tank_runs):
    _, logs, elapsed = tank_runs
    dens, err = trend_metrics(logs)
    ordered = np.any((dens["mampc-ns3"] < dens["mampc-ns1"]) & (dens["mampc-ns1"] < dens["mpc"]))
    tracks = all(err[k] <= 3 * err["mpc"] for k in ("mampc-ns1", "mampc-ns3"))
    criterion(7, bool(ordered and tracks and elapsed < 120),
              f"densities mpc {dens['mpc'].round(4).tolist()}, ns1 {dens['mampc-ns1'].round(4).tolist()}, "
              f"ns3 {dens['mampc-ns3'].round(4).tolist()}; errors mpc {err['mpc']:.4f}, "
              f"ns1 {err['mampc-ns1']:.4f}, ns3 {err['mampc-ns3']:.4f} (<= 3x mpc); {elapsed:.1f} s (< 120)")


def test_criterion_8_sofc_trend(criterion, sofc_runs):
    _, logs, elapsed = sofc_runs
    dens, err = trend_metrics(logs)
    ok = all(np.all(dens[k] <= dens["mpc"]) and err[k] <= 3 * err["mpc"]
             for k in ("mampc-ns1", "mampc-ns3"))
    criterion(8, bool(ok and elapsed < 300),
              f"densities mpc {dens['mpc'].round(4).tolist()}, ns1 {dens['mampc-ns1'].round(4).tolist()}, "
              f"ns3 {dens['mampc-ns3'].round(4).tolist()}; errors mpc {err['mpc']:.4f}, "
              f"ns1 {err['mampc-ns1']:.4f}, ns3 {err['mampc-ns3']:.4f} (<= 3x mpc); {elapsed:.1f} s (< 300)")


def test_criterion_9_identification_round_trip(criterion):
    rng = np.random.default_rng(9)
    true = random_stable_model(rng, 4, 2, 2, radius=0.9)
    u = np.column_stack([prbs(PrbsConfig(8, s, 2), 1200) for s in (1, 181)])
    _, y = simulate(true, np.zeros(4), u)
    train = IoDataset(u[:800], y[:800], 1.0, np.zeros(2), np.zeros(2))
    est = subspace_identify(train, order=4)
    markov = np.max(np.abs(est.markov_parameters(20) - true.markov_parameters(20)))
    fit = simulation_fit(est, u[800:], y[800:])
    criterion(9, markov <= 1e-6 and np.all(fit >= 99.0),
              f"Markov error {markov:.1e} (<= 1e-6), held-out fit {np.round(fit, 4).tolist()} % (>= 99)")


def test_criterion_10_activation_continuity(criterion):
    worst = 0.0
    for T in np.linspace(900.0, 1300.0, 401):
        p = SofcParams(T=T)
        below = activation_loss(p.j_0, p)
        above = activation_loss(math.nextafter(p.j_0, math.inf), p)
        worst = max(worst, abs(above - below))
    criterion(10, worst <= 1e-12, f"largest jump at the exchange current density {worst:.1e} V (<= 1e-12)")


def test_criterion_11_determinism(criterion, tank_runs, sofc_runs, tmp_path):
    mismatched = []
    for name, (out, _, _) in (("tank", tank_runs), ("sofc", sofc_runs)):
        rerun = tmp_path / name
        for cmd in ("simulate", "identify"):
            assert main([cmd, "--config", str(out / "mpc" / "config.txt"), "--out", str(rerun)]) == 0
        for label, _ in RUNS:
            assert main(["run", "--config", str(out / label / "config.txt"), "--out", str(rerun)]) == 0
        files = ["dataset.csv", "model.csv", "metrics.csv"] + [f"{lab}/log.csv" for lab, _ in RUNS]
        mismatched += [f"{name}/{f}" for f in files
                       if (out / f).read_bytes() != (rerun / f).read_bytes()]
    criterion(11, not mismatched,
              "all CSVs byte-identical on rerun from the resolved config" if not mismatched
              else f"differing files: {mismatched}")
